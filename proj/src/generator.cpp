// Analytic generator evaluation on finite domains: the exact sum, over every
// event the process can perform from a configuration, of rate times the
// observable increment. Used to validate the simulator against the process
// definition at desk scale.

#include "engine_common.hpp"

namespace fvpop {

namespace {

// F(counts with counts[type][site] shifted by delta) - F(counts).
double increment(const MonomialObservable& F, std::vector<std::vector<int64_t>>& counts,
                 int64_t N, double f_before, int type, int site, int64_t delta) {
  counts[type][site] += delta;
  double f_after = F.eval(counts, N);
  counts[type][site] -= delta;
  return f_after - f_before;
}

}  // namespace

double generator_apply(const ModelSpec& spec, const MonomialObservable& F,
                       const std::vector<std::vector<int64_t>>& counts0, int64_t N) {
  const auto* dom = std::get_if<FiniteSetDomain>(&spec.domain);
  if (!dom) throw ConfigError("generator evaluation requires a finite domain");
  int q = spec.q, K = dom->K;
  double dN = static_cast<double>(N);
  auto counts = counts0;

  Eigen::VectorXd h(q);
  for (int i = 0; i < q; ++i) {
    int64_t n = 0;
    for (int64_t c : counts[i]) n += c;
    h[i] = static_cast<double>(n) / dN;
  }
  double f0 = F.eval(counts, N);

  double acc = 0;

  // Births: parent of type i at site s, offspring of type j placed by the
  // dispersal split. Thinning makes the accepted rate exactly
  // n_{i,s} (N beta_ij(h) + b_ij(s,h)).
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j) {
      double beta = spec.beta[i][j].eval(h);
      const Dispersal& d = spec.dispersal_at(i, j);
      double p = d.kind == Dispersal::Kind::Rare ? std::min(1.0, d.c / dN) : 0.0;
      Eigen::VectorXd kern;
      if (p > 0) kern = d.kernel.site_weights(*dom);
      for (int s = 0; s < K; ++s) {
        if (counts[i][s] == 0) continue;
        double b = spec.has_birth_mod() && spec.birth_mod[i][j].present
                       ? spec.birth_mod[i][j].eval_site(s, h)
                       : 0.0;
        double rate = static_cast<double>(counts[i][s]) * (dN * beta + b);
        if (rate == 0) continue;
        if (p <= 0) {
          acc += rate * increment(F, counts, N, f0, j, s, +1);
        } else {
          for (int s2 = 0; s2 < K; ++s2) {
            double w = p * kern[s2] + (s2 == s ? 1.0 - p : 0.0);
            if (w > 0) acc += rate * w * increment(F, counts, N, f0, j, s2, +1);
          }
        }
      }
    }

  // Deaths.
  for (int i = 0; i < q; ++i) {
    double rho = spec.rho[i].eval(h);
    for (int s = 0; s < K; ++s) {
      if (counts[i][s] == 0) continue;
      double dmod = spec.has_death_mod() && spec.death_mod[i].present
                        ? spec.death_mod[i].eval_site(s, h)
                        : 0.0;
      double rate = static_cast<double>(counts[i][s]) * (dN * rho + dmod);
      if (rate != 0) acc += rate * increment(F, counts, N, f0, i, s, -1);
    }
  }

  // Immigration.
  if (spec.has_immigration())
    for (int i = 0; i < q; ++i) {
      double rate = dN * spec.kappa[i].eval(h);
      if (rate <= 0) continue;
      Eigen::VectorXd w = spec.immigration_law[i].site_weights(*dom);
      for (int s = 0; s < K; ++s)
        if (w[s] > 0) acc += rate * w[s] * increment(F, counts, N, f0, i, s, +1);
    }

  // Migration: per-particle jump rates from the generator matrices.
  if (!dom->migration.empty())
    for (int i = 0; i < q; ++i) {
      const Eigen::MatrixXd& Q = dom->migration[i];
      for (int s = 0; s < K; ++s) {
        if (counts[i][s] == 0) continue;
        for (int s2 = 0; s2 < K; ++s2) {
          if (s2 == s || Q(s, s2) <= 0) continue;
          double rate = static_cast<double>(counts[i][s]) * Q(s, s2);
          counts[i][s] -= 1;
          counts[i][s2] += 1;
          acc += rate * (F.eval(counts, N) - f0);
          counts[i][s] += 1;
          counts[i][s2] -= 1;
        }
      }
    }

  return acc;
}

}  // namespace fvpop
