#include "fvpop/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <variant>

#include "fvpop/error.hpp"

namespace fvpop {

double density_deviation(const TrajectoryRecord& traj, const Eigen::VectorXd& h_ref, double t0,
                         double span) {
  if (traj.t.empty()) throw ValidationError("empty trajectory record");
  const double eps = 1e-9;
  if (traj.t.front() > t0 + eps || traj.t.back() < t0 + span - eps)
    throw ValidationError("recorded grid does not cover the requested window");
  double sup = 0;
  bool seen = false;
  for (size_t g = 0; g < traj.t.size(); ++g) {
    if (traj.t[g] < t0 - eps || traj.t[g] > t0 + span + eps) continue;
    seen = true;
    sup = std::max(sup, (traj.h[g] - h_ref).lpNorm<1>());
  }
  if (!seen) throw ValidationError("no grid points inside the requested window");
  return sup;
}

double inseparability(const TrajectoryRecord& traj, int fn) {
  if (traj.obs.empty()) throw ValidationError("trajectory record has no observables");
  if (fn < 0 || fn >= traj.obs.front().rows())
    throw ConfigError("test function index out of range");
  double sup = 0;
  for (size_t g = 0; g < traj.obs.size(); ++g) {
    const Eigen::MatrixXd& o = traj.obs[g];
    const Eigen::VectorXd& h = traj.h[g];
    int q = static_cast<int>(h.size());
    for (int i = 0; i < q; ++i)
      for (int j = i + 1; j < q; ++j)
        sup = std::max(sup, std::abs(h[j] * o(fn, i) - h[i] * o(fn, j)));
  }
  return sup;
}

double inseparability_all(const TrajectoryRecord& traj) {
  if (traj.obs.empty()) throw ValidationError("trajectory record has no observables");
  double sup = 0;
  for (int fn = 0; fn < traj.obs.front().rows(); ++fn)
    sup = std::max(sup, inseparability(traj, fn));
  return sup;
}

Eigen::MatrixXd yn_paths(const TrajectoryRecord& traj, int fn) {
  if (traj.obs.empty()) throw ValidationError("trajectory record has no observables");
  if (fn < 0 || fn >= traj.obs.front().rows())
    throw ConfigError("test function index out of range");
  int q = static_cast<int>(traj.h.front().size());
  Eigen::MatrixXd y(traj.t.size(), q);
  for (size_t g = 0; g < traj.t.size(); ++g) {
    double h_total = traj.h[g].sum();
    double obs_total = traj.obs[g].row(fn).sum();
    for (int i = 0; i < q; ++i)
      y(g, i) = traj.obs[g](fn, i) * h_total - traj.h[g][i] * obs_total;
  }
  return y;
}

namespace {

// Clan centroid and mean squared geodesic deviation per domain geometry.
double centroid_msd(const SpatialDomain& dom, const std::vector<const Location*>& pts) {
  if (std::holds_alternative<FiniteSetDomain>(dom))
    return std::numeric_limits<double>::quiet_NaN();
  double acc = 0;
  Location center;
  if (const auto* c = std::get_if<CircleDomain>(&dom)) {
    double sx = 0, sy = 0;
    for (const Location* p : pts) {
      double ang = 2 * M_PI * std::get<double>(*p) / c->circumference;
      sx += std::cos(ang);
      sy += std::sin(ang);
    }
    if (sx == 0 && sy == 0) return std::numeric_limits<double>::quiet_NaN();
    double ang = std::atan2(sy, sx);
    if (ang < 0) ang += 2 * M_PI;
    center = ang * c->circumference / (2 * M_PI);
  } else if (std::holds_alternative<SphereDomain>(dom)) {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const Location* p : pts) mean += std::get<Eigen::Vector3d>(*p);
    if (mean.norm() < 1e-12) return std::numeric_limits<double>::quiet_NaN();
    center = Eigen::Vector3d(mean.normalized());
  } else {
    double mean = 0;
    for (const Location* p : pts) mean += std::get<double>(*p);
    center = mean / static_cast<double>(pts.size());
  }
  for (const Location* p : pts) {
    double d = geodesic_distance(dom, *p, center);
    acc += d * d;
  }
  return acc / static_cast<double>(pts.size());
}

}  // namespace

ClanStatistics clan_statistics(const SpatialDomain& dom, const PopulationSnapshot& state) {
  std::map<double, std::vector<const Location*>> clans;
  int64_t total = 0;
  for (const auto& type : state.types)
    for (const Particle& p : type) {
      clans[p.clan].push_back(&p.loc);
      ++total;
    }
  if (total == 0) throw ValidationError("snapshot holds no particles");
  if (clans.size() == 1 && clans.begin()->first == 0.0 && total > 1)
    throw ValidationError("snapshot was recorded without clan tracking");

  ClanStatistics out;
  std::vector<std::pair<double, const std::vector<const Location*>*>> order;
  order.reserve(clans.size());
  for (const auto& [id, members] : clans)
    order.emplace_back(static_cast<double>(members.size()) / static_cast<double>(total),
                       &members);
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  out.shares.resize(static_cast<int>(order.size()));
  out.dispersions.resize(static_cast<int>(order.size()));
  for (size_t c = 0; c < order.size(); ++c) {
    out.shares[static_cast<int>(c)] = order[c].first;
    // Pairwise mean squared separation equals twice the centroid deviation
    // for a cloud of points (exactly in flat geometry).
    out.dispersions[static_cast<int>(c)] = 2.0 * centroid_msd(dom, *order[c].second);
  }
  out.largest = out.shares[0];
  out.dominant_dispersion = out.dispersions[0];
  return out;
}

Eigen::VectorXd location_shares(const PopulationSnapshot& state) {
  // Exact coordinates as the grouping key; a domain holds one Location
  // alternative throughout, so padding the shorter ones with zeros is safe.
  std::map<std::array<double, 3>, int64_t> groups;
  int64_t total = 0;
  for (const auto& type : state.types)
    for (const Particle& p : type) {
      std::array<double, 3> key{0.0, 0.0, 0.0};
      if (const int* s = std::get_if<int>(&p.loc))
        key[0] = static_cast<double>(*s);
      else if (const double* x = std::get_if<double>(&p.loc))
        key[0] = *x;
      else {
        const Eigen::Vector3d& v = std::get<Eigen::Vector3d>(p.loc);
        key = {v.x(), v.y(), v.z()};
      }
      groups[key] += 1;
      ++total;
    }
  if (total == 0) throw ValidationError("snapshot holds no particles");
  Eigen::VectorXd shares(static_cast<int>(groups.size()));
  int c = 0;
  for (const auto& [key, count] : groups)
    shares[c++] = static_cast<double>(count) / static_cast<double>(total);
  std::sort(shares.begin(), shares.end(), std::greater<double>());
  return shares;
}

namespace {

// Exact two-sided p-value by counting monotone lattice paths that keep
// |i*m - j*n| below the observed statistic's integer numerator; counts are
// rescaled row by row to dodge overflow and compared against C(n+m, n) in
// log space.
double ks_exact_p(int n, int m, int64_t dnum) {
  if (dnum <= 0) return 1.0;
  std::vector<double> w(static_cast<size_t>(m) + 1, 0.0);
  double log_scale = 0.0;
  int64_t N = n, M = m;
  // Row i = 0: only the path running along j, while j*n stays in the band.
  w[0] = 1.0;
  for (int64_t j = 1; j <= M; ++j) w[j] = (j * N < dnum) ? w[j - 1] : 0.0;
  for (int64_t i = 1; i <= N; ++i) {
    if (i * M >= dnum) w[0] = 0.0;
    for (int64_t j = 1; j <= M; ++j) {
      if (std::abs(i * M - j * N) >= dnum) {
        w[j] = 0.0;
        continue;
      }
      w[j] += w[j - 1];
    }
    double peak = *std::max_element(w.begin(), w.end());
    if (peak > 1e250) {
      for (double& v : w) v /= peak;
      log_scale += std::log(peak);
    }
  }
  if (w[m] <= 0.0) return 1.0;
  double log_paths = std::log(w[m]) + log_scale;
  double log_total = std::lgamma(n + m + 1.0) - std::lgamma(n + 1.0) - std::lgamma(m + 1.0);
  double inside = std::exp(log_paths - log_total);
  return std::min(1.0, std::max(0.0, 1.0 - inside));
}

double ks_asymptotic_p(int n, int m, double d) {
  double ne = static_cast<double>(n) * m / (static_cast<double>(n) + m);
  double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  if (lambda < 1e-3) return 1.0;
  double sum = 0;
  for (int k = 1; k <= 100; ++k) {
    double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-12) break;
  }
  return std::min(1.0, std::max(0.0, sum));
}

}  // namespace

KSResult compare_samples(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ConfigError("ks comparison needs nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  KSResult out;
  out.n = static_cast<int>(a.size());
  out.m = static_cast<int>(b.size());
  out.degenerate = a.front() == a.back() || b.front() == b.back();

  // Merge sweep; ties advance both counters before the gap is read.
  int64_t n = out.n, m = out.m;
  int64_t i = 0, j = 0, dnum = 0;
  bool ties = false;
  while (i < n || j < m) {
    double next_a = i < n ? a[i] : std::numeric_limits<double>::infinity();
    double next_b = j < m ? b[j] : std::numeric_limits<double>::infinity();
    double v = std::min(next_a, next_b);
    bool in_a = false, in_b = false;
    while (i < n && a[i] == v) {
      ++i;
      in_a = true;
    }
    while (j < m && b[j] == v) {
      ++j;
      in_b = true;
    }
    if (in_a && in_b) ties = true;
    dnum = std::max(dnum, std::abs(i * m - j * n));
  }
  out.statistic = static_cast<double>(dnum) / (static_cast<double>(n) * m);

  // The path-count null distribution assumes continuity, so tied samples
  // fall back to the asymptotic tail.
  if (!ties && n * m <= 4000000) {
    out.exact = true;
    out.p_value = ks_exact_p(out.n, out.m, dnum);
  } else {
    out.p_value = ks_asymptotic_p(out.n, out.m, out.statistic);
  }
  return out;
}

ProportionEstimate fixation_estimate(int successes, int trials) {
  if (trials <= 0 || successes < 0 || successes > trials)
    throw ConfigError("proportion estimate needs 0 <= successes <= trials, trials > 0");
  ProportionEstimate out;
  out.successes = successes;
  out.trials = trials;
  double nT = trials;
  out.p_hat = successes / nT;
  const double z = 1.959963984540054;  // 97.5% normal quantile
  double z2 = z * z;
  double center = (out.p_hat + z2 / (2 * nT)) / (1 + z2 / nT);
  double half = z * std::sqrt(out.p_hat * (1 - out.p_hat) / nT + z2 / (4 * nT * nT)) / (1 + z2 / nT);
  out.lower = std::max(0.0, center - half);
  out.upper = std::min(1.0, center + half);
  return out;
}

namespace {

// Regularized upper incomplete gamma Q(a, x): power series below a+1,
// Lentz continued fraction above.
double gamma_q(double a, double x) {
  if (x < 0 || a <= 0) throw ConfigError("incomplete gamma arguments out of range");
  if (x == 0) return 1.0;
  double lg = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int n = 0; n < 500; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return 1.0 - sum * std::exp(-x + a * std::log(x) - lg);
  }
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int n = 1; n <= 500; ++n) {
    double an = -n * (n - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - lg) * h;
}

}  // namespace

double chi_square_p(double stat, int dof) {
  if (dof <= 0) throw ConfigError("chi-square needs positive degrees of freedom");
  if (stat < 0) throw ConfigError("chi-square statistic must be nonnegative");
  return std::min(1.0, std::max(0.0, gamma_q(0.5 * dof, 0.5 * stat)));
}

double quantile(std::vector<double> xs, double p) {
  if (xs.empty()) throw ConfigError("quantile of an empty sample");
  if (p < 0 || p > 1) throw ConfigError("quantile level outside [0,1]");
  std::sort(xs.begin(), xs.end());
  double pos = p * (xs.size() - 1);
  size_t lo = static_cast<size_t>(std::floor(pos));
  if (lo + 1 >= xs.size()) return xs.back();
  double frac = pos - static_cast<double>(lo);
  return xs[lo] * (1 - frac) + xs[lo + 1] * frac;
}

StationaritySchedule stationarity_schedule(const EquilibriumData& eq) {
  if (eq.spectral_abscissa >= 0)
    throw ValidationError("stationarity schedule needs a stable flow Jacobian");
  double tau = -1.0 / eq.spectral_abscissa;
  return {5.0 * tau, tau};
}

}  // namespace fvpop
