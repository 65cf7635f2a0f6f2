#include "fvpop/model.hpp"

#include <cmath>
#include <sstream>

#include "fvpop/error.hpp"
#include "fvpop/flow.hpp"

namespace fvpop {

double SpatialField::eval(const SpatialDomain& dom, const Location& loc,
                          const Eigen::VectorXd& h) const {
  if (!present) return 0.0;
  if (std::get_if<FiniteSetDomain>(&dom)) return eval_site(std::get<int>(loc), h);
  double prof = 0.0;
  for (int k = 0; k < profile.size(); ++k)
    if (profile[k] != 0.0) prof += profile[k] * test_fn_eval(dom, k, loc);
  return h_poly.eval(h) * prof;
}

double SpatialField::eval_site(int site, const Eigen::VectorXd& h) const {
  if (!present) return 0.0;
  return site_polys[site].eval(h);
}

bool ModelSpec::has_birth_mod() const {
  for (const auto& row : birth_mod)
    for (const auto& f : row)
      if (f.present) return true;
  return false;
}

bool ModelSpec::has_death_mod() const {
  for (const auto& f : death_mod)
    if (f.present) return true;
  return false;
}

bool ModelSpec::has_dispersal() const {
  for (const auto& row : dispersal)
    for (const auto& d : row)
      if (d.kind != Dispersal::Kind::None) return true;
  return false;
}

namespace {
const Dispersal kNoDispersal{};
}

const Dispersal& ModelSpec::dispersal_at(int i, int j) const {
  if (dispersal.empty()) return kNoDispersal;
  return dispersal[i][j];
}

double ModelSpec::birth_mod_sup(int i, int j) const {
  if (birth_mod.empty() || !birth_mod[i][j].present) return 0.0;
  return birth_mod[i][j].sup_bound;
}

double ModelSpec::death_mod_sup(int i) const {
  if (death_mod.empty() || !death_mod[i].present) return 0.0;
  return death_mod[i].sup_bound;
}

Eigen::VectorXd PopulationSnapshot::densities() const {
  Eigen::VectorXd h(types.size());
  for (size_t i = 0; i < types.size(); ++i)
    h[i] = static_cast<double>(types[i].size()) / static_cast<double>(N);
  return h;
}

int64_t PopulationSnapshot::total_count() const {
  int64_t n = 0;
  for (const auto& v : types) n += static_cast<int64_t>(v.size());
  return n;
}

const ValidationReport::Item* ValidationReport::find(const std::string& name) const {
  for (const auto& it : items)
    if (it.name == name) return &it;
  return nullptr;
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (const auto& it : items)
    os << (it.pass ? "  ok   " : "  FAIL ") << "(" << it.code << ") " << it.name
       << (it.detail.empty() ? "" : ": " + it.detail) << "\n";
  return os.str();
}

namespace {

// Sample points of the density box [0, H_max]^q used for nonnegativity and
// declared-bound checks; includes corners via the endpoints.
std::vector<Eigen::VectorXd> density_grid(const ModelSpec& spec, int per_dim) {
  std::vector<Eigen::VectorXd> pts;
  int q = spec.q;
  std::vector<int> idx(q, 0);
  auto value = [&](int k) { return spec.H_max * k / (per_dim - 1); };
  while (true) {
    Eigen::VectorXd h(q);
    for (int i = 0; i < q; ++i) h[i] = value(idx[i]);
    pts.push_back(h);
    int d = 0;
    while (d < q && ++idx[d] == per_dim) idx[d++] = 0;
    if (d == q) break;
  }
  return pts;
}

// Strong connectivity of the off-diagonal support of A via boolean closure.
bool irreducible(const Eigen::MatrixXd& A, double tol) {
  int q = static_cast<int>(A.rows());
  if (q == 1) return true;
  std::vector<std::vector<bool>> reach(q, std::vector<bool>(q, false));
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j) reach[i][j] = (i == j) || std::abs(A(i, j)) > tol;
  for (int k = 0; k < q; ++k)
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < q; ++j)
        if (reach[i][k] && reach[k][j]) reach[i][j] = true;
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j)
      if (!reach[i][j]) return false;
  return true;
}

std::string vec_str(const Eigen::VectorXd& v) {
  std::ostringstream os;
  os << "[";
  for (int i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << "]";
  return os.str();
}

}  // namespace

ValidationReport validate_model(const ModelSpec& spec, const ValidationOptions& opts) {
  ValidationReport rep;
  auto add = [&](const std::string& code, const std::string& name, bool pass,
                 const std::string& detail) {
    rep.items.push_back({code, name, pass, detail});
    return pass;
  };

  // Shape checks come first; a malformed spec is a config error, not a
  // validation verdict.
  int q = spec.q;
  if (q < 1) throw ConfigError("q must be at least 1");
  if (static_cast<int>(spec.beta.size()) != q || static_cast<int>(spec.rho.size()) != q)
    throw ConfigError("beta must be q x q and rho length q");
  for (const auto& row : spec.beta)
    if (static_cast<int>(row.size()) != q) throw ConfigError("beta must be q x q");
  if (spec.H_max <= 0) throw ConfigError("H_max must be positive");
  if (const auto* f = std::get_if<FiniteSetDomain>(&spec.domain)) {
    if (f->K < 1) throw ConfigError("finite domain needs at least one site");
    if (!f->migration.empty() && static_cast<int>(f->migration.size()) != q)
      throw ConfigError("migration needs one generator per type");
    for (const auto& Q : f->migration) {
      if (Q.rows() != f->K || Q.cols() != f->K) throw ConfigError("migration generator must be K x K");
      for (int a = 0; a < f->K; ++a) {
        double rowsum = 0;
        for (int b = 0; b < f->K; ++b) {
          if (a != b && Q(a, b) < 0) throw ConfigError("migration rates must be nonnegative");
          rowsum += Q(a, b);
        }
        if (std::abs(rowsum) > 1e-12) throw ConfigError("migration generator rows must sum to zero");
      }
    }
  }
  {
    const std::vector<double>* D = nullptr;
    if (const auto* c = std::get_if<CircleDomain>(&spec.domain)) {
      if (c->circumference <= 0) throw ConfigError("circle circumference must be positive");
      D = &c->diffusion;
    } else if (const auto* s = std::get_if<SphereDomain>(&spec.domain)) {
      if (s->radius <= 0) throw ConfigError("sphere radius must be positive");
      D = &s->diffusion;
    } else if (const auto* iv = std::get_if<IntervalDomain>(&spec.domain)) {
      D = &iv->diffusion;
    }
    if (D) {
      if (static_cast<int>(D->size()) != q)
        throw ConfigError("diffusion needs one coefficient per type");
      // Zero is allowed so a frozen coordinate can serve as a trait label.
      for (double d : *D)
        if (d < 0) throw ConfigError("diffusion coefficients must be nonnegative");
    }
  }
  if (spec.has_immigration()) {
    if (static_cast<int>(spec.kappa.size()) != q || static_cast<int>(spec.immigration_law.size()) != q)
      throw ConfigError("immigration needs kappa and a source law per type");
  }

  auto grid = density_grid(spec, opts.grid_per_dim);

  // (D) rate admissibility on the density box: polynomial rates are analytic
  // by construction; check nonnegativity, declared sup bounds, and the
  // immigration growth bound on the grid.
  {
    bool ok = true;
    std::string detail;
    for (const auto& h : grid) {
      for (int i = 0; i < q && ok; ++i) {
        if (spec.rho[i].eval(h) < 0) {
          ok = false;
          detail = "rho[" + std::to_string(i) + "] negative at h = " + vec_str(h);
        }
        for (int j = 0; j < q && ok; ++j)
          if (spec.beta[i][j].eval(h) < 0) {
            ok = false;
            detail = "beta[" + std::to_string(i) + "][" + std::to_string(j) +
                     "] negative at h = " + vec_str(h);
          }
      }
      if (!ok) break;
    }
    add("D", "rate nonnegativity on density box", ok, detail);
  }

  if (spec.has_birth_mod() || spec.has_death_mod()) {
    bool ok = true;
    std::string detail;
    // Sup bounds are declared; verify them against samples over the box and
    // the domain (sites, or a coarse location grid on continuous domains).
    std::vector<Location> locs;
    if (const auto* f = std::get_if<FiniteSetDomain>(&spec.domain)) {
      for (int s = 0; s < f->K; ++s) locs.push_back(s);
    } else if (const auto* c = std::get_if<CircleDomain>(&spec.domain)) {
      for (int k = 0; k < 64; ++k) locs.push_back(c->circumference * k / 64.0);
    } else if (std::get_if<SphereDomain>(&spec.domain)) {
      for (int k = 0; k < 64; ++k) {
        double z = -1.0 + 2.0 * (k + 0.5) / 64.0;
        double phi = 2.399963229728653 * k;  // golden-angle spiral
        double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        locs.push_back(Eigen::Vector3d(r * std::cos(phi), r * std::sin(phi), z));
      }
    } else {
      for (int k = 0; k < 65; ++k) locs.push_back(k / 64.0);
    }
    auto check_field = [&](const SpatialField& f, const std::string& label) {
      if (!f.present) return;
      for (const auto& h : grid)
        for (const auto& x : locs) {
          double v = std::abs(f.eval(spec.domain, x, h));
          if (v > f.sup_bound * (1 + 1e-12) && ok) {
            ok = false;
            detail = label + " exceeds declared bound (" + std::to_string(v) + " > " +
                     std::to_string(f.sup_bound) + ")";
          }
        }
    };
    for (int i = 0; i < q; ++i) {
      if (!spec.birth_mod.empty())
        for (int j = 0; j < q; ++j)
          check_field(spec.birth_mod[i][j], "birth_mod[" + std::to_string(i) + "][" + std::to_string(j) + "]");
      if (!spec.death_mod.empty())
        check_field(spec.death_mod[i], "death_mod[" + std::to_string(i) + "]");
    }
    add("D", "declared sup bounds on rate perturbations", ok, detail);
  }

  if (spec.has_immigration()) {
    bool ok = true;
    std::string detail;
    for (const auto& h : grid)
      for (int i = 0; i < q; ++i) {
        double k = spec.kappa[i].eval(h);
        if (k < 0) {
          ok = false;
          detail = "kappa[" + std::to_string(i) + "] negative at h = " + vec_str(h);
        } else if (k > spec.kappa_growth * (1.0 + h.lpNorm<1>()) * (1 + 1e-12)) {
          ok = false;
          detail = "kappa[" + std::to_string(i) + "] exceeds declared growth bound at h = " + vec_str(h);
        }
      }
    add("D", "immigration intensity bounds", ok, detail);
    for (int i = 0; i < q; ++i) {
      std::string why;
      if (!spec.immigration_law[i].valid_for(spec.domain, &why))
        add("D", "immigration law type " + std::to_string(i), false, why);
    }
  }

  if (spec.has_dispersal()) {
    bool ok = true;
    std::string detail;
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < q; ++j) {
        const Dispersal& d = spec.dispersal_at(i, j);
        if (d.kind == Dispersal::Kind::Rare) {
          std::string why;
          if (d.c < 0) {
            ok = false;
            detail = "rare dispersal rate must be nonnegative";
          } else if (!d.kernel.valid_for(spec.domain, &why)) {
            ok = false;
            detail = why;
          }
        } else if (d.kind == Dispersal::Kind::Local) {
          if (std::get_if<FiniteSetDomain>(&spec.domain)) {
            ok = false;
            detail = "local dispersal needs a continuous domain";
          } else if (d.scale < 0) {
            ok = false;
            detail = "local dispersal scale must be nonnegative";
          }
        }
      }
    add("D", "dispersal mechanism admissibility", ok, detail);
  }

  // Initial condition shape.
  {
    bool ok = spec.init.h0.size() == q && static_cast<int>(spec.init.placement.size()) == q;
    std::string detail = ok ? "" : "initial condition needs h0 and a placement law per type";
    if (ok && spec.init.h0.minCoeff() < 0) {
      ok = false;
      detail = "initial densities must be nonnegative";
    }
    if (ok && spec.init.h0.sum() > spec.H_max) {
      ok = false;
      detail = "initial total density exceeds H_max";
    }
    if (ok)
      for (int i = 0; i < q; ++i) {
        std::string why;
        if (!spec.init.placement[i].valid_for(spec.domain, &why)) {
          ok = false;
          detail = "placement law type " + std::to_string(i) + ": " + why;
        }
      }
    add("D", "initial condition", ok, detail);
  }

  bool structural_ok = true;
  for (const auto& it : rep.items) structural_ok = structural_ok && it.pass;

  if (opts.quick || !structural_ok) {
    rep.accepted = structural_ok && opts.quick;
    return rep;
  }

  // (A) equilibrium existence, (B) linear stability, (C) irreducibility.
  EquilibriumData eq;
  bool have_eq = false;
  try {
    eq = find_equilibrium(spec);
    have_eq = true;
    add("A", "nonzero stable equilibrium of the density flow", true,
        "h_eq = " + vec_str(eq.h_eq));
  } catch (const std::exception& e) {
    add("A", "nonzero stable equilibrium of the density flow", false, e.what());
  }
  if (have_eq) {
    add("B", "linearized drift is stable at equilibrium", eq.spectral_abscissa < -1e-10,
        "spectral abscissa = " + std::to_string(eq.spectral_abscissa));
    add("C", "interaction matrix irreducible at equilibrium", irreducible(eq.A_eq, 1e-12), "");
    bool simple = eq.sv_min < 1e-8 && eq.sv_second > 1e-4;
    add("C", "simple null direction of the interaction matrix", simple,
        "sv_min = " + std::to_string(eq.sv_min) + ", sv_second = " + std::to_string(eq.sv_second));
  }

  rep.accepted = true;
  for (const auto& it : rep.items) rep.accepted = rep.accepted && it.pass;
  return rep;
}

}  // namespace fvpop
