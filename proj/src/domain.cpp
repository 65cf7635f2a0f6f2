#include "fvpop/domain.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fvpop {

namespace {
constexpr double kPi = std::numbers::pi;

double wrap_position(double x, double L) {
  double y = std::fmod(x, L);
  if (y < 0) y += L;
  // fmod can return L itself after rounding when x is a tiny negative.
  if (y >= L) y -= L;
  return y;
}

// Fold onto [0,1] with reflections at both ends (period-2 triangle wave).
double fold_unit(double x) {
  double y = std::fmod(x, 2.0);
  if (y < 0) y += 2.0;
  return y <= 1.0 ? y : 2.0 - y;
}
}  // namespace

bool location_valid(const SpatialDomain& dom, const Location& loc, std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (const auto* f = std::get_if<FiniteSetDomain>(&dom)) {
    const int* s = std::get_if<int>(&loc);
    if (!s) return fail("finite-set location must be a site index");
    if (*s < 0 || *s >= f->K) return fail("site index out of range");
    return true;
  }
  if (const auto* c = std::get_if<CircleDomain>(&dom)) {
    const double* x = std::get_if<double>(&loc);
    if (!x) return fail("circle location must be a coordinate");
    if (!(*x >= 0.0 && *x < c->circumference)) return fail("circle coordinate out of [0, circumference)");
    return true;
  }
  if (std::get_if<SphereDomain>(&dom)) {
    const Eigen::Vector3d* u = std::get_if<Eigen::Vector3d>(&loc);
    if (!u) return fail("sphere location must be a 3-vector");
    if (std::abs(u->norm() - 1.0) > 1e-12) return fail("sphere location must have unit norm within 1e-12");
    return true;
  }
  const double* x = std::get_if<double>(&loc);
  if (!x) return fail("interval location must be a coordinate");
  if (!(*x >= 0.0 && *x <= 1.0)) return fail("interval coordinate out of [0,1]");
  return true;
}

double geodesic_distance(const SpatialDomain& dom, const Location& a, const Location& b) {
  if (std::get_if<FiniteSetDomain>(&dom)) {
    return std::get<int>(a) == std::get<int>(b) ? 0.0 : 1.0;
  }
  if (const auto* c = std::get_if<CircleDomain>(&dom)) {
    double d = std::abs(std::get<double>(a) - std::get<double>(b));
    return std::min(d, c->circumference - d);
  }
  if (const auto* s = std::get_if<SphereDomain>(&dom)) {
    double dot = std::get<Eigen::Vector3d>(a).dot(std::get<Eigen::Vector3d>(b));
    dot = std::clamp(dot, -1.0, 1.0);
    return s->radius * std::acos(dot);
  }
  return std::abs(std::get<double>(a) - std::get<double>(b));
}

double circle_advance(const CircleDomain& d, double x, double var, Rng& rng) {
  if (var <= 0.0) return x;
  return wrap_position(x + rng.normal(0.0, std::sqrt(var)), d.circumference);
}

double interval_advance(double x, double var, Rng& rng) {
  if (var <= 0.0) return x;
  return fold_unit(x + rng.normal(0.0, std::sqrt(var)));
}

void sphere_tangent_basis(const Eigen::Vector3d& u, Eigen::Vector3d& e1, Eigen::Vector3d& e2) {
  // Axis least aligned with u keeps the cross product well conditioned.
  int k = 0;
  if (std::abs(u[1]) < std::abs(u[k])) k = 1;
  if (std::abs(u[2]) < std::abs(u[k])) k = 2;
  Eigen::Vector3d a = Eigen::Vector3d::Zero();
  a[k] = 1.0;
  e1 = u.cross(a).normalized();
  e2 = u.cross(e1);
}

Eigen::Vector3d sphere_advance(const SphereDomain& d, const Eigen::Vector3d& u, double var,
                               Rng& rng) {
  if (var <= 0.0) return u;
  // Work in angular variance on the unit sphere.
  double vang = var / (d.radius * d.radius);
  constexpr double kMaxStep = 2.5e-3;
  int n = std::max(1, static_cast<int>(std::ceil(vang / kMaxStep)));
  double step = vang / n;
  Eigen::Vector3d p = u;
  double sd = std::sqrt(step);
  for (int i = 0; i < n; ++i) {
    double g1 = rng.normal(0.0, sd);
    double g2 = rng.normal(0.0, sd);
    double ang = std::hypot(g1, g2);
    if (ang == 0.0) continue;
    Eigen::Vector3d e1, e2;
    sphere_tangent_basis(p, e1, e2);
    Eigen::Vector3d dir = (g1 * e1 + g2 * e2) / ang;
    p = std::cos(ang) * p + std::sin(ang) * dir;
    p.normalize();
  }
  return p;
}

Location SourceLaw::sample(const SpatialDomain& dom, Rng& rng) const {
  if (const auto* f = std::get_if<FiniteSetDomain>(&dom)) {
    if (kind == Kind::Uniform) return static_cast<int>(rng.uniform_index(f->K));
    if (kind == Kind::Discrete) {
      double wsum = 0;
      for (double w : weights) wsum += w;
      return rng.categorical(weights.data(), static_cast<int>(weights.size()), wsum);
    }
    throw std::invalid_argument("von Mises-Fisher law needs a sphere domain");
  }
  if (const auto* c = std::get_if<CircleDomain>(&dom)) {
    if (kind != Kind::Uniform) throw std::invalid_argument("only uniform laws supported on the circle");
    return rng.uniform(0.0, c->circumference);
  }
  if (std::get_if<SphereDomain>(&dom)) {
    if (kind == Kind::Uniform) {
      double z = rng.uniform(-1.0, 1.0);
      double phi = rng.uniform(0.0, 2.0 * kPi);
      double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      return Eigen::Vector3d(r * std::cos(phi), r * std::sin(phi), z);
    }
    if (kind == Kind::VonMisesFisher) {
      // Inverse-CDF draw of the cosine against the mean axis.
      double u = rng.uniform01();
      double k = concentration;
      double w;
      if (k < 1e-8) {
        w = 2.0 * u - 1.0;
      } else {
        w = 1.0 + std::log(u + (1.0 - u) * std::exp(-2.0 * k)) / k;
      }
      w = std::clamp(w, -1.0, 1.0);
      double phi = rng.uniform(0.0, 2.0 * kPi);
      Eigen::Vector3d e1, e2;
      Eigen::Vector3d ax = axis.normalized();
      sphere_tangent_basis(ax, e1, e2);
      double r = std::sqrt(std::max(0.0, 1.0 - w * w));
      return (w * ax + r * (std::cos(phi) * e1 + std::sin(phi) * e2)).normalized().eval();
    }
    throw std::invalid_argument("discrete site law needs a finite domain");
  }
  if (kind != Kind::Uniform) throw std::invalid_argument("only uniform laws supported on the interval");
  return rng.uniform01();
}

Eigen::VectorXd SourceLaw::site_weights(const FiniteSetDomain& dom) const {
  Eigen::VectorXd w(dom.K);
  if (kind == Kind::Uniform) {
    w.setConstant(1.0 / dom.K);
    return w;
  }
  if (kind != Kind::Discrete) throw std::invalid_argument("law has no site weights");
  if (static_cast<int>(weights.size()) != dom.K)
    throw std::invalid_argument("site weight count must match K");
  double s = 0;
  for (double x : weights) s += x;
  for (int i = 0; i < dom.K; ++i) w[i] = weights[i] / s;
  return w;
}

bool SourceLaw::valid_for(const SpatialDomain& dom, std::string* why) const {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (kind == Kind::Discrete) {
    const auto* f = std::get_if<FiniteSetDomain>(&dom);
    if (!f) return fail("discrete site law needs a finite domain");
    if (static_cast<int>(weights.size()) != f->K) return fail("site weight count must match K");
    double s = 0;
    for (double w : weights) {
      if (w < 0) return fail("site weights must be nonnegative");
      s += w;
    }
    if (s <= 0) return fail("site weights must not all vanish");
    return true;
  }
  if (kind == Kind::VonMisesFisher) {
    if (!std::get_if<SphereDomain>(&dom)) return fail("von Mises-Fisher law needs a sphere domain");
    if (axis.norm() == 0.0) return fail("von Mises-Fisher axis must be nonzero");
    if (concentration < 0.0) return fail("von Mises-Fisher concentration must be nonnegative");
    return true;
  }
  return true;
}

std::vector<std::string> test_fn_names(const SpatialDomain& dom) {
  if (const auto* f = std::get_if<FiniteSetDomain>(&dom)) {
    std::vector<std::string> names;
    for (int s = 0; s < f->K; ++s) names.push_back("site" + std::to_string(s));
    return names;
  }
  if (std::get_if<CircleDomain>(&dom)) return {"one", "cos1", "sin1", "cos2"};
  if (std::get_if<SphereDomain>(&dom)) return {"one", "x", "y", "z"};
  return {"one", "cos1", "cos2"};
}

int test_fn_count(const SpatialDomain& dom) {
  return static_cast<int>(test_fn_names(dom).size());
}

double test_fn_eval(const SpatialDomain& dom, int fn, const Location& loc) {
  if (std::get_if<FiniteSetDomain>(&dom)) return std::get<int>(loc) == fn ? 1.0 : 0.0;
  if (const auto* c = std::get_if<CircleDomain>(&dom)) {
    double x = std::get<double>(loc);
    double w = 2.0 * kPi / c->circumference;
    switch (fn) {
      case 0: return 1.0;
      case 1: return std::cos(w * x);
      case 2: return std::sin(w * x);
      default: return std::cos(2.0 * w * x);
    }
  }
  if (std::get_if<SphereDomain>(&dom)) {
    const Eigen::Vector3d& u = std::get<Eigen::Vector3d>(loc);
    return fn == 0 ? 1.0 : u[fn - 1];
  }
  double x = std::get<double>(loc);
  switch (fn) {
    case 0: return 1.0;
    case 1: return std::cos(kPi * x);
    default: return std::cos(2.0 * kPi * x);
  }
}

Eigen::VectorXd test_fn_site_values(const FiniteSetDomain& dom, int fn) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dom.K);
  v[fn] = 1.0;
  return v;
}

double test_fn_mean(const SpatialDomain& dom, const SourceLaw& law, int fn) {
  if (const auto* f = std::get_if<FiniteSetDomain>(&dom)) {
    return law.site_weights(*f)[fn];
  }
  if (law.kind == SourceLaw::Kind::Uniform) {
    // All non-constant members of the default families integrate to zero
    // against the uniform law.
    return fn == 0 ? 1.0 : 0.0;
  }
  if (std::get_if<SphereDomain>(&dom) && law.kind == SourceLaw::Kind::VonMisesFisher) {
    if (fn == 0) return 1.0;
    // Mean resultant length coth(k) - 1/k along the axis.
    double k = law.concentration;
    double r = k < 1e-6 ? k / 3.0 : 1.0 / std::tanh(k) - 1.0 / k;
    return r * law.axis.normalized()[fn - 1];
  }
  throw std::invalid_argument("no closed-form mean for this law/test-function pair");
}

}  // namespace fvpop
