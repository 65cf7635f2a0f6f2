#pragma once
// Spatial domains particles live on: a finite site set with Markov migration,
// a circle, a sphere, or the unit interval with reflection. Provides location
// validity checks, geodesic distances, exact diffusion increments, source
// laws for immigration and dispersal kernels, and the default family of test
// functions used by observers and weak-error checks.

#include <Eigen/Dense>
#include <string>
#include <variant>
#include <vector>

#include "fvpop/rng.hpp"

namespace fvpop {

struct FiniteSetDomain {
  int K = 1;
  // One K x K generator matrix per particle type (row sums zero, off-diagonal
  // nonnegative). Empty means no migration for any type.
  std::vector<Eigen::MatrixXd> migration;
};

struct CircleDomain {
  double circumference = 1.0;
  std::vector<double> diffusion;  // per type, >= 0
};

struct SphereDomain {
  double radius = 1.0;
  std::vector<double> diffusion;
};

struct IntervalDomain {
  std::vector<double> diffusion;  // reflecting at 0 and 1
};

using SpatialDomain = std::variant<FiniteSetDomain, CircleDomain, SphereDomain, IntervalDomain>;

// Site index (finite), coordinate (circle: arc position, interval: point in
// [0,1]), or unit vector (sphere).
using Location = std::variant<int, double, Eigen::Vector3d>;

bool location_valid(const SpatialDomain& dom, const Location& loc, std::string* why = nullptr);

double geodesic_distance(const SpatialDomain& dom, const Location& a, const Location& b);

// Exact-in-law diffusion increments over a time span. Circle wraps a Gaussian
// step, the interval folds one (reflection principle), the sphere runs
// tangent-plane Gaussian substeps with per-substep variance capped at
// 2.5e-3 * radius^2 so the chord/arc discrepancy stays below sampling noise.
double circle_advance(const CircleDomain& d, double x, double var, Rng& rng);
double interval_advance(double x, double var, Rng& rng);
Eigen::Vector3d sphere_advance(const SphereDomain& d, const Eigen::Vector3d& u, double var,
                               Rng& rng);

// Orthonormal tangent basis at a unit vector, deterministic in u.
void sphere_tangent_basis(const Eigen::Vector3d& u, Eigen::Vector3d& e1, Eigen::Vector3d& e2);

// Source law for immigration positions, rare-dispersal kernels, and initial
// placement: uniform on the domain, explicit site weights (finite domains),
// or a von Mises-Fisher density (sphere).
struct SourceLaw {
  enum class Kind { Uniform, Discrete, VonMisesFisher };
  Kind kind = Kind::Uniform;
  std::vector<double> weights;        // Discrete: one weight per site
  Eigen::Vector3d axis{0, 0, 1};      // VonMisesFisher
  double concentration = 1.0;         // VonMisesFisher

  Location sample(const SpatialDomain& dom, Rng& rng) const;
  // Normalized site weights on a finite domain (Uniform becomes equal
  // weights); throws on continuous-only laws.
  Eigen::VectorXd site_weights(const FiniteSetDomain& dom) const;
  bool valid_for(const SpatialDomain& dom, std::string* why = nullptr) const;
};

// Default test-function family per domain: site indicators (finite),
// {1, cos, sin} of the first harmonic plus the second cosine (circle),
// {1, x, y, z} coordinates (sphere), {1, cos(pi x), cos(2 pi x)} (interval).
std::vector<std::string> test_fn_names(const SpatialDomain& dom);
int test_fn_count(const SpatialDomain& dom);
double test_fn_eval(const SpatialDomain& dom, int fn, const Location& loc);
// Per-site values of a test function on a finite domain.
Eigen::VectorXd test_fn_site_values(const FiniteSetDomain& dom, int fn);
// Expectation of a test function under a source law (closed form where the
// pair admits one; used by the analytic generator on finite domains).
double test_fn_mean(const SpatialDomain& dom, const SourceLaw& law, int fn);

}  // namespace fvpop
