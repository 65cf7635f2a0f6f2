#pragma once
// Reference implementations of the limiting objects: the Wright-Fisher
// diffusion on the simplex, exact Moran absorption oracles, Poisson-Dirichlet
// sampling, and a Moran-type particle approximation of the limiting
// measure-valued process on a general domain.

#include <cstdint>
#include <vector>

#include "fvpop/flow.hpp"
#include "fvpop/model.hpp"

namespace fvpop {

// Finite-type limit parameters. `theta` is kept in generator form (rows sum
// to zero, off-diagonals nonnegative), so the mutation drift is theta^T x;
// `resample` is the coefficient r in the diffusion term (r/2) x_i
// (delta_ij - x_j), which equals twice the ordered-pair sampling rate.
struct WFParams {
  int K = 2;
  Eigen::MatrixXd theta;
  Eigen::VectorXd alpha;
  double resample = 0.0;
};

// Translate averaged model coefficients on a finite domain: sites become
// traits, migration plus redraw components become mutation, selection fields
// become alpha, and resample = 2 gamma_smpl.
WFParams wf_params_from_averaged(const AveragedCoefficients& avg, const FiniteSetDomain& dom);

struct WFPath {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> x;
};

// Euler-Maruyama with the simplex-preserving noise
//   dX_i = sqrt(r dt) (sqrt(x_i) Z_i - x_i sum_j sqrt(x_j) Z_j),
// which realizes the covariance r x_i (delta_ij - x_j) and conserves mass
// exactly; negative excursions are clipped and renormalized. Throws when more
// than 1% of steps leave the simplex by over 0.05 before projection.
WFPath simulate_wf(const WFParams& params, const Eigen::VectorXd& x0, double T, double dt,
                   uint64_t seed);

// Exact fixation probability of the biased Moran chain (relative fitness w,
// k of M individuals initially of the focal type): the standard ratio
// formula. The _solve variant gets the same number from a tridiagonal
// first-step linear system, as an independent numerical path.
double moran_absorption(int M, double w, int k);
double moran_absorption_solve(int M, double w, int k);

struct PDParams {
  double alpha = 1.0;
  // Stick count; 0 picks the smallest truncation whose expected mass deficit
  // (alpha/(1+alpha))^n is below 1e-6.
  int truncation = 0;
};

// GEM stick-breaking with Beta(1, alpha) sticks, sorted descending.
Eigen::VectorXd sample_poisson_dirichlet(const PDParams& params, Rng& rng);

struct MoranFVRecord {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> obs;  // test-family averages <f, nu_M>
  std::vector<Location> final_particles;
  // Calibration diagnostics from the generator-consistency check.
  double calibration_z = 0.0;
  double calibration_gap = 0.0;  // |A^M F - A_0 F| at the start state
};

struct MoranFVConfig {
  int M = 300;
  double T = 1.0;
  uint64_t seed = 1;
  std::vector<double> grid;  // empty: {0, T}
  SourceLaw initial;         // particle start law
  // Skip the Monte-Carlo part of the calibration check (the deterministic
  // A^M vs A_0 gap check always runs on finite domains).
  bool skip_mc_calibration = false;
};

// M exchangeable particles: ordered pairs copy at rate gamma_smpl each,
// selection adds fitness-biased pair copies, and particles mutate by the
// averaged migration/diffusion plus redraw components. The empirical-measure
// generator on monomials matches the limiting one within O(1/M); on finite
// domains this is verified at start-up by an exact-generator comparison and
// a drift z-test (|z| >= 4 aborts with DiagnosticError).
MoranFVRecord moran_fv(const SpatialDomain& dom, const AveragedCoefficients& avg,
                       const MoranFVConfig& cfg);

// Exact generator of the M-particle scheme applied to a monomial observable
// over per-site particle counts (finite domains only), and the limiting
// generator A_0 (+selection) on the same empirical measure; used by the
// calibration check and its tests. Factors are per-site test-function
// tables; the observable is prod_l <f_l, nu_M>.
double moran_generator_apply(const FiniteSetDomain& dom, const AveragedCoefficients& avg, int M,
                             const std::vector<Eigen::VectorXd>& factors,
                             const std::vector<int64_t>& site_counts);
double limit_generator_apply(const FiniteSetDomain& dom, const AveragedCoefficients& avg,
                             const std::vector<Eigen::VectorXd>& factors,
                             const std::vector<int64_t>& site_counts);

}  // namespace fvpop
