#pragma once
// Power-series solver for the stationary weight map Lambda: the vector field
// solving A(h)^T Lambda(h) + J_Lambda(h) theta(h) = 0 with Lambda(h_eq) =
// v_eq. Lambda is built degree by degree in eigencoordinates of the
// linearized flow, certified on a residual grid, and extended to the whole
// basin by transporting along the flow.

#include <Eigen/Dense>
#include <vector>

#include "fvpop/flow.hpp"

namespace fvpop {

struct LambdaSeries {
  int q = 0;
  int k_max = 0;
  Eigen::VectorXd h_eq;
  // Component polynomials in delta = h - h_eq.
  std::vector<PolyD> comp;
  double eps0 = 0;     // quarter of the slowest damping rate
  double c_hat = 0;    // growth constant estimate: max ||coef_alpha||^(1/|alpha|)
  double r_trust = 0;  // certified radius: exact PDE residual <= residual_tol
  double r_hand = 0;   // handoff radius where the flow extension switches to the series
  double residual_tol = 0;
  double max_imag_residue = 0;       // after the eigenbasis round trip
  std::vector<double> varah_bound;   // per degree; +inf when not diagonally dominant
  double basis_condition = 0;        // conditioning of the eigenvector basis

  Eigen::VectorXd eval(const Eigen::VectorXd& h) const;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& h) const;
  // Coefficient vectors per multi-index (degree <= k_max), graded-lex order.
  std::vector<std::pair<MultiIndex, Eigen::VectorXd>> coefficient_table() const;
};

struct SeriesOptions {
  int k_max = 8;
  double residual_tol = 1e-8;
  // Radii scanned for certification, as multiples of eps0.
  double r_max_factor = 2.0;
  int r_grid = 40;
  double imag_tol = 1e-9;
};

LambdaSeries solve_series(const ModelSpec& spec, const EquilibriumData& eq,
                          const SeriesOptions& opts = {});

using LambdaEval = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Defining-equation residual of any candidate weight map at h: the first q
// entries are A(h)^T L(h) + J_L(h) theta(h) with the Jacobian taken by
// central finite differences (optionally Richardson-extrapolated); the last
// entry is the mass-identity defect <L(h), h> - 1.
Eigen::VectorXd pde_residual(const ModelSpec& spec, const LambdaEval& lambda_eval,
                             const Eigen::VectorXd& h, double fd_step = 1e-5,
                             bool richardson = false);
// Same residual for a truncated series with its exact polynomial Jacobian;
// noise-free, used for trust-radius certification and slope fits.
Eigen::VectorXd pde_residual_exact(const ModelSpec& spec, const LambdaSeries& series,
                                   const Eigen::VectorXd& h);

// Least-squares slope of log max-residual against log radius for a degree
// k_trunc truncation; the defect of an order-k series decays one power faster
// than the series itself, so the expected slope is k_trunc + 1.
double residual_slope(const ModelSpec& spec, const EquilibriumData& eq, int k_trunc = 3,
                      double r_lo = 1e-3, double r_hi = 1e-1, int n_radii = 9);

// Fundamental solution of the adjoint transport along the flow from h:
// dPsi/ds = Psi A(psi_s(h))^T, Psi(0) = I, so Lambda(h) = Psi(T) Lambda(psi_T(h)).
Eigen::MatrixXd transport_matrix(const ModelSpec& spec, const Eigen::VectorXd& h, double T,
                                 const OdeOptions& opts = {});

struct ExtendOptions {
  double T_max = 400.0;  // give up if the flow has not entered the handoff ball
  OdeOptions ode;
};

// Lambda at a state outside the series ball: run the flow to its first entry
// into the handoff ball, evaluate the series there, transport back.
Eigen::VectorXd extend_lambda(const ModelSpec& spec, const LambdaSeries& series,
                              const Eigen::VectorXd& h, const ExtendOptions& opts = {});

// Lambda(h) wherever h is (series ball or basin), with the mass identity
// <Lambda(h), h> = 1 enforced as a diagnostic to 1e-10.
Eigen::VectorXd lambda_at(const ModelSpec& spec, const LambdaSeries& series,
                          const Eigen::VectorXd& h);

// The collapsed measure: each type-i particle carries weight Lambda_i(h)/N,
// so the total mass is <Lambda(h), h> = 1.
struct GammaMeasure {
  Eigen::VectorXd lambda;           // per-type weights Lambda(h)
  Eigen::VectorXd particle_weight;  // Lambda_i(h)/N
  double total_mass = 0;
};

GammaMeasure gamma_map(const ModelSpec& spec, const LambdaSeries& series,
                       const PopulationSnapshot& pop);

}  // namespace fvpop
