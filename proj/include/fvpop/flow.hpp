#pragma once
// Density-flow analysis: the interaction matrix A(h), the drift
// theta(h) = A(h) h, its analytic Jacobian, an adaptive Runge-Kutta
// integrator with dense output for the flow, equilibrium location with the
// spectral data the series solver needs, and the equilibrium-averaged
// coefficients that define the limiting reference process.

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <vector>

#include "fvpop/model.hpp"

namespace fvpop {

// A_ij(h) = beta_ji(h) for i != j, A_ii(h) = beta_ii(h) - rho_i(h); theta = A h.
Eigen::MatrixXd interaction_matrix(const ModelSpec& spec, const Eigen::VectorXd& h);
Eigen::VectorXd theta(const ModelSpec& spec, const Eigen::VectorXd& h);
Eigen::MatrixXd theta_jacobian(const ModelSpec& spec, const Eigen::VectorXd& h);

// theta as explicit polynomials (arity q), for Taylor extraction.
std::vector<PolyD> theta_polynomials(const ModelSpec& spec);
// A(h) entries as polynomials.
std::vector<std::vector<PolyD>> interaction_polynomials(const ModelSpec& spec);

struct OdeOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double initial_step = 0.0;  // 0 = choose automatically
  int max_steps = 2000000;
};

// Dense solution of an ODE on [t0, t1] from a Dormand-Prince 5(4) run:
// each accepted step stores the quartic interpolation stencil.
struct OdeSolution {
  double t0 = 0.0, t1 = 0.0;
  std::vector<double> ts;  // step boundaries, ts.front() = t0, ts.back() = t1
  std::vector<std::array<Eigen::VectorXd, 5>> cont;
  Eigen::VectorXd y_end;

  Eigen::VectorXd at(double t) const;
  int steps() const { return static_cast<int>(cont.size()); }
};

using OdeRhs = std::function<void(double, const Eigen::VectorXd&, Eigen::VectorXd&)>;

OdeSolution integrate_ode(const OdeRhs& f, const Eigen::VectorXd& y0, double t0, double t1,
                          const OdeOptions& opts = {});

// Flow of dh/dt = theta(h) started at h0.
OdeSolution integrate_flow(const ModelSpec& spec, const Eigen::VectorXd& h0, double T,
                           const OdeOptions& opts = {});

struct EquilibriumData {
  Eigen::VectorXd h_eq;
  Eigen::VectorXd v_eq;  // left null vector of A(h_eq), <v_eq, h_eq> = 1
  Eigen::MatrixXd A_eq;
  Eigen::MatrixXd jac;            // Jacobian of theta at h_eq
  Eigen::VectorXcd jac_eigs;
  double spectral_abscissa = 0;   // max Re of jac_eigs
  double sv_min = 0;              // smallest singular value of A_eq
  double sv_second = 0;           // second smallest, for the simple-zero check
  double eps0 = 0;                // min_i(-Re lambda_i) / 4, series trust scale
};

// Settle along the flow from a list of starts, then polish with damped
// Newton. Accepts only strictly positive equilibria (all components above
// 1e-8) with a stable Jacobian; throws ValidationError otherwise.
EquilibriumData find_equilibrium(const ModelSpec& spec);
// Newton polish from an explicit start, no settling phase.
EquilibriumData equilibrium_from(const ModelSpec& spec, const Eigen::VectorXd& start,
                                 double tol = 1e-13);

// Coefficients of the limiting single-population process, obtained by
// averaging the model mechanisms against v_eq (per ancestor weight) and h_eq.
struct AveragedCoefficients {
  double gamma_smpl = 0;  // ordered-pair sampling coefficient
  // Motion: finite domains average the migration generators, continuous
  // domains average diffusion constants plus local-dispersal contributions.
  Eigen::MatrixXd Q_avg;
  double D_avg = 0;
  // Redraw components (rare dispersal and immigration), each a rate with a
  // source law; c_total is their sum.
  std::vector<std::pair<double, SourceLaw>> redraw;
  double c_total = 0;
  // Averaged selection fields as per-site values (finite) or test-family
  // profile coefficients (continuous), evaluated at h_eq.
  Eigen::VectorXd sel_birth;
  Eigen::VectorXd sel_death;
  double sel_birth_sup = 0;
  double sel_death_sup = 0;
};

AveragedCoefficients averaged_coefficients(const ModelSpec& spec, const EquilibriumData& eq);

}  // namespace fvpop
