#pragma once
// Convergence diagnostics and sampling statistics: sup-norm density
// deviation, cross-type fusion gaps, per-type semimartingale difference
// paths, clan geometry from snapshots, two-sample Kolmogorov-Smirnov
// comparison, and a Wilson interval for absorbed-fraction estimates. All
// functions are pure transforms of recorded data.

#include <vector>

#include "fvpop/engine.hpp"
#include "fvpop/flow.hpp"

namespace fvpop {

// sup over recorded grid points in [t0, t0 + span] of ||h(t) - h_ref||_1.
// Throws ValidationError when the recorded grid does not cover the window.
double density_deviation(const TrajectoryRecord& traj, const Eigen::VectorXd& h_ref, double t0,
                         double span);

// sup over the recorded grid of max_{i,j} |h_j <f,mu_i> - h_i <f,mu_j>| for
// one recorded test function; vanishing values mean the per-type measures
// are proportional, i.e. the sub-populations are spatially fused.
double inseparability(const TrajectoryRecord& traj, int fn);
// Maximum over every recorded test function.
double inseparability_all(const TrajectoryRecord& traj);

// Per-type difference paths against the pooled population,
//   Y_i(t) = <f,mu_i> sum_j h_j - h_i sum_j <f,mu_j>,
// one row per grid point, one column per type. Rows sum to zero by
// construction.
Eigen::MatrixXd yn_paths(const TrajectoryRecord& traj, int fn);

struct ClanStatistics {
  Eigen::VectorXd shares;  // descending, sums to 1 over clan-carrying particles
  double largest = 0.0;
  // Per clan (aligned with shares): mean squared pairwise geodesic
  // separation, computed as twice the mean squared geodesic deviation from
  // the clan centroid (the two agree up to curvature terms). NaN where the
  // domain has no centroid (finite site sets).
  Eigen::VectorXd dispersions;
  double dominant_dispersion = std::numeric_limits<double>::quiet_NaN();
};

// Pools every type's particles; throws ValidationError when the snapshot is
// empty or was recorded without clan tracking.
ClanStatistics clan_statistics(const SpatialDomain& dom, const PopulationSnapshot& state);

// Occupancy fractions of the distinct exact locations in a snapshot, pooled
// over types and sorted descending. With dispersal-free continuous motion a
// shared coordinate can only arise by descent, so these are family shares
// keyed by position rather than by clan id. Throws ValidationError on an
// empty snapshot.
Eigen::VectorXd location_shares(const PopulationSnapshot& state);

struct KSResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int n = 0, m = 0;
  bool exact = false;       // exact lattice count vs asymptotic tail
  bool degenerate = false;  // a sample was constant
};

// Two-sided two-sample Kolmogorov-Smirnov. Small products n*m get the exact
// path-counting p-value; larger ones (or tied samples) the asymptotic tail
// with the Stephens small-sample correction.
KSResult compare_samples(std::vector<double> a, std::vector<double> b);

struct ProportionEstimate {
  double p_hat = 0.0;
  double lower = 0.0, upper = 1.0;  // Wilson 95% interval
  int successes = 0, trials = 0;
};

ProportionEstimate fixation_estimate(int successes, int trials);

// Upper tail P(X >= stat) of the chi-square law with dof degrees of freedom
// (regularized incomplete gamma Q(dof/2, stat/2)).
double chi_square_p(double stat, int dof);

// p-th empirical quantile with linear interpolation between order statistics.
double quantile(std::vector<double> xs, double p);

// Near-stationary sampling plan on the slow timescale: burn-in of five
// relaxation times of the density flow, then samples one relaxation time
// apart (relaxation time = 1/min_i |Re lambda_i| of the flow Jacobian).
// A heuristic, not an ergodicity bound.
struct StationaritySchedule {
  double burn_in = 0.0;
  double spacing = 0.0;
};

StationaritySchedule stationarity_schedule(const EquilibriumData& eq);

}  // namespace fvpop
