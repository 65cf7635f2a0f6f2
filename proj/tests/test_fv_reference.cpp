#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "fvpop/error.hpp"
#include "fvpop/fv_reference.hpp"

using namespace fvpop;

namespace {

AveragedCoefficients two_site_avg(double gamma, double mig, double redraw_rate) {
  AveragedCoefficients avg;
  avg.gamma_smpl = gamma;
  avg.Q_avg = Eigen::MatrixXd::Zero(2, 2);
  if (mig > 0) avg.Q_avg << -mig, mig, mig, -mig;
  if (redraw_rate > 0) {
    SourceLaw uni;
    avg.redraw.emplace_back(redraw_rate, uni);
    avg.c_total = redraw_rate;
  }
  return avg;
}

SourceLaw discrete_law(std::vector<double> w) {
  SourceLaw law;
  law.kind = SourceLaw::Kind::Discrete;
  law.weights = std::move(w);
  return law;
}

}  // namespace

TEST_CASE("wf params from averaged coefficients") {
  FiniteSetDomain dom;
  dom.K = 2;
  AveragedCoefficients avg = two_site_avg(0.7, 1.0, 0.5);
  avg.sel_birth = Eigen::Vector2d(0.2, 0.0);
  avg.sel_death = Eigen::Vector2d(0.0, 0.1);

  WFParams p = wf_params_from_averaged(avg, dom);
  CHECK(p.K == 2);
  CHECK(p.resample == doctest::Approx(1.4).epsilon(1e-14));
  // Migration rate 1 each way plus a rate-0.5 uniform redraw: theta
  // off-diagonals 1 + 0.5 * 0.5 = 1.25.
  CHECK(p.theta(0, 1) == doctest::Approx(1.25).epsilon(1e-14));
  CHECK(p.theta(1, 0) == doctest::Approx(1.25).epsilon(1e-14));
  CHECK(p.theta(0, 0) == doctest::Approx(-1.25).epsilon(1e-14));
  CHECK((p.theta * Eigen::Vector2d::Ones()).norm() < 1e-14);
  CHECK(p.alpha(0) == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(p.alpha(1) == doctest::Approx(-0.1).epsilon(1e-14));
}

TEST_CASE("wf path conserves mass and absorbs at vertices") {
  WFParams p;
  p.K = 3;
  p.theta = Eigen::MatrixXd::Zero(3, 3);
  p.alpha = Eigen::VectorXd::Zero(3);
  p.resample = 2.0;

  Eigen::VectorXd x0(3);
  x0 << 0.2, 0.5, 0.3;
  WFPath path = simulate_wf(p, x0, 1.0, 1e-3, 11);
  REQUIRE(path.t.size() == path.x.size());
  for (const auto& x : path.x) {
    CHECK(std::abs(x.sum() - 1.0) <= 1e-12);
    CHECK(x.minCoeff() >= 0.0);
  }

  // A vertex is an exact fixed point of the scheme: drift and noise vanish.
  Eigen::VectorXd v(3);
  v << 1.0, 0.0, 0.0;
  WFPath fixed = simulate_wf(p, v, 0.5, 1e-3, 12);
  CHECK(fixed.x.back()(0) == 1.0);
  CHECK(fixed.x.back()(1) == 0.0);
  CHECK(fixed.x.back()(2) == 0.0);
}

TEST_CASE("wf step-size guard rejects wild trajectories") {
  // Mutation keeps vertices from absorbing the path, so the oversized steps
  // keep violating the simplex bounds.
  WFParams p;
  p.K = 2;
  p.theta = Eigen::MatrixXd::Zero(2, 2);
  p.theta << -5.0, 5.0, 5.0, -5.0;
  p.alpha = Eigen::VectorXd::Zero(2);
  p.resample = 200.0;
  Eigen::VectorXd x0(2);
  x0 << 0.5, 0.5;
  CHECK_THROWS_AS(simulate_wf(p, x0, 10.0, 0.5, 7), ValidationError);
}

TEST_CASE("neutral wf absorption frequency matches the moran oracle") {
  WFParams p;
  p.K = 2;
  p.theta = Eigen::MatrixXd::Zero(2, 2);
  p.alpha = Eigen::VectorXd::Zero(2);
  p.resample = 2.0;
  Eigen::VectorXd x0(2);
  x0 << 0.3, 0.7;

  int paths = 10000;
  int fixed = 0;
  for (int r = 0; r < paths; ++r) {
    WFPath path = simulate_wf(p, x0, 4.0, 1e-3, 1000 + r);
    if (path.x.back()(0) > 0.5) ++fixed;
  }
  double frac = static_cast<double>(fixed) / paths;
  // Neutral fixation probability equals the initial frequency; the moran
  // chain gives the same number exactly.
  CHECK(moran_absorption(100, 1.0, 30) == 0.3);
  CHECK(frac == doctest::Approx(0.3).epsilon(0.07));  // +-0.02 absolute
}

TEST_CASE("wf with symmetric mutation relaxes to the flat beta law") {
  // Mutation rate 1 each way against resample rate 2 gives the Beta(1,1)
  // stationary law: mean 1/2, variance 1/12.
  WFParams p;
  p.K = 2;
  p.theta = Eigen::MatrixXd::Zero(2, 2);
  p.theta << -1.0, 1.0, 1.0, -1.0;
  p.alpha = Eigen::VectorXd::Zero(2);
  p.resample = 2.0;
  Eigen::VectorXd x0(2);
  x0 << 0.1, 0.9;

  double sum = 0, sum2 = 0;
  int n = 0;
  for (int r = 0; r < 10; ++r) {
    WFPath path = simulate_wf(p, x0, 50.0, 1e-3, 2000 + r);
    for (size_t i = 0; i < path.t.size(); ++i) {
      if (path.t[i] < 10.0) continue;
      sum += path.x[i](0);
      sum2 += path.x[i](0) * path.x[i](0);
      ++n;
    }
  }
  double mean = sum / n;
  double var = sum2 / n - mean * mean;
  CHECK(mean == doctest::Approx(0.5).epsilon(0.1));
  CHECK(var == doctest::Approx(1.0 / 12.0).epsilon(0.2));
}

TEST_CASE("moran absorption closed form against the linear-system solve") {
  // Neutral case is exact.
  CHECK(moran_absorption(100, 1.0, 30) == 0.3);
  CHECK(moran_absorption_solve(100, 1.0, 30) == doctest::Approx(0.3).epsilon(1e-12));

  // Frozen biased values.
  CHECK(moran_absorption(100, 1.05, 30) == doctest::Approx(0.7745123225542353).epsilon(1e-12));
  CHECK(moran_absorption(50, 0.9, 10) == doctest::Approx(0.0096769807174176208).epsilon(1e-12));
  CHECK(moran_absorption(300, 2.0, 3) == doctest::Approx(0.875).epsilon(1e-12));

  // A single advantaged invader.
  CHECK(std::abs(moran_absorption(100, 1.05, 1) - moran_absorption_solve(100, 1.05, 1)) <= 1e-12);

  // Wider sweep; elimination roundoff grows with the chain length.
  for (int M : {50, 300, 1000})
    for (double w : {0.9, 1.05, 2.0})
      for (int k : {1, M / 3, M - 1}) {
        double a = moran_absorption(M, w, k);
        double b = moran_absorption_solve(M, w, k);
        CHECK(std::abs(a - b) <= 1e-14 * M);
      }

  // Boundaries and monotonicity in fitness.
  CHECK(moran_absorption(80, 1.3, 0) == 0.0);
  CHECK(moran_absorption(80, 1.3, 80) == 1.0);
  CHECK(moran_absorption_solve(80, 1.3, 0) == 0.0);
  CHECK(moran_absorption_solve(80, 1.3, 80) == 1.0);
  CHECK(moran_absorption(100, 1.2, 30) > moran_absorption(100, 1.0, 30));
  CHECK(moran_absorption(100, 1.0, 30) > moran_absorption(100, 0.8, 30));

  // Deep-underflow regime stays finite and in range.
  double tiny = moran_absorption(3000, 0.5, 1);
  CHECK(std::isfinite(tiny));
  CHECK(tiny >= 0.0);
  CHECK(tiny <= 1e-300);
  CHECK(moran_absorption(3000, 2.0, 2999) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(moran_absorption(10001, 1.0, 5), ValidationError);
  CHECK_THROWS_AS(moran_absorption_solve(10001, 1.0, 5), ValidationError);
  CHECK_THROWS_AS(moran_absorption(100, -0.5, 5), ValidationError);
}

TEST_CASE("poisson-dirichlet sticks: truncation, order, and match probability") {
  Rng rng(99, 3);

  PDParams quarter{0.25, 0};
  Eigen::VectorXd w = sample_poisson_dirichlet(quarter, rng);
  CHECK(w.size() == 9);  // smallest n with (0.2)^n < 1e-6
  PDParams unit{1.0, 0};
  CHECK(sample_poisson_dirichlet(unit, rng).size() == 20);
  PDParams fixed{1.0, 5};
  CHECK(sample_poisson_dirichlet(fixed, rng).size() == 5);

  // Sorted descending, nonnegative, total mass at most one.
  for (int i = 0; i + 1 < w.size(); ++i) CHECK(w[i] >= w[i + 1]);
  CHECK(w.minCoeff() >= 0.0);
  CHECK(w.sum() <= 1.0 + 1e-15);

  // E[sum w_i^2] is the probability two draws land in the same block,
  // 1/(1+alpha); the truncation deficit is below 1e-6 by construction.
  for (double alpha : {0.25, 1.0}) {
    PDParams params{alpha, 0};
    double match = 0, mass = 0;
    int reps = 20000;
    for (int r = 0; r < reps; ++r) {
      Eigen::VectorXd v = sample_poisson_dirichlet(params, rng);
      match += v.squaredNorm();
      mass += v.sum();
    }
    CHECK(match / reps == doctest::Approx(1.0 / (1.0 + alpha)).epsilon(0.015));
    CHECK(mass / reps >= 1.0 - 1e-4);
  }

  // Mean truncation deficit follows (alpha/(1+alpha))^n.
  {
    PDParams short10{1.0, 10};
    double deficit = 0;
    int reps = 20000;
    for (int r = 0; r < reps; ++r) deficit += 1.0 - sample_poisson_dirichlet(short10, rng).sum();
    CHECK(deficit / reps == doctest::Approx(std::pow(0.5, 10)).epsilon(0.15));
  }

  // Larger alpha fragments the mass: median largest weight decreases.
  double med[3];
  double alphas[3] = {0.25, 1.0, 4.0};
  for (int a = 0; a < 3; ++a) {
    PDParams params{alphas[a], 0};
    std::vector<double> largest(10000);
    for (double& v : largest) v = sample_poisson_dirichlet(params, rng)(0);
    std::nth_element(largest.begin(), largest.begin() + 5000, largest.end());
    med[a] = largest[5000];
  }
  CHECK(med[0] > med[1]);
  CHECK(med[1] > med[2]);

  PDParams bad{0.0, 0};
  CHECK_THROWS_AS(sample_poisson_dirichlet(bad, rng), ConfigError);
}

TEST_CASE("particle-scheme generator matches the limit on linear observables") {
  FiniteSetDomain dom;
  dom.K = 2;
  AveragedCoefficients avg = two_site_avg(0.7, 0.0, 0.0);
  avg.sel_birth = Eigen::Vector2d(0.2, 0.0);
  avg.sel_death = Eigen::Vector2d(0.0, 0.1);

  Eigen::VectorXd f = test_fn_site_values(dom, 0);
  std::vector<Eigen::VectorXd> lin = {f};
  std::vector<int64_t> m = {30, 70};

  // Ordered-pair bookkeeping cancels every 1/M term for degree-one
  // observables, selection included.
  double am = moran_generator_apply(dom, avg, 100, lin, m);
  double a0 = limit_generator_apply(dom, avg, lin, m);
  CHECK(std::abs(am - a0) <= 1e-13);
  // Selection pushes the favored site up from this state.
  CHECK(a0 > 0.0);
}

TEST_CASE("particle-scheme generator gap decays like 1/M") {
  FiniteSetDomain dom;
  dom.K = 2;
  AveragedCoefficients avg = two_site_avg(1.0, 0.8, 0.0);

  Eigen::VectorXd f = test_fn_site_values(dom, 1);
  std::vector<Eigen::VectorXd> cubic = {f, f, f};

  auto gap = [&](int M) {
    std::vector<int64_t> m = {3 * M / 10, 7 * M / 10};
    return std::abs(moran_generator_apply(dom, avg, M, cubic, m) -
                    limit_generator_apply(dom, avg, cubic, m));
  };
  double g1 = gap(100);
  double g2 = gap(200);
  double g4 = gap(400);
  CHECK(g1 > 0.0);
  CHECK(g2 / g1 == doctest::Approx(0.5).epsilon(0.1));
  CHECK(g4 / g2 == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("moran particle run conserves particles and starts exactly") {
  FiniteSetDomain dom;
  dom.K = 2;
  SpatialDomain sdom = dom;
  AveragedCoefficients avg = two_site_avg(1.0, 1.0, 0.0);

  MoranFVConfig cfg;
  cfg.M = 100;
  cfg.T = 0.5;
  cfg.seed = 5;
  cfg.grid = {0.0, 0.25, 0.5};
  cfg.initial = discrete_law({0.3, 0.7});

  MoranFVRecord rec = moran_fv(sdom, avg, cfg);
  REQUIRE(rec.t.size() == 3);
  REQUIRE(rec.obs.size() == 3);
  CHECK(rec.obs[0](0) == 0.3);  // deterministic largest-remainder start
  for (const auto& o : rec.obs) {
    CHECK(std::abs(o.sum() - 1.0) <= 1e-12);  // site indicators sum to one
    CHECK(o.minCoeff() >= 0.0);
  }
  REQUIRE(rec.final_particles.size() == 100);
  for (const Location& loc : rec.final_particles) {
    int s = std::get<int>(loc);
    CHECK(s >= 0);
    CHECK(s < 2);
  }
  // Calibration diagnostics are filled in: mutation makes the cubic gap
  // strictly positive.
  CHECK(rec.calibration_gap > 0.0);
  CHECK(std::abs(rec.calibration_z) < 4.0);

  MoranFVRecord again = moran_fv(sdom, avg, cfg);
  for (size_t i = 0; i < rec.obs.size(); ++i) CHECK((rec.obs[i] - again.obs[i]).norm() == 0.0);
}

TEST_CASE("without resampling the particles follow the mutation flow") {
  FiniteSetDomain dom;
  dom.K = 2;
  SpatialDomain sdom = dom;
  AveragedCoefficients avg = two_site_avg(0.0, 1.0, 0.0);

  MoranFVConfig cfg;
  cfg.M = 2000;
  cfg.T = 1.0;
  cfg.seed = 21;
  cfg.initial = discrete_law({0.3, 0.7});
  cfg.skip_mc_calibration = true;

  MoranFVRecord rec = moran_fv(sdom, avg, cfg);
  // Independent two-state chains: x(t) = 1/2 + (x0 - 1/2) e^{-2t}.
  CHECK(rec.obs.back()(0) == doctest::Approx(0.47293294335267744).epsilon(0.09));
}

TEST_CASE("with no sampling and no motion the empirical measure freezes") {
  FiniteSetDomain dom;
  dom.K = 3;
  SpatialDomain sdom = dom;
  AveragedCoefficients avg;
  avg.gamma_smpl = 0.0;
  avg.Q_avg = Eigen::MatrixXd::Zero(3, 3);

  MoranFVConfig cfg;
  cfg.M = 120;
  cfg.T = 2.0;
  cfg.seed = 3;
  cfg.grid = {0.0, 1.0, 2.0};
  cfg.initial = discrete_law({0.5, 0.25, 0.25});
  cfg.skip_mc_calibration = true;

  MoranFVRecord rec = moran_fv(sdom, avg, cfg);
  for (const auto& o : rec.obs) CHECK((o - rec.obs[0]).norm() == 0.0);
  CHECK(rec.obs[0](0) == 0.5);
}

TEST_CASE("moran particles on the circle diffuse and stay on the domain") {
  CircleDomain circ;
  circ.circumference = 1.0;
  circ.diffusion = {0.01};
  SpatialDomain sdom = circ;

  AveragedCoefficients avg;
  avg.gamma_smpl = 0.5;
  avg.D_avg = 0.01;
  SourceLaw uni;
  avg.redraw.emplace_back(0.3, uni);
  avg.c_total = 0.3;

  MoranFVConfig cfg;
  cfg.M = 150;
  cfg.T = 0.3;
  cfg.seed = 9;

  MoranFVRecord rec = moran_fv(sdom, avg, cfg);
  REQUIRE(rec.obs.size() == 2);
  // First test function is the constant 1.
  CHECK(rec.obs.back()(0) == doctest::Approx(1.0).epsilon(1e-12));
  for (int fn = 0; fn < rec.obs.back().size(); ++fn) CHECK(std::abs(rec.obs.back()(fn)) <= 1.0);
  REQUIRE(rec.final_particles.size() == 150);
  std::set<double> distinct;
  for (const Location& loc : rec.final_particles) {
    CHECK(location_valid(sdom, loc));
    distinct.insert(std::get<double>(loc));
  }
  // Diffusion separates copies; positions are not all collapsed.
  CHECK(distinct.size() > 10);
  // Two-site surrogate calibration ran.
  CHECK(rec.calibration_gap >= 0.0);
}
