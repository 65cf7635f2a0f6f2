#include <cmath>

#include "doctest.h"
#include "fvpop/error.hpp"
#include "fvpop/rng.hpp"
#include "fvpop/stats.hpp"

using namespace fvpop;

namespace {

// Hand-built record: grid, densities, and one observable matrix per point.
TrajectoryRecord synthetic_record(const std::vector<double>& t,
                                  const std::vector<Eigen::VectorXd>& h,
                                  const std::vector<Eigen::MatrixXd>& obs) {
  TrajectoryRecord rec;
  rec.t = t;
  rec.h = h;
  rec.obs = obs;
  return rec;
}

}  // namespace

TEST_CASE("density deviation is an exact grid supremum") {
  Eigen::VectorXd h_ref(2);
  h_ref << 1.5, 1.5;

  std::vector<Eigen::VectorXd> h = {h_ref, h_ref, h_ref};
  TrajectoryRecord flat = synthetic_record({0.0, 0.5, 1.0}, h, {});
  CHECK(density_deviation(flat, h_ref, 0.0, 1.0) == 0.0);

  Eigen::VectorXd bumped = h_ref;
  bumped[0] += 0.1;
  TrajectoryRecord shifted = synthetic_record({0.0, 0.5, 1.0}, {h_ref, bumped, h_ref}, {});
  CHECK(density_deviation(shifted, h_ref, 0.0, 1.0) == doctest::Approx(0.1).epsilon(1e-14));
  // The bump sits outside a window that only covers the last point.
  CHECK(density_deviation(shifted, h_ref, 0.75, 0.25) == 0.0);

  CHECK_THROWS_AS(density_deviation(shifted, h_ref, 0.0, 2.0), ValidationError);
  CHECK_THROWS_AS(density_deviation(shifted, h_ref, -1.0, 0.5), ValidationError);
}

TEST_CASE("inseparability vanishes for one type and for proportional measures") {
  Eigen::VectorXd h1(1);
  h1 << 2.0;
  Eigen::MatrixXd o1(2, 1);
  o1 << 0.4, 0.7;
  TrajectoryRecord single = synthetic_record({0.0}, {h1}, {o1});
  CHECK(inseparability_all(single) == 0.0);

  // Two types spread identically up to mass: <f,mu_i> = c_f h_i.
  Eigen::VectorXd h2(2);
  h2 << 0.5, 1.5;
  Eigen::MatrixXd prop(2, 2);
  prop << 0.3 * 0.5, 0.3 * 1.5, -0.2 * 0.5, -0.2 * 1.5;
  TrajectoryRecord fused = synthetic_record({0.0}, {h2}, {prop});
  CHECK(inseparability_all(fused) <= 1e-15);

  // A crafted gap: h = (1, 2), <f,mu> = (0.6, 0.4) gives |2*0.6 - 1*0.4|.
  Eigen::VectorXd h3(2);
  h3 << 1.0, 2.0;
  Eigen::MatrixXd gap(1, 2);
  gap << 0.6, 0.4;
  TrajectoryRecord split = synthetic_record({0.0}, {h3}, {gap});
  CHECK(inseparability(split, 0) == doctest::Approx(0.8).epsilon(1e-14));

  CHECK_THROWS_AS(inseparability(split, 3), ConfigError);
  TrajectoryRecord empty;
  CHECK_THROWS_AS(inseparability_all(empty), ValidationError);
}

TEST_CASE("per-type difference paths sum to zero") {
  Rng rng(4, 0);
  std::vector<double> t;
  std::vector<Eigen::VectorXd> h;
  std::vector<Eigen::MatrixXd> obs;
  for (int g = 0; g < 20; ++g) {
    t.push_back(0.1 * g);
    Eigen::VectorXd hg(3);
    Eigen::MatrixXd og(2, 3);
    for (int i = 0; i < 3; ++i) {
      hg[i] = rng.uniform(0.5, 2.0);
      og(0, i) = rng.uniform(-1.0, 1.0) * hg[i];
      og(1, i) = rng.uniform(0.0, 1.0) * hg[i];
    }
    h.push_back(hg);
    obs.push_back(og);
  }
  TrajectoryRecord rec = synthetic_record(t, h, obs);
  for (int fn = 0; fn < 2; ++fn) {
    Eigen::MatrixXd y = yn_paths(rec, fn);
    REQUIRE(y.rows() == 20);
    REQUIRE(y.cols() == 3);
    for (int g = 0; g < y.rows(); ++g) CHECK(std::abs(y.row(g).sum()) <= 1e-12);
  }

  // One type: the path is identically zero.
  Eigen::VectorXd h1(1);
  h1 << 1.3;
  Eigen::MatrixXd o1(1, 1);
  o1 << 0.8;
  TrajectoryRecord single = synthetic_record({0.0}, {h1}, {o1});
  CHECK(yn_paths(single, 0)(0, 0) == 0.0);

  // Crafted value: h=(1,2), obs=(0.6,0.4): Y_0 = 0.6*3 - 1*1.0 = 0.8.
  Eigen::VectorXd h3(2);
  h3 << 1.0, 2.0;
  Eigen::MatrixXd gap(1, 2);
  gap << 0.6, 0.4;
  TrajectoryRecord split = synthetic_record({0.0}, {h3}, {gap});
  Eigen::MatrixXd y = yn_paths(split, 0);
  CHECK(y(0, 0) == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(y(0, 1) == doctest::Approx(-0.8).epsilon(1e-14));
}

TEST_CASE("clan statistics: shares, centroid dispersion, and guards") {
  CircleDomain circ;
  circ.circumference = 1.0;
  circ.diffusion = {0.01};
  SpatialDomain dom = circ;

  PopulationSnapshot snap;
  snap.N = 3;
  snap.types.resize(1);
  snap.types[0].push_back({Location{0.1}, 0.42});
  snap.types[0].push_back({Location{0.3}, 0.42});
  snap.types[0].push_back({Location{0.7}, 0.77});

  ClanStatistics cs = clan_statistics(dom, snap);
  REQUIRE(cs.shares.size() == 2);
  CHECK(cs.shares[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(cs.shares[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(cs.largest == cs.shares[0]);
  // Members at 0.1 and 0.3: circular centroid 0.2, deviations 0.1, so the
  // pairwise dispersion is 2 * 0.01.
  CHECK(cs.dominant_dispersion == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(cs.dispersions[1] == 0.0);

  // Single clan concentrated at a point.
  PopulationSnapshot point;
  point.N = 2;
  point.types.resize(1);
  point.types[0].push_back({Location{0.5}, 0.9});
  point.types[0].push_back({Location{0.5}, 0.9});
  ClanStatistics one = clan_statistics(dom, point);
  CHECK(one.largest == 1.0);
  CHECK(one.dominant_dispersion == 0.0);

  // Sphere: two orthogonal points, centroid on the geodesic midpoint.
  SphereDomain sph;
  sph.radius = 1.0;
  sph.diffusion = {0.01};
  PopulationSnapshot ortho;
  ortho.N = 2;
  ortho.types.resize(1);
  ortho.types[0].push_back({Location{Eigen::Vector3d(1, 0, 0)}, 0.6});
  ortho.types[0].push_back({Location{Eigen::Vector3d(0, 1, 0)}, 0.6});
  ClanStatistics oc = clan_statistics(SpatialDomain{sph}, ortho);
  CHECK(oc.dominant_dispersion ==
        doctest::Approx(2.0 * (M_PI / 4.0) * (M_PI / 4.0)).epsilon(1e-10));

  // Finite domains have no centroid.
  FiniteSetDomain fin;
  fin.K = 2;
  PopulationSnapshot sites;
  sites.N = 2;
  sites.types.resize(1);
  sites.types[0].push_back({Location{0}, 0.3});
  sites.types[0].push_back({Location{1}, 0.3});
  CHECK(std::isnan(clan_statistics(SpatialDomain{fin}, sites).dominant_dispersion));

  // Guards: empty snapshot; tracking disabled (all labels zero).
  PopulationSnapshot empty;
  empty.types.resize(1);
  CHECK_THROWS_AS(clan_statistics(dom, empty), ValidationError);
  PopulationSnapshot untracked;
  untracked.N = 2;
  untracked.types.resize(1);
  untracked.types[0].push_back({Location{0.2}, 0.0});
  untracked.types[0].push_back({Location{0.6}, 0.0});
  CHECK_THROWS_AS(clan_statistics(dom, untracked), ValidationError);
}

TEST_CASE("two-sample ks: exact small cases") {
  // Identical samples: statistic 0, nothing exceeds it.
  KSResult same = compare_samples({0.1, 0.5, 0.9}, {0.1, 0.5, 0.9});
  CHECK(same.statistic == 0.0);
  CHECK(same.p_value == 1.0);

  // Fully separated pairs: D = 1 and P(D >= 1) = 2/C(4,2) = 1/3.
  KSResult sep = compare_samples({1.0, 2.0}, {3.0, 4.0});
  CHECK(sep.statistic == 1.0);
  CHECK(sep.exact);
  CHECK(sep.p_value == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  // Interleaved pairs: D = 1/2, and every arrangement reaches 1/2.
  KSResult inter = compare_samples({1.0, 3.0}, {2.0, 4.0});
  CHECK(inter.statistic == 0.5);
  CHECK(inter.p_value == doctest::Approx(1.0).epsilon(1e-12));

  // Constant samples are flagged, not rejected.
  KSResult flat = compare_samples({2.0, 2.0, 2.0}, {1.0, 3.0});
  CHECK(flat.degenerate);

  CHECK_THROWS_AS(compare_samples({}, {1.0}), ConfigError);
}

TEST_CASE("two-sample ks: calibration on uniform null") {
  // With matched uniform samples the p-value is itself uniform; at a fixed
  // seed this records that small p-values stay rare.
  Rng rng(1234, 0);
  int low = 0;
  double min_p = 1.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(1000), b(1000);
    for (double& v : a) v = rng.uniform01();
    for (double& v : b) v = rng.uniform01();
    KSResult r = compare_samples(a, b);
    CHECK(r.exact);
    if (r.p_value < 0.01) ++low;
    min_p = std::min(min_p, r.p_value);
  }
  CHECK(low <= 3);

  // Exact and asymptotic tails agree to a few percent at this size.
  Rng rng2(77, 0);
  std::vector<double> a(500), b(400);
  for (double& v : a) v = rng2.uniform01();
  for (double& v : b) v = rng2.uniform01();
  KSResult r = compare_samples(a, b);
  REQUIRE(r.exact);
  // The exact count and the corrected closed-form tail should agree.
  double ne = 500.0 * 400.0 / 900.0;
  double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * r.statistic;
  double asym = 0;
  for (int k = 1; k <= 100; ++k)
    asym += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  CHECK(std::abs(r.p_value - asym) <= 0.05);
}

TEST_CASE("fixation estimate uses the wilson interval") {
  ProportionEstimate e = fixation_estimate(300, 1000);
  CHECK(e.p_hat == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(e.lower == doctest::Approx(0.2724068424770048).epsilon(1e-12));
  CHECK(e.upper == doctest::Approx(0.3291238609172172).epsilon(1e-12));

  ProportionEstimate zero = fixation_estimate(0, 10);
  CHECK(zero.p_hat == 0.0);
  CHECK(zero.lower == 0.0);
  CHECK(zero.upper == doctest::Approx(0.2775327998628892).epsilon(1e-12));

  CHECK_THROWS_AS(fixation_estimate(5, 0), ConfigError);
  CHECK_THROWS_AS(fixation_estimate(11, 10), ConfigError);
}

TEST_CASE("chi-square upper tail matches frozen quantiles") {
  // 95% critical values of the chi-square law.
  CHECK(chi_square_p(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-10));
  CHECK(chi_square_p(5.991464547107979, 2) == doctest::Approx(0.05).epsilon(1e-10));
  CHECK(chi_square_p(11.070497693516351, 5) == doctest::Approx(0.05).epsilon(1e-10));
  CHECK(chi_square_p(2.0, 5) == doctest::Approx(0.84914503608460964).epsilon(1e-12));
  CHECK(chi_square_p(25.0, 10) == doctest::Approx(0.0053455054871340643).epsilon(1e-12));
  CHECK(chi_square_p(0.0, 3) == 1.0);
  CHECK_THROWS_AS(chi_square_p(-1.0, 3), ConfigError);
  CHECK_THROWS_AS(chi_square_p(1.0, 0), ConfigError);
}

TEST_CASE("quantiles interpolate order statistics") {
  CHECK(quantile({3.0, 1.0, 2.0}, 0.5) == 2.0);
  CHECK(quantile({1.0, 2.0}, 0.25) == doctest::Approx(1.25).epsilon(1e-14));
  CHECK(quantile({5.0}, 0.9) == 5.0);
  CHECK_THROWS_AS(quantile({}, 0.5), ConfigError);
  CHECK_THROWS_AS(quantile({1.0}, 1.5), ConfigError);
}

TEST_CASE("stationarity schedule follows the slowest flow mode") {
  EquilibriumData eq;
  eq.spectral_abscissa = -2.0;
  StationaritySchedule plan = stationarity_schedule(eq);
  CHECK(plan.burn_in == doctest::Approx(2.5).epsilon(1e-14));
  CHECK(plan.spacing == doctest::Approx(0.5).epsilon(1e-14));

  eq.spectral_abscissa = 0.5;
  CHECK_THROWS_AS(stationarity_schedule(eq), ValidationError);
}

TEST_CASE("location shares group particles by exact coordinate") {
  PopulationSnapshot snap;
  snap.N = 8;
  snap.types.resize(1);
  // Three families on the interval: 4 at 0.25, 3 at 0.7, 1 at 0.1.
  for (int k = 0; k < 4; ++k) snap.types[0].push_back({Location(0.25), 0.0});
  for (int k = 0; k < 3; ++k) snap.types[0].push_back({Location(0.7), 0.0});
  snap.types[0].push_back({Location(0.1), 0.0});

  Eigen::VectorXd s = location_shares(snap);
  REQUIRE(s.size() == 3);
  CHECK(s[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s[1] == doctest::Approx(0.375).epsilon(1e-15));
  CHECK(s[2] == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(s.sum() == doctest::Approx(1.0).epsilon(1e-15));

  // Pooled across types: matching coordinates merge even across type labels.
  snap.types.resize(2);
  snap.types[1].push_back({Location(0.25), 0.0});
  snap.types[1].push_back({Location(0.9), 0.0});
  Eigen::VectorXd s2 = location_shares(snap);
  REQUIRE(s2.size() == 4);
  CHECK(s2[0] == doctest::Approx(0.5).epsilon(1e-15));

  PopulationSnapshot sites;
  sites.types.resize(1);
  sites.types[0].push_back({Location(2), 0.0});
  sites.types[0].push_back({Location(2), 0.0});
  sites.types[0].push_back({Location(0), 0.0});
  Eigen::VectorXd s3 = location_shares(sites);
  REQUIRE(s3.size() == 2);
  CHECK(s3[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  PopulationSnapshot sphere;
  sphere.types.resize(1);
  sphere.types[0].push_back({Location(Eigen::Vector3d(0, 0, 1)), 0.0});
  sphere.types[0].push_back({Location(Eigen::Vector3d(0, 0, 1)), 0.0});
  sphere.types[0].push_back({Location(Eigen::Vector3d(1, 0, 0)), 0.0});
  sphere.types[0].push_back({Location(Eigen::Vector3d(0, 1, 0)), 0.0});
  Eigen::VectorXd s4 = location_shares(sphere);
  REQUIRE(s4.size() == 3);
  CHECK(s4[0] == doctest::Approx(0.5).epsilon(1e-15));

  PopulationSnapshot empty;
  CHECK_THROWS_AS(location_shares(empty), ValidationError);
}
