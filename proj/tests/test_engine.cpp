#include <cmath>

#include "doctest.h"
#include "fvpop/demos.hpp"
#include "fvpop/engine.hpp"
#include "fvpop/flow.hpp"
#include "fvpop/stats.hpp"

using namespace fvpop;

namespace {

ModelSpec zero_rate_spec() {
  ModelSpec m = logistic_spec(2);
  m.beta = {{PolyD::constant(1, 0.0)}};
  m.rho = {PolyD::constant(1, 0.0)};
  m.init.h0 = Eigen::VectorXd::Constant(1, 1.0);
  return m;
}

}  // namespace

TEST_CASE("default warmup and grid cover the shifted window") {
  SimConfig cfg;
  cfg.N = 400;
  cfg.T_end = 2.0;
  cfg.grid_points = 5;
  CHECK(cfg.warmup() == doctest::Approx(0.05).epsilon(1e-12));
  auto g = cfg.grid();
  REQUIRE(g.size() == 5);
  CHECK(g.front() == doctest::Approx(0.05));
  CHECK(g.back() == doctest::Approx(2.05));
  cfg.t_N = 0.25;
  CHECK(cfg.grid().front() == doctest::Approx(0.25));
}

TEST_CASE("initial counts use largest-remainder apportionment") {
  ModelSpec m = genetics_fixation_spec(0.3);
  auto counts = initial_counts_finite(m, 1600);
  REQUIRE(counts.size() == 1);
  REQUIRE(counts[0].size() == 2);
  // N h0 = 3200 particles split 30:70 exactly.
  CHECK(counts[0][0] == 960);
  CHECK(counts[0][1] == 2240);

  // A fractional split: 5 particles at weights (1/3, 2/3) -> 2 + 3, the
  // larger remainder site winning the leftover particle.
  ModelSpec m2 = logistic_spec(2);
  m2.init.h0 = Eigen::VectorXd::Constant(1, 0.5);
  SourceLaw law;
  law.kind = SourceLaw::Kind::Discrete;
  law.weights = {1.0, 2.0};
  m2.init.placement = {law};
  auto c2 = initial_counts_finite(m2, 10);
  CHECK(c2[0][0] + c2[0][1] == 5);
  CHECK(c2[0][0] == 2);
  CHECK(c2[0][1] == 3);
}

TEST_CASE("all-zero rates leave the population unchanged") {
  ModelSpec m = zero_rate_spec();
  SimConfig cfg;
  cfg.N = 10;
  cfg.T_end = 1.0;
  cfg.seed = 7;
  auto rec = simulate(m, cfg);
  REQUIRE(!rec.h.empty());
  for (const auto& h : rec.h) CHECK(h[0] == 1.0);
  int64_t total = 0;
  for (int64_t c : rec.events_total) total += c;
  CHECK(total == 0);
  CHECK(rec.status == RunStatus::Frozen);
  CHECK(rec.final_state.total_count() == 10);
}

TEST_CASE("extinction is recorded and the grid still fills") {
  ModelSpec m = logistic_spec(1);
  m.beta = {{PolyD::constant(1, 0.0)}};
  m.rho = {PolyD::constant(1, 1.0)};  // pure death at rate N per capita
  m.init.h0 = Eigen::VectorXd::Constant(1, 0.5);
  SimConfig cfg;
  cfg.N = 20;
  cfg.T_end = 5.0;
  cfg.seed = 3;
  auto rec = simulate(m, cfg);
  CHECK(rec.status == RunStatus::Extinct);
  CHECK(rec.status_time > 0);
  REQUIRE(rec.t.size() == static_cast<size_t>(cfg.grid_points));
  CHECK(rec.h.back()[0] == 0.0);
  CHECK(rec.events_total[kDeath] == 10);
}

TEST_CASE("determinism: same seed gives identical records, streams differ") {
  ModelSpec m = logistic_spec(2);
  SimConfig cfg;
  cfg.N = 50;
  cfg.T_end = 0.2;
  cfg.seed = 42;
  auto a = simulate(m, cfg);
  auto b = simulate(m, cfg);
  REQUIRE(a.t.size() == b.t.size());
  for (size_t k = 0; k < a.t.size(); ++k) {
    CHECK(a.t[k] == b.t[k]);
    CHECK(a.h[k] == b.h[k]);
  }
  CHECK(a.events_total == b.events_total);
  cfg.stream = 1;
  auto c = simulate(m, cfg);
  bool differs = a.events_total != c.events_total;
  for (size_t k = 0; k < a.t.size() && !differs; ++k) differs = a.h[k] != c.h[k];
  CHECK(differs);
}

TEST_CASE("mass bookkeeping: density moves by 1/N per demographic event") {
  ModelSpec m = immigration_spec();
  SimConfig cfg;
  cfg.N = 30;
  cfg.T_end = 0.3;
  cfg.seed = 11;
  cfg.grid_points = 200;
  auto rec = simulate(m, cfg);
  for (size_t k = 1; k < rec.t.size(); ++k) {
    int64_t dcount = rec.counts[k][0] - rec.counts[k - 1][0];
    int64_t births = rec.events[k][kLocalBirth] + rec.events[k][kDispersedBirth] -
                     rec.events[k - 1][kLocalBirth] - rec.events[k - 1][kDispersedBirth];
    int64_t deaths = rec.events[k][kDeath] - rec.events[k - 1][kDeath];
    int64_t imm = rec.events[k][kImmigration] - rec.events[k - 1][kImmigration];
    CHECK(dcount == births + imm - deaths);
    CHECK(rec.h[k][0] == static_cast<double>(rec.counts[k][0]) / 30);
  }
}

TEST_CASE("logistic mean density settles at the flow value") {
  // Prop-2.3(A)-style check at modest size: mean of h(1 + t_N) over
  // replicates should sit at psi(h0, N t) ~ 2 within CLT margin.
  ModelSpec m = logistic_spec(1);
  m.init.h0 = Eigen::VectorXd::Constant(1, 0.5);
  SimConfig cfg;
  cfg.N = 400;
  cfg.T_end = 1.0;
  cfg.grid_points = 2;
  cfg.seed = 2024;
  cfg.record_observables = false;
  cfg.keep_final_state = false;
  int R = 200;
  auto recs = simulate_replicates(m, cfg, R);
  double mean = 0;
  for (const auto& r : recs) mean += r.h.back()[0];
  mean /= R;
  CHECK(std::abs(mean - 2.0) < 0.05);
}

TEST_CASE("monomorphic stop truncates the grid and names the fixed site") {
  ModelSpec m = genetics_fixation_spec(0.5);
  SimConfig cfg;
  cfg.N = 30;
  cfg.T_end = 50.0;
  cfg.seed = 5;
  cfg.stop_on_monomorphic = true;
  cfg.record_observables = false;
  auto rec = simulate(m, cfg);
  REQUIRE(rec.status == RunStatus::Fixated);
  CHECK(rec.fixed_site >= 0);
  CHECK(rec.fixed_site <= 1);
  CHECK(rec.status_time > 0);
  CHECK(rec.t.size() < static_cast<size_t>(cfg.grid_points));
  // The final state is monomorphic in the recorded site.
  int other = 1 - rec.fixed_site;
  for (const auto& p : rec.final_state.types[0]) CHECK(std::get<int>(p.loc) != other);
}

TEST_CASE("migration conserves mass and mixes sites") {
  ModelSpec m = logistic_spec(2);
  m.beta = {{PolyD::constant(1, 0.0)}};
  m.rho = {PolyD::constant(1, 0.0)};
  FiniteSetDomain dom;
  dom.K = 2;
  Eigen::MatrixXd Q(2, 2);
  Q << -1, 1, 2, -2;
  dom.migration = {Q};
  m.domain = dom;
  m.init.h0 = Eigen::VectorXd::Constant(1, 2.0);
  SourceLaw law;
  law.kind = SourceLaw::Kind::Discrete;
  law.weights = {1.0, 0.0};
  m.init.placement = {law};
  SimConfig cfg;
  cfg.N = 100;
  cfg.T_end = 6.0;
  cfg.seed = 9;
  cfg.record_grid = {6.0};
  auto rec = simulate(m, cfg);
  CHECK(rec.events_total[kMigration] > 0);
  CHECK(rec.counts.back()[0] == 200);
  // Stationary split of the two-state chain is (2/3, 1/3).
  double f0 = rec.obs.back()(0, 0) / rec.h.back()[0];
  CHECK(f0 == doctest::Approx(2.0 / 3.0).epsilon(0.12));
}

TEST_CASE("thinning acceptance leaves rate totals exact") {
  // Constant selection field b with matching sup: acceptance is certain, so
  // the thinning channel adds exactly b to the per-capita birth rate. A
  // model with beta=1, b=1, sup=1 must match a plain beta=2 model in law.
  ModelSpec sel = logistic_spec(1);
  sel.beta = {{PolyD::constant(1, 1.0)}};
  SpatialField f;
  f.present = true;
  f.site_polys = {PolyD::constant(1, 0.0)};
  f.sup_bound = 0.0;
  // b(x,h) = N * 1 would break the 1/N scaling; instead compare at fixed N:
  // the selection field contributes b/N to the per-capita rate, so give it
  // b = N * beta_extra via the density polynomial at runtime N.
  SimConfig cfg;
  cfg.N = 64;
  cfg.T_end = 0.5;
  cfg.seed = 77;
  cfg.record_observables = false;
  f.site_polys = {PolyD::constant(1, static_cast<double>(cfg.N))};
  f.sup_bound = static_cast<double>(cfg.N);
  sel.birth_mod = {{f}};
  auto rec_sel = simulate(sel, cfg);
  CHECK(rec_sel.events_total[kThinningReject] == 0);

  ModelSpec plain = logistic_spec(1);
  // Identical effective rates, but the two runs consume the RNG differently
  // (one extra accept draw per birth), so compare ensemble moments.
  int R = 120;
  cfg.keep_final_state = false;
  double m_sel = 0, m_plain = 0;
  auto rs = simulate_replicates(sel, cfg, R);
  auto rp = simulate_replicates(plain, cfg, R);
  for (int r = 0; r < R; ++r) {
    m_sel += rs[r].h.back()[0];
    m_plain += rp[r].h.back()[0];
  }
  CHECK(std::abs(m_sel - m_plain) / R < 0.05);
}

TEST_CASE("replicates merge deterministically in stream order") {
  ModelSpec m = logistic_spec(1);
  SimConfig cfg;
  cfg.N = 40;
  cfg.T_end = 0.1;
  cfg.seed = 13;
  cfg.record_observables = false;
  auto batch = simulate_replicates(m, cfg, 4);
  for (int r = 0; r < 4; ++r) {
    SimConfig single = cfg;
    single.stream = r;
    auto one = simulate(m, single);
    CHECK(one.events_total == batch[r].events_total);
    CHECK(one.h.back()[0] == batch[r].h.back()[0]);
  }
}

TEST_CASE("generator matches closed forms on the logistic model") {
  ModelSpec m = logistic_spec(1);
  int64_t N = 40;
  std::vector<std::vector<int64_t>> counts = {{50}};  // h = 1.25
  double h = 1.25;
  auto F = monomial_density(1, 0, 1);
  double expected = static_cast<double>(N) * (2.0 - h) * h;  // N theta(h)
  CHECK(generator_apply(m, F, counts, N) == doctest::Approx(expected).epsilon(1e-12));

  // Constants are annihilated.
  MonomialObservable one;
  CHECK(generator_apply(m, one, counts, N) == doctest::Approx(0.0));

  // Single-particle migration flux: F = <1_site2, mu> picks up Q(1,2) n_1 / N.
  ModelSpec mig = logistic_spec(2);
  mig.beta = {{PolyD::constant(1, 0.0)}};
  mig.rho = {PolyD::constant(1, 0.0)};
  FiniteSetDomain dom;
  dom.K = 2;
  Eigen::MatrixXd Q(2, 2);
  Q << -3, 3, 0.5, -0.5;
  dom.migration = {Q};
  mig.domain = dom;
  Eigen::VectorXd f(2);
  f << 0, 1;
  auto Fm = monomial_single(1, 0, f);
  std::vector<std::vector<int64_t>> cm = {{7, 5}};
  // Exact master-equation drift: 7 * 3 / N into site 2, 5 * 0.5 / N out.
  double drift = (7 * 3.0 - 5 * 0.5) / static_cast<double>(N);
  CHECK(generator_apply(mig, Fm, cm, N) == doctest::Approx(drift).epsilon(1e-12));
}

TEST_CASE("generator handles dispersal splits and immigration") {
  ModelSpec m = immigration_spec();
  int64_t N = 30;
  std::vector<std::vector<int64_t>> counts = {{40, 20}};
  auto F = monomial_density(1, 0, 2);
  double h = 2.0;
  // Births and deaths cancel at h=2; immigration adds kappa exactly.
  CHECK(generator_apply(m, F, counts, N) == doctest::Approx(0.5).epsilon(1e-12));

  // Rare dispersal redistributes births between sites without changing the
  // total-mass drift.
  ModelSpec d = m;
  Dispersal disp;
  disp.kind = Dispersal::Kind::Rare;
  disp.c = 2.0;
  disp.kernel = SourceLaw{};
  d.dispersal = {{disp}};
  CHECK(generator_apply(d, F, counts, N) == doctest::Approx(0.5).epsilon(1e-12));
  Eigen::VectorXd f(2);
  f << 1, 0;
  auto F0 = monomial_single(1, 0, f);
  double g_plain = generator_apply(m, F0, counts, N);
  double g_disp = generator_apply(d, F0, counts, N);
  // Site 0 holds 2/3 of the births (counts 40 of 60); dispersal redraws a
  // c/N fraction uniformly, moving (2/3 - 1/2) of them off site 0. Total
  // birth rate N^2 beta h, times c/N, times 1/N per landing: the N's cancel,
  // leaving beta h c (2/3 - 1/2).
  double delta = 2.0 * h * disp.c * (2.0 / 3.0 - 0.5);
  CHECK(g_plain - g_disp == doctest::Approx(delta).epsilon(1e-9));
}

TEST_CASE("monte-carlo drift agrees with the analytic generator") {
  ModelSpec m = logistic_spec(2);
  int64_t N = 50;
  std::vector<std::vector<int64_t>> counts = {{60, 40}};
  auto F = monomial_density(1, 0, 2);
  auto res = generator_consistency_test(m, F, counts, N, 1e-4 / N, 20000, 99);
  CHECK(std::abs(res.z) < 4);
  Eigen::VectorXd f(2);
  f << 1, 0;
  auto res2 = generator_consistency_test(m, monomial_single(1, 0, f), counts, N, 1e-4 / N, 20000, 100);
  CHECK(std::abs(res2.z) < 4);
}

TEST_CASE("interval engine: zero diffusion keeps locations, dispersal redraws") {
  ModelSpec m = genetics_alleles_spec();
  SimConfig cfg;
  cfg.N = 60;
  cfg.T_end = 0.4;
  cfg.seed = 21;
  cfg.record_observables = true;
  auto rec = simulate(m, cfg);
  CHECK(rec.events_total[kDispersedBirth] > 0);
  CHECK(rec.events_total[kLocalBirth] > 0);
  // Dispersed fraction of accepted births is c/N.
  double frac = static_cast<double>(rec.events_total[kDispersedBirth]) /
                static_cast<double>(rec.events_total[kLocalBirth] + rec.events_total[kDispersedBirth]);
  double expect = 0.5 / static_cast<double>(cfg.N);
  CHECK(frac > 0.1 * expect);
  CHECK(frac < 10 * expect);
  for (const auto& p : rec.final_state.types[0]) {
    double x = std::get<double>(p.loc);
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
  }
}

TEST_CASE("sphere engine: densities and positions stay admissible") {
  ModelSpec m = polarity_spec();
  SimConfig cfg;
  cfg.N = 200;
  cfg.T_end = 2.0;
  cfg.seed = 31;
  cfg.record_clans = true;
  auto rec = simulate(m, cfg);
  for (const auto& h : rec.h) {
    CHECK(h[0] >= 0.0);
    CHECK(h[0] <= 1.0);
  }
  for (const auto& p : rec.final_state.types[0]) {
    const auto& u = std::get<Eigen::Vector3d>(p.loc);
    CHECK(std::abs(u.norm() - 1.0) < 1e-9);
  }
  REQUIRE(!rec.clans.empty());
  const ClanSummary& cs = rec.clans.back();
  CHECK(cs.largest > 0.0);
  CHECK(cs.largest <= 1.0);
  double sum = cs.shares.sum();
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(rec.events_total[kImmigration] > 0);
}

TEST_CASE("clan ids only shrink by death, copy by birth, refresh by immigration") {
  ModelSpec m = polarity_spec();
  SimConfig cfg;
  cfg.N = 50;
  cfg.T_end = 1.0;
  cfg.seed = 41;
  cfg.record_clans = true;
  cfg.grid_points = 30;
  auto rec = simulate(m, cfg);
  // Share vectors are valid distributions at every grid point.
  for (const auto& cs : rec.clans) {
    if (cs.shares.size() == 0) continue;
    CHECK(cs.shares.sum() == doctest::Approx(1.0).epsilon(1e-9));
    for (int i = 1; i < cs.shares.size(); ++i) CHECK(cs.shares[i] <= cs.shares[i - 1]);
  }
}

TEST_CASE("state recording stores one snapshot per grid point") {
  ModelSpec m = genetics_alleles_spec();
  SimConfig cfg;
  cfg.N = 50;
  cfg.T_end = 0.3;
  cfg.t_N = 0.0;
  cfg.seed = 9;
  cfg.grid_points = 7;
  cfg.record_states = true;
  auto rec = simulate(m, cfg);
  REQUIRE(rec.states.size() == rec.t.size());
  for (size_t g = 0; g < rec.states.size(); ++g) {
    const PopulationSnapshot& snap = rec.states[g];
    CHECK(snap.t == rec.t[g]);
    CHECK(snap.N == cfg.N);
    int64_t total = 0;
    for (size_t i = 0; i < snap.types.size(); ++i) {
      total += static_cast<int64_t>(snap.types[i].size());
      CHECK(static_cast<int64_t>(snap.types[i].size()) == rec.counts[g][i]);
    }
    CHECK(total == snap.total_count());
  }
  // Zero-diffusion interval: coordinates only arise by copy or fresh draw,
  // so location shares give the family partition at each grid point.
  Eigen::VectorXd fam = location_shares(rec.states.back());
  CHECK(fam.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fam.size() <= static_cast<int>(rec.final_state.total_count()));

  ModelSpec ring = symmetric_ring_spec();
  SimConfig fcfg;
  fcfg.N = 40;
  fcfg.T_end = 0.2;
  fcfg.t_N = 0.0;
  fcfg.seed = 12;
  fcfg.grid_points = 5;
  fcfg.record_states = true;
  auto frec = simulate(ring, fcfg);
  REQUIRE(frec.states.size() == frec.t.size());
  for (size_t g = 0; g < frec.states.size(); ++g) {
    CHECK(frec.states[g].t == frec.t[g]);
    for (size_t i = 0; i < frec.states[g].types.size(); ++i)
      CHECK(static_cast<int64_t>(frec.states[g].types[i].size()) == frec.counts[g][i]);
  }

  SimConfig off = cfg;
  off.record_states = false;
  auto rec2 = simulate(m, off);
  CHECK(rec2.states.empty());
}
