#include <cstdint>
#include <string>

#include "doctest.h"
#include "fvpop/config_io.hpp"
#include "fvpop/demos.hpp"
#include "fvpop/error.hpp"

using namespace fvpop;

namespace {

// Minimal hand-written document exercising the bare-number polynomial
// shorthand and the term-list form side by side.
const char* kTwoTypeDoc = R"({
  "model": {
    "q": 2,
    "domain": {"kind": "finite", "sites": 1},
    "beta": [[2.0, 1.0], [1.0, 2.0]],
    "rho": [
      [{"powers": [1, 0], "coef": 1.0}, {"powers": [0, 1], "coef": 1.0}],
      [{"powers": [1, 0], "coef": 1.0}, {"powers": [0, 1], "coef": 1.0}]
    ],
    "H_max": 10.0,
    "init": {
      "h0": [1.5, 1.5],
      "placement": [{"kind": "uniform"}, {"kind": "uniform"}]
    }
  },
  "sim": {"N": 200, "T_end": 2.0, "seed": 7}
})";

}  // namespace

TEST_CASE("hand-written document parses with shorthand and defaults") {
  RunConfig cfg = config_from_json(kTwoTypeDoc);

  CHECK(cfg.model.q == 2);
  CHECK(cfg.model.H_max == 10.0);
  const auto& fin = std::get<FiniteSetDomain>(cfg.model.domain);
  CHECK(fin.K == 1);
  CHECK(fin.migration.empty());

  // Bare numbers become constant polynomials.
  CHECK(cfg.model.beta[0][0].degree() == 0);
  Eigen::VectorXd h(2);
  h << 0.4, 0.9;
  CHECK(cfg.model.beta[0][0].eval(h) == 2.0);
  CHECK(cfg.model.beta[0][1].eval(h) == 1.0);
  // Term lists evaluate as written: rho_i(h) = h_1 + h_2.
  CHECK(cfg.model.rho[0].eval(h) == doctest::Approx(1.3).epsilon(1e-15));
  CHECK(cfg.model.rho[1].degree() == 1);

  CHECK(cfg.model.init.h0.size() == 2);
  CHECK(cfg.model.init.h0[0] == 1.5);
  CHECK(cfg.model.init.fresh_clans);
  CHECK_FALSE(cfg.model.track_clans);
  CHECK_FALSE(cfg.model.has_immigration());
  CHECK_FALSE(cfg.model.has_dispersal());

  CHECK(cfg.sim.N == 200);
  CHECK(cfg.sim.T_end == 2.0);
  CHECK(cfg.sim.seed == 7);
  // Unset fields keep their defaults.
  SimConfig defaults;
  CHECK(cfg.sim.t_N == defaults.t_N);
  CHECK(cfg.sim.stream == defaults.stream);
  CHECK(cfg.sim.grid_points == defaults.grid_points);
}

TEST_CASE("serialization is canonical and round-trip stable") {
  // One representative of every optional mechanism: plain, migration +
  // per-type laws, immigration, rare dispersal on a continuous domain, and
  // the sphere model with vmf-style placement plus clan tracking.
  std::vector<ModelSpec> specs = {
      logistic_spec(),          symmetric_pair_spec(),    symmetric_ring_spec(),
      immigration_spec(),       genetics_fixation_spec(), genetics_alleles_spec(),
      polarity_spec(),
  };
  for (const ModelSpec& m : specs) {
    CAPTURE(m.name);
    RunConfig cfg;
    cfg.model = m;
    cfg.sim.N = 400;
    cfg.sim.seed = 11;

    std::string once = config_to_json(cfg);
    RunConfig back = config_from_json(once);
    std::string twice = config_to_json(back);
    CHECK(once == twice);
    CHECK(config_hash(cfg) == config_hash(back));
  }
}

TEST_CASE("canonicalization is idempotent on hand-written input") {
  // The hand-written text is not canonical (key order, integer literals),
  // but one parse/serialize pass reaches the fixed point.
  std::string canon = config_to_json(config_from_json(kTwoTypeDoc));
  CHECK(canon != kTwoTypeDoc);
  CHECK(config_to_json(config_from_json(canon)) == canon);
}

TEST_CASE("round-trip preserves every optional mechanism") {
  RunConfig cfg;
  cfg.model = polarity_spec();
  RunConfig back = config_from_json(config_to_json(cfg));

  const ModelSpec& a = cfg.model;
  const ModelSpec& b = back.model;
  CHECK(b.name == a.name);
  CHECK(b.q == a.q);
  CHECK(b.track_clans == a.track_clans);
  CHECK(b.has_immigration() == a.has_immigration());
  CHECK(b.kappa_growth == a.kappa_growth);
  const auto& sa = std::get<SphereDomain>(a.domain);
  const auto& sb = std::get<SphereDomain>(b.domain);
  CHECK(sb.radius == sa.radius);
  CHECK(sb.diffusion == sa.diffusion);
  Eigen::VectorXd h = Eigen::VectorXd::Constant(a.q, 0.37);
  CHECK(b.beta[0][0].eval(h) == a.beta[0][0].eval(h));
  CHECK(b.rho[0].eval(h) == a.rho[0].eval(h));
  CHECK(b.kappa[0].eval(h) == a.kappa[0].eval(h));
  CHECK(b.immigration_law[0].kind == a.immigration_law[0].kind);

  RunConfig ring;
  ring.model = symmetric_ring_spec();
  RunConfig ring_back = config_from_json(config_to_json(ring));
  const auto& fa = std::get<FiniteSetDomain>(ring.model.domain);
  const auto& fb = std::get<FiniteSetDomain>(ring_back.model.domain);
  REQUIRE(fb.migration.size() == fa.migration.size());
  for (size_t i = 0; i < fa.migration.size(); ++i)
    CHECK((fb.migration[i] - fa.migration[i]).cwiseAbs().maxCoeff() == 0.0);

  RunConfig alleles;
  alleles.model = genetics_alleles_spec();
  RunConfig alleles_back = config_from_json(config_to_json(alleles));
  const Dispersal& d = alleles_back.model.dispersal_at(0, 0);
  CHECK(d.kind == Dispersal::Kind::Rare);
  CHECK(d.c == alleles.model.dispersal_at(0, 0).c);
  CHECK(d.kernel.kind == SourceLaw::Kind::Uniform);
}

TEST_CASE("malformed documents fail with the offending path") {
  auto message_of = [](const std::string& text) -> std::string {
    try {
      config_from_json(text);
    } catch (const ConfigError& e) {
      return e.what();
    }
    return "";
  };

  CHECK(message_of("{\"model\": {\"q\": 1}}").find("model.domain") != std::string::npos);

  std::string no_beta = R"({"model": {"q": 1,
      "domain": {"kind": "finite", "sites": 1},
      "rho": [1.0], "H_max": 4.0,
      "init": {"h0": [1.0], "placement": [{"kind": "uniform"}]}}})";
  CHECK(message_of(no_beta).find("model.beta") != std::string::npos);

  // Wrong exponent arity inside a polynomial term.
  std::string bad_powers = R"({"model": {"q": 1,
      "domain": {"kind": "finite", "sites": 1},
      "beta": [[[{"powers": [1, 2], "coef": 1.0}]]],
      "rho": [1.0], "H_max": 4.0,
      "init": {"h0": [1.0], "placement": [{"kind": "uniform"}]}}})";
  CHECK(message_of(bad_powers).find("model.beta[0][0][0].powers") != std::string::npos);

  std::string bad_law = R"({"model": {"q": 1,
      "domain": {"kind": "finite", "sites": 1},
      "beta": [[2.0]], "rho": [1.0], "H_max": 4.0,
      "init": {"h0": [1.0], "placement": [{"kind": "gaussian"}]}}})";
  CHECK(message_of(bad_law).find("model.init.placement[0].kind") != std::string::npos);

  std::string bad_domain = R"({"model": {"q": 1,
      "domain": {"kind": "torus"},
      "beta": [[2.0]], "rho": [1.0], "H_max": 4.0,
      "init": {"h0": [1.0], "placement": [{"kind": "uniform"}]}}})";
  CHECK(message_of(bad_domain).find("model.domain.kind") != std::string::npos);

  // Migration must carry one full K x K matrix per type.
  std::string ragged = R"({"model": {"q": 1,
      "domain": {"kind": "finite", "sites": 2, "migration": [[[0.0, 1.0]]]},
      "beta": [[2.0]], "rho": [1.0], "H_max": 4.0,
      "init": {"h0": [1.0], "placement": [{"kind": "uniform"}]}}})";
  CHECK(message_of(ragged).find("model.domain.migration[0]") != std::string::npos);

  std::string bad_q = R"({"model": {"q": 0,
      "domain": {"kind": "finite", "sites": 1},
      "beta": [], "rho": [], "H_max": 4.0,
      "init": {"h0": [], "placement": []}}})";
  CHECK(message_of(bad_q).find("model.q") != std::string::npos);

  CHECK(message_of("not json at all{").find("not valid JSON") != std::string::npos);
  CHECK_THROWS_AS(load_config("/nonexistent/path.json"), ConfigError);
}

TEST_CASE("dotted overrides patch scalars, arrays, and strings") {
  std::vector<std::pair<std::string, std::string>> ov = {
      {"sim.N", "400"},
      {"sim.T_end", "3.5"},
      {"model.init.h0", "[1.0, 2.0]"},
      {"model.name", "renamed"},
      {"sim.stop_on_monomorphic", "true"},
  };
  RunConfig cfg = config_from_json(apply_overrides(kTwoTypeDoc, ov));
  CHECK(cfg.sim.N == 400);
  CHECK(cfg.sim.T_end == 3.5);
  CHECK(cfg.model.init.h0[0] == 1.0);
  CHECK(cfg.model.init.h0[1] == 2.0);
  CHECK(cfg.model.name == "renamed");  // unquoted values fall back to strings
  CHECK(cfg.sim.stop_on_monomorphic);

  // Overriding with the existing value leaves the canonical form unchanged.
  std::string canon = config_to_json(config_from_json(kTwoTypeDoc));
  std::string same = config_to_json(config_from_json(
      apply_overrides(canon, {{"sim.N", "200"}})));
  CHECK(same == canon);

  CHECK_THROWS_AS(apply_overrides(kTwoTypeDoc, {{"", "1"}}), ConfigError);
  CHECK_THROWS_AS(apply_overrides(kTwoTypeDoc, {{"model..q", "1"}}), ConfigError);
  // A path segment cannot descend into an array.
  CHECK_THROWS_AS(apply_overrides(kTwoTypeDoc, {{"model.rho.first", "1"}}), ConfigError);
}

TEST_CASE("config hash separates configs and matches fnv1a on the dump") {
  // Published FNV-1a 64-bit reference values.
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);

  RunConfig cfg = config_from_json(kTwoTypeDoc);
  std::string h = config_hash(cfg);
  CHECK(h.size() == 16);
  CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);

  char expect[17];
  std::snprintf(expect, sizeof(expect), "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_to_json(cfg))));
  CHECK(h == expect);

  RunConfig other = config_from_json(apply_overrides(kTwoTypeDoc, {{"sim.seed", "8"}}));
  CHECK(config_hash(other) != h);
}

TEST_CASE("state recording and replicate count survive the round trip") {
  RunConfig cfg;
  cfg.model = logistic_spec();
  cfg.sim.record_states = true;
  cfg.sim.replicates = 25;
  RunConfig back = config_from_json(config_to_json(cfg));
  CHECK(back.sim.record_states);
  CHECK(back.sim.replicates == 25);

  // Replicates enter the run recipe, so they move the hash.
  RunConfig one;
  one.model = logistic_spec();
  RunConfig many;
  many.model = logistic_spec();
  many.sim.replicates = 50;
  CHECK(config_hash(one) != config_hash(many));

  std::string doc = config_to_json(cfg);
  CHECK_THROWS_WITH_AS(
      (void)config_from_json(apply_overrides(doc, {{"sim.replicates", "0"}})),
      doctest::Contains("sim.replicates"), ConfigError);
}
