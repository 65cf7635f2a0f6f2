#include "fvpop/config_io.hpp"

#include <fstream>
#include <sstream>

#include "fvpop/error.hpp"
#include "json.hpp"

namespace fvpop {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

const json& need(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) fail(path + "." + key, "missing field");
  return *it;
}

double number_at(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

int int_at(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<int>();
}

bool bool_at(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected a boolean");
  return j.get<bool>();
}

std::string string_at(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

std::vector<double> vector_at(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (size_t i = 0; i < j.size(); ++i)
    out.push_back(number_at(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

Eigen::VectorXd eigen_at(const json& j, const std::string& path) {
  std::vector<double> v = vector_at(j, path);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<long>(v.size()));
}

// Polynomials: a bare number is a constant; otherwise a list of
// {"powers": [...], "coef": c} terms with arity nvars.
PolyD poly_from(const json& j, int nvars, const std::string& path) {
  if (j.is_number()) return PolyD::constant(nvars, j.get<double>());
  if (!j.is_array()) fail(path, "expected a number or a list of terms");
  PolyD p(nvars);
  for (size_t t = 0; t < j.size(); ++t) {
    std::string tp = path + "[" + std::to_string(t) + "]";
    const json& term = j[t];
    if (!term.is_object()) fail(tp, "expected a {powers, coef} term");
    const json& pw = need(term, "powers", tp);
    if (!pw.is_array() || static_cast<int>(pw.size()) != nvars)
      fail(tp + ".powers", "expected " + std::to_string(nvars) + " exponents");
    MultiIndex a(nvars);
    for (int v = 0; v < nvars; ++v) {
      a[v] = int_at(pw[v], tp + ".powers[" + std::to_string(v) + "]");
      if (a[v] < 0) fail(tp + ".powers", "exponents must be nonnegative");
    }
    p.add_term(a, number_at(need(term, "coef", tp), tp + ".coef"));
  }
  return p;
}

json poly_to(const PolyD& p) {
  // Constants serialize to their bare value.
  if (p.is_zero()) return json(0.0);
  if (p.terms().size() == 1 && mi_degree(p.terms().begin()->first) == 0)
    return json(p.terms().begin()->second);
  json terms = json::array();
  for (const auto& [a, c] : p.terms()) {
    json term;
    term["powers"] = a;
    term["coef"] = c;
    terms.push_back(term);
  }
  return terms;
}

SourceLaw law_from(const json& j, const std::string& path) {
  SourceLaw law;
  std::string kind = string_at(need(j, "kind", path), path + ".kind");
  if (kind == "uniform") {
    law.kind = SourceLaw::Kind::Uniform;
  } else if (kind == "discrete") {
    law.kind = SourceLaw::Kind::Discrete;
    law.weights = vector_at(need(j, "weights", path), path + ".weights");
  } else if (kind == "vmf") {
    law.kind = SourceLaw::Kind::VonMisesFisher;
    Eigen::VectorXd axis = eigen_at(need(j, "axis", path), path + ".axis");
    if (axis.size() != 3) fail(path + ".axis", "expected 3 components");
    law.axis = axis;
    law.concentration = number_at(need(j, "concentration", path), path + ".concentration");
  } else {
    fail(path + ".kind", "unknown source law '" + kind + "'");
  }
  return law;
}

json law_to(const SourceLaw& law) {
  json j;
  switch (law.kind) {
    case SourceLaw::Kind::Uniform:
      j["kind"] = "uniform";
      break;
    case SourceLaw::Kind::Discrete:
      j["kind"] = "discrete";
      j["weights"] = law.weights;
      break;
    case SourceLaw::Kind::VonMisesFisher:
      j["kind"] = "vmf";
      j["axis"] = {law.axis[0], law.axis[1], law.axis[2]};
      j["concentration"] = law.concentration;
      break;
  }
  return j;
}

SpatialDomain domain_from(const json& j, const std::string& path) {
  std::string kind = string_at(need(j, "kind", path), path + ".kind");
  if (kind == "finite") {
    FiniteSetDomain d;
    d.K = int_at(need(j, "sites", path), path + ".sites");
    if (auto it = j.find("migration"); it != j.end()) {
      if (!it->is_array()) fail(path + ".migration", "expected per-type matrices");
      for (size_t i = 0; i < it->size(); ++i) {
        std::string mp = path + ".migration[" + std::to_string(i) + "]";
        const json& mat = (*it)[i];
        if (!mat.is_array() || static_cast<int>(mat.size()) != d.K)
          fail(mp, "expected a " + std::to_string(d.K) + "-row matrix");
        Eigen::MatrixXd Q(d.K, d.K);
        for (int r = 0; r < d.K; ++r) {
          Eigen::VectorXd row = eigen_at(mat[r], mp + "[" + std::to_string(r) + "]");
          if (row.size() != d.K) fail(mp, "migration matrix must be square");
          Q.row(r) = row;
        }
        d.migration.push_back(Q);
      }
    }
    return d;
  }
  if (kind == "circle") {
    CircleDomain d;
    d.circumference = number_at(need(j, "circumference", path), path + ".circumference");
    d.diffusion = vector_at(need(j, "diffusion", path), path + ".diffusion");
    return d;
  }
  if (kind == "sphere") {
    SphereDomain d;
    d.radius = number_at(need(j, "radius", path), path + ".radius");
    d.diffusion = vector_at(need(j, "diffusion", path), path + ".diffusion");
    return d;
  }
  if (kind == "interval") {
    IntervalDomain d;
    d.diffusion = vector_at(need(j, "diffusion", path), path + ".diffusion");
    return d;
  }
  fail(path + ".kind", "unknown domain '" + kind + "'");
}

json domain_to(const SpatialDomain& dom) {
  json j;
  if (const auto* f = std::get_if<FiniteSetDomain>(&dom)) {
    j["kind"] = "finite";
    j["sites"] = f->K;
    if (!f->migration.empty()) {
      json mats = json::array();
      for (const Eigen::MatrixXd& Q : f->migration) {
        json mat = json::array();
        for (int r = 0; r < Q.rows(); ++r) {
          json row = json::array();
          for (int c = 0; c < Q.cols(); ++c) row.push_back(Q(r, c));
          mat.push_back(row);
        }
        mats.push_back(mat);
      }
      j["migration"] = mats;
    }
  } else if (const auto* c = std::get_if<CircleDomain>(&dom)) {
    j["kind"] = "circle";
    j["circumference"] = c->circumference;
    j["diffusion"] = c->diffusion;
  } else if (const auto* s = std::get_if<SphereDomain>(&dom)) {
    j["kind"] = "sphere";
    j["radius"] = s->radius;
    j["diffusion"] = s->diffusion;
  } else {
    j["kind"] = "interval";
    j["diffusion"] = std::get<IntervalDomain>(dom).diffusion;
  }
  return j;
}

Dispersal dispersal_from(const json& j, const std::string& path) {
  Dispersal d;
  if (j.is_null()) return d;
  std::string kind = string_at(need(j, "kind", path), path + ".kind");
  if (kind == "none") return d;
  if (kind == "rare") {
    d.kind = Dispersal::Kind::Rare;
    d.c = number_at(need(j, "c", path), path + ".c");
    d.kernel = law_from(need(j, "kernel", path), path + ".kernel");
  } else if (kind == "local") {
    d.kind = Dispersal::Kind::Local;
    d.scale = number_at(need(j, "scale", path), path + ".scale");
  } else {
    fail(path + ".kind", "unknown dispersal '" + kind + "'");
  }
  return d;
}

json dispersal_to(const Dispersal& d) {
  if (d.kind == Dispersal::Kind::None) return json();
  json j;
  if (d.kind == Dispersal::Kind::Rare) {
    j["kind"] = "rare";
    j["c"] = d.c;
    j["kernel"] = law_to(d.kernel);
  } else {
    j["kind"] = "local";
    j["scale"] = d.scale;
  }
  return j;
}

SpatialField field_from(const json& j, int nvars, const std::string& path) {
  SpatialField f;
  if (j.is_null()) return f;
  if (!j.is_object()) fail(path, "expected a field object or null");
  f.present = true;
  f.sup_bound = number_at(need(j, "sup_bound", path), path + ".sup_bound");
  if (auto it = j.find("site_polys"); it != j.end()) {
    if (!it->is_array()) fail(path + ".site_polys", "expected one polynomial per site");
    for (size_t s = 0; s < it->size(); ++s)
      f.site_polys.push_back(
          poly_from((*it)[s], nvars, path + ".site_polys[" + std::to_string(s) + "]"));
  } else {
    f.h_poly = poly_from(need(j, "h_poly", path), nvars, path + ".h_poly");
    f.profile = eigen_at(need(j, "profile", path), path + ".profile");
  }
  return f;
}

json field_to(const SpatialField& f) {
  if (!f.present) return json();
  json j;
  j["sup_bound"] = f.sup_bound;
  if (!f.site_polys.empty()) {
    json polys = json::array();
    for (const PolyD& p : f.site_polys) polys.push_back(poly_to(p));
    j["site_polys"] = polys;
  } else {
    j["h_poly"] = poly_to(f.h_poly);
    json prof = json::array();
    for (int i = 0; i < f.profile.size(); ++i) prof.push_back(f.profile[i]);
    j["profile"] = prof;
  }
  return j;
}

ModelSpec model_from(const json& j, const std::string& path) {
  ModelSpec m;
  if (auto it = j.find("name"); it != j.end()) {
    if (!it->is_string()) fail(path + ".name", "expected a string");
    m.name = it->get<std::string>();
  }
  m.q = int_at(need(j, "q", path), path + ".q");
  if (m.q < 1) fail(path + ".q", "needs at least one type");
  m.domain = domain_from(need(j, "domain", path), path + ".domain");

  const json& beta = need(j, "beta", path);
  if (!beta.is_array() || static_cast<int>(beta.size()) != m.q)
    fail(path + ".beta", "expected a " + std::to_string(m.q) + "-row matrix of polynomials");
  m.beta.resize(m.q);
  for (int i = 0; i < m.q; ++i) {
    std::string bp = path + ".beta[" + std::to_string(i) + "]";
    if (!beta[i].is_array() || static_cast<int>(beta[i].size()) != m.q)
      fail(bp, "expected " + std::to_string(m.q) + " polynomials");
    for (int k = 0; k < m.q; ++k)
      m.beta[i].push_back(poly_from(beta[i][k], m.q, bp + "[" + std::to_string(k) + "]"));
  }
  const json& rho = need(j, "rho", path);
  if (!rho.is_array() || static_cast<int>(rho.size()) != m.q)
    fail(path + ".rho", "expected " + std::to_string(m.q) + " polynomials");
  for (int i = 0; i < m.q; ++i)
    m.rho.push_back(poly_from(rho[i], m.q, path + ".rho[" + std::to_string(i) + "]"));
  m.H_max = number_at(need(j, "H_max", path), path + ".H_max");

  auto type_list = [&](const json& arr, const std::string& p) -> const json& {
    if (!arr.is_array() || static_cast<int>(arr.size()) != m.q)
      fail(p, "expected " + std::to_string(m.q) + " entries (one per type)");
    return arr;
  };
  if (auto it = j.find("birth_mod"); it != j.end()) {
    const json& rows = type_list(*it, path + ".birth_mod");
    m.birth_mod.resize(m.q);
    for (int i = 0; i < m.q; ++i) {
      std::string rp = path + ".birth_mod[" + std::to_string(i) + "]";
      const json& row = type_list(rows[i], rp);
      for (int k = 0; k < m.q; ++k)
        m.birth_mod[i].push_back(field_from(row[k], m.q, rp + "[" + std::to_string(k) + "]"));
    }
  }
  if (auto it = j.find("death_mod"); it != j.end()) {
    const json& row = type_list(*it, path + ".death_mod");
    for (int i = 0; i < m.q; ++i)
      m.death_mod.push_back(
          field_from(row[i], m.q, path + ".death_mod[" + std::to_string(i) + "]"));
  }
  if (auto it = j.find("dispersal"); it != j.end()) {
    const json& rows = type_list(*it, path + ".dispersal");
    m.dispersal.resize(m.q);
    for (int i = 0; i < m.q; ++i) {
      std::string rp = path + ".dispersal[" + std::to_string(i) + "]";
      const json& row = type_list(rows[i], rp);
      for (int k = 0; k < m.q; ++k)
        m.dispersal[i].push_back(dispersal_from(row[k], rp + "[" + std::to_string(k) + "]"));
    }
  }
  if (auto it = j.find("kappa"); it != j.end()) {
    const json& kappa = type_list(*it, path + ".kappa");
    for (int i = 0; i < m.q; ++i)
      m.kappa.push_back(poly_from(kappa[i], m.q, path + ".kappa[" + std::to_string(i) + "]"));
    m.kappa_growth = number_at(need(j, "kappa_growth", path), path + ".kappa_growth");
    const json& laws = type_list(need(j, "immigration_law", path), path + ".immigration_law");
    for (int i = 0; i < m.q; ++i)
      m.immigration_law.push_back(
          law_from(laws[i], path + ".immigration_law[" + std::to_string(i) + "]"));
  }
  if (auto it = j.find("track_clans"); it != j.end())
    m.track_clans = bool_at(*it, path + ".track_clans");

  const json& init = need(j, "init", path);
  m.init.h0 = eigen_at(need(init, "h0", path + ".init"), path + ".init.h0");
  const json& placement = need(init, "placement", path + ".init");
  if (!placement.is_array() || static_cast<int>(placement.size()) != m.q)
    fail(path + ".init.placement", "expected one law per type");
  for (int i = 0; i < m.q; ++i)
    m.init.placement.push_back(
        law_from(placement[i], path + ".init.placement[" + std::to_string(i) + "]"));
  if (auto it = init.find("fresh_clans"); it != init.end())
    m.init.fresh_clans = bool_at(*it, path + ".init.fresh_clans");
  return m;
}

json model_to(const ModelSpec& m) {
  json j;
  if (!m.name.empty()) j["name"] = m.name;
  j["q"] = m.q;
  j["domain"] = domain_to(m.domain);
  json beta = json::array();
  for (int i = 0; i < m.q; ++i) {
    json row = json::array();
    for (int k = 0; k < m.q; ++k) row.push_back(poly_to(m.beta[i][k]));
    beta.push_back(row);
  }
  j["beta"] = beta;
  json rho = json::array();
  for (int i = 0; i < m.q; ++i) rho.push_back(poly_to(m.rho[i]));
  j["rho"] = rho;
  j["H_max"] = m.H_max;
  if (m.has_birth_mod()) {
    json rows = json::array();
    for (int i = 0; i < m.q; ++i) {
      json row = json::array();
      for (int k = 0; k < m.q; ++k) row.push_back(field_to(m.birth_mod[i][k]));
      rows.push_back(row);
    }
    j["birth_mod"] = rows;
  }
  if (m.has_death_mod()) {
    json row = json::array();
    for (int i = 0; i < m.q; ++i) row.push_back(field_to(m.death_mod[i]));
    j["death_mod"] = row;
  }
  if (m.has_dispersal()) {
    json rows = json::array();
    for (int i = 0; i < m.q; ++i) {
      json row = json::array();
      for (int k = 0; k < m.q; ++k) row.push_back(dispersal_to(m.dispersal[i][k]));
      rows.push_back(row);
    }
    j["dispersal"] = rows;
  }
  if (m.has_immigration()) {
    json kappa = json::array();
    for (const PolyD& p : m.kappa) kappa.push_back(poly_to(p));
    j["kappa"] = kappa;
    j["kappa_growth"] = m.kappa_growth;
    json laws = json::array();
    for (const SourceLaw& law : m.immigration_law) laws.push_back(law_to(law));
    j["immigration_law"] = laws;
  }
  if (m.track_clans) j["track_clans"] = true;
  json init;
  json h0 = json::array();
  for (int i = 0; i < m.init.h0.size(); ++i) h0.push_back(m.init.h0[i]);
  init["h0"] = h0;
  json placement = json::array();
  for (const SourceLaw& law : m.init.placement) placement.push_back(law_to(law));
  init["placement"] = placement;
  if (!m.init.fresh_clans) init["fresh_clans"] = false;
  j["init"] = init;
  return j;
}

SimConfig sim_from(const json& j, const std::string& path) {
  SimConfig s;
  if (j.is_null()) return s;
  if (!j.is_object()) fail(path, "expected an object");
  auto opt_num = [&](const char* key, double& slot) {
    if (auto it = j.find(key); it != j.end()) slot = number_at(*it, path + "." + key);
  };
  if (auto it = j.find("N"); it != j.end()) {
    if (!it->is_number_integer()) fail(path + ".N", "expected an integer");
    s.N = it->get<int64_t>();
  }
  opt_num("T_end", s.T_end);
  opt_num("t_N", s.t_N);
  if (auto it = j.find("seed"); it != j.end()) s.seed = it->get<uint64_t>();
  if (auto it = j.find("stream"); it != j.end()) s.stream = it->get<uint64_t>();
  if (auto it = j.find("record_grid"); it != j.end())
    s.record_grid = vector_at(*it, path + ".record_grid");
  if (auto it = j.find("grid_points"); it != j.end())
    s.grid_points = int_at(*it, path + ".grid_points");
  if (auto it = j.find("record_observables"); it != j.end())
    s.record_observables = bool_at(*it, path + ".record_observables");
  if (auto it = j.find("record_clans"); it != j.end())
    s.record_clans = bool_at(*it, path + ".record_clans");
  if (auto it = j.find("record_states"); it != j.end())
    s.record_states = bool_at(*it, path + ".record_states");
  if (auto it = j.find("keep_final_state"); it != j.end())
    s.keep_final_state = bool_at(*it, path + ".keep_final_state");
  if (auto it = j.find("stop_on_monomorphic"); it != j.end())
    s.stop_on_monomorphic = bool_at(*it, path + ".stop_on_monomorphic");
  if (auto it = j.find("replicates"); it != j.end()) {
    s.replicates = int_at(*it, path + ".replicates");
    if (s.replicates < 1) fail(path + ".replicates", "expected a positive integer");
  }
  return s;
}

json sim_to(const SimConfig& s) {
  json j;
  j["N"] = s.N;
  j["T_end"] = s.T_end;
  j["t_N"] = s.t_N;
  j["seed"] = s.seed;
  j["stream"] = s.stream;
  if (!s.record_grid.empty()) j["record_grid"] = s.record_grid;
  j["grid_points"] = s.grid_points;
  j["record_observables"] = s.record_observables;
  j["record_clans"] = s.record_clans;
  j["record_states"] = s.record_states;
  j["keep_final_state"] = s.keep_final_state;
  j["stop_on_monomorphic"] = s.stop_on_monomorphic;
  j["replicates"] = s.replicates;
  return j;
}

json parse_document(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace

RunConfig config_from_json(const std::string& text) {
  json doc = parse_document(text);
  RunConfig cfg;
  cfg.model = model_from(need(doc, "model", "config"), "model");
  if (auto it = doc.find("sim"); it != doc.end())
    cfg.sim = sim_from(*it, "sim");
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

std::string config_to_json(const RunConfig& cfg) {
  json doc;
  doc["model"] = model_to(cfg.model);
  doc["sim"] = sim_to(cfg.sim);
  return doc.dump(2) + "\n";
}

std::string apply_overrides(
    const std::string& text,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  json doc = parse_document(text);
  for (const auto& [key, value] : overrides) {
    json* node = &doc;
    std::string part;
    std::stringstream keys(key);
    std::vector<std::string> parts;
    while (std::getline(keys, part, '.')) {
      if (part.empty()) throw ConfigError("override path '" + key + "' has an empty segment");
      parts.push_back(part);
    }
    if (parts.empty()) throw ConfigError("empty override path");
    try {
      for (size_t i = 0; i + 1 < parts.size(); ++i) node = &((*node)[parts[i]]);
      json parsed = json::parse(value, nullptr, false);
      (*node)[parts.back()] = parsed.is_discarded() ? json(value) : parsed;
    } catch (const json::exception&) {
      throw ConfigError("override path '" + key + "' does not address an object field");
    }
  }
  return doc.dump(2) + "\n";
}

uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string config_hash(const RunConfig& cfg) {
  uint64_t h = fnv1a64(config_to_json(cfg));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace fvpop
