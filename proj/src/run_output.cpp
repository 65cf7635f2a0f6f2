#include "fvpop/run_output.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fvpop/error.hpp"
#include "json.hpp"

namespace fvpop {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_exact(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace {

const char* kEventNames[kEventKinds] = {
    "local_birth", "dispersed_birth", "death", "immigration", "migration", "thinning_reject",
};

const char* status_name(RunStatus s) {
  switch (s) {
    case RunStatus::Completed: return "completed";
    case RunStatus::Extinct: return "extinct";
    case RunStatus::Frozen: return "frozen";
    default: return "fixated";
  }
}

double parse_double(const std::string& field, const std::string& where) {
  try {
    size_t used = 0;
    double v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("trajectory CSV: bad number '" + field + "' in " + where);
  }
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string utc_now() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string checksum_hex(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + p.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

std::string trajectory_csv(const TrajectoryRecord& rec) {
  size_t n = rec.t.size();
  int q = n && rec.h.size() == n ? static_cast<int>(rec.h[0].size()) : 0;
  bool counts = rec.counts.size() == n && q > 0;
  bool obs = rec.obs.size() == n && !rec.obs_names.empty();
  bool clans = rec.clans.size() == n;
  bool events = rec.events.size() == n;

  std::string out = "t";
  for (int i = 0; i < q; ++i) out += ",h_" + std::to_string(i);
  if (counts)
    for (int i = 0; i < q; ++i) out += ",count_" + std::to_string(i);
  if (obs)
    for (const std::string& fn : rec.obs_names)
      for (int i = 0; i < q; ++i) out += ",obs_" + fn + "_" + std::to_string(i);
  if (clans) out += ",clan_count,clan_largest,clan_dispersion";
  if (events)
    for (const char* name : kEventNames) out += std::string(",ev_") + name;
  out += "\n";

  for (size_t k = 0; k < n; ++k) {
    out += format_exact(rec.t[k]);
    for (int i = 0; i < q; ++i) out += "," + format_exact(rec.h[k][i]);
    if (counts)
      for (int i = 0; i < q; ++i) out += "," + std::to_string(rec.counts[k][i]);
    if (obs)
      for (long fn = 0; fn < rec.obs[k].rows(); ++fn)
        for (int i = 0; i < q; ++i) out += "," + format_exact(rec.obs[k](fn, i));
    if (clans) {
      const ClanSummary& c = rec.clans[k];
      out += "," + std::to_string(c.shares.size());
      out += "," + format_exact(c.largest);
      out += "," + format_exact(c.dominant_dispersion);
    }
    if (events)
      for (int e = 0; e < kEventKinds; ++e) out += "," + std::to_string(rec.events[k][e]);
    out += "\n";
  }
  return out;
}

TrajectoryRecord read_trajectory_csv(const std::string& csv) {
  std::stringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("trajectory CSV: empty input");
  std::vector<std::string> cols = split(line, ',');
  if (cols.empty() || cols[0] != "t")
    throw ValidationError("trajectory CSV: first column must be t");

  // Column layout from the header: contiguous groups as written above.
  int q = 0;
  while (q + 1 < static_cast<int>(cols.size()) && cols[q + 1] == "h_" + std::to_string(q)) ++q;
  size_t at = 1 + q;
  auto group = [&](const std::string& prefix) {
    size_t n = 0;
    while (at + n < cols.size() && cols[at + n].rfind(prefix, 0) == 0) ++n;
    at += n;
    return n;
  };
  bool counts = group("count_") > 0;
  size_t obs_cols = group("obs_");
  if (q > 0 && obs_cols % q != 0)
    throw ValidationError("trajectory CSV: observable columns not a multiple of the type count");
  int nf = q > 0 ? static_cast<int>(obs_cols) / q : 0;
  TrajectoryRecord rec;
  for (int fn = 0; fn < nf; ++fn) {
    // obs_<name>_<type>: strip the prefix and the type suffix.
    std::string c = cols[1 + q + (counts ? q : 0) + static_cast<size_t>(fn) * q];
    rec.obs_names.push_back(c.substr(4, c.rfind('_') - 4));
  }
  bool clans = group("clan_") == 3;
  bool events = group("ev_") == kEventKinds;
  if (at != cols.size()) throw ValidationError("trajectory CSV: unrecognized column layout");

  size_t row = 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::string where = "row " + std::to_string(row++);
    std::vector<std::string> f = split(line, ',');
    if (f.size() != cols.size())
      throw ValidationError("trajectory CSV: wrong field count in " + where);
    size_t i = 0;
    rec.t.push_back(parse_double(f[i++], where));
    Eigen::VectorXd h(q);
    for (int s = 0; s < q; ++s) h[s] = parse_double(f[i++], where);
    rec.h.push_back(h);
    if (counts) {
      std::vector<int64_t> c(q);
      for (int s = 0; s < q; ++s) c[s] = std::stoll(f[i++]);
      rec.counts.push_back(c);
    }
    if (nf > 0) {
      Eigen::MatrixXd m(nf, q);
      for (int fn = 0; fn < nf; ++fn)
        for (int s = 0; s < q; ++s) m(fn, s) = parse_double(f[i++], where);
      rec.obs.push_back(m);
    }
    if (clans) {
      ClanSummary c;
      i++;  // clan_count is derived from the shares, which the CSV keeps summarized
      c.largest = parse_double(f[i++], where);
      c.dominant_dispersion = parse_double(f[i++], where);
      rec.clans.push_back(c);
    }
    if (events) {
      std::array<int64_t, kEventKinds> ev{};
      for (int e = 0; e < kEventKinds; ++e) ev[e] = std::stoll(f[i++]);
      rec.events.push_back(ev);
    }
  }
  if (!rec.events.empty()) rec.events_total = rec.events.back();
  return rec;
}

std::string event_summary_jsonl(const std::vector<TrajectoryRecord>& recs) {
  std::string out;
  for (size_t r = 0; r < recs.size(); ++r) {
    const TrajectoryRecord& rec = recs[r];
    json line;
    line["replicate"] = r;
    line["status"] = status_name(rec.status);
    line["status_time"] = rec.status_time;
    line["fixed_site"] = rec.fixed_site;
    json events;
    for (int e = 0; e < kEventKinds; ++e) events[kEventNames[e]] = rec.events_total[e];
    line["events"] = events;
    line["final_t"] = rec.t.empty() ? 0.0 : rec.t.back();
    line["final_count"] = rec.final_state.total_count();
    out += line.dump() + "\n";
  }
  return out;
}

std::string snapshot_text(const PopulationSnapshot& snap) {
  std::string out = "# type location clan\n";
  out += "N " + std::to_string(snap.N) + "\n";
  out += "t " + format_exact(snap.t) + "\n";
  out += "q " + std::to_string(snap.q()) + "\n";
  for (int i = 0; i < snap.q(); ++i)
    for (const Particle& p : snap.types[i]) {
      out += std::to_string(i);
      if (const int* site = std::get_if<int>(&p.loc)) {
        out += " " + std::to_string(*site);
      } else if (const double* x = std::get_if<double>(&p.loc)) {
        out += " " + format_exact(*x);
      } else {
        const Eigen::Vector3d& v = std::get<Eigen::Vector3d>(p.loc);
        out += " " + format_exact(v[0]) + " " + format_exact(v[1]) + " " + format_exact(v[2]);
      }
      out += " " + format_exact(p.clan) + "\n";
    }
  return out;
}

RunDirectory::RunDirectory(const std::string& root, const RunConfig& cfg, const std::string& tag)
    : hash_(config_hash(cfg)), started_(utc_now()), seed_(cfg.sim.seed) {
  path_ = (fs::path(root) / (hash_ + tag)).string();
  std::error_code ec;
  fs::create_directories(path_, ec);
  if (ec) throw ConfigError("cannot create run directory '" + path_ + "': " + ec.message());
  write("config.json", config_to_json(cfg));
}

void RunDirectory::write(const std::string& name, const std::string& bytes) {
  if (finished_) throw ConfigError("run directory '" + path_ + "' is already finalized");
  if (name.find('/') != std::string::npos || name == "manifest.json")
    throw ConfigError("invalid artifact name '" + name + "'");
  fs::path p = fs::path(path_) / name;
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("cannot write '" + p.string() + "'");
  files_[name] = {bytes.size(), checksum_hex(bytes)};
}

std::string RunDirectory::finish() {
  if (finished_) throw ConfigError("run directory '" + path_ + "' is already finalized");
  finished_ = true;
  json manifest;
  manifest["config_hash"] = hash_;
  manifest["seed"] = seed_;
  manifest["version"] = kCodeVersion;
  manifest["started"] = started_;
  manifest["finished"] = utc_now();
  json files;
  for (const auto& [name, entry] : files_) {
    json f;
    f["bytes"] = entry.bytes;
    f["fnv1a64"] = entry.checksum;
    files[name] = f;
  }
  manifest["files"] = files;

  fs::path final_path = fs::path(path_) / "manifest.json";
  fs::path tmp_path = fs::path(path_) / "manifest.json.tmp";
  {
    std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
    out << manifest.dump(2) << "\n";
    if (!out) throw ConfigError("cannot write '" + tmp_path.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp_path, final_path, ec);
  if (ec) throw ConfigError("cannot finalize manifest in '" + path_ + "': " + ec.message());
  return final_path.string();
}

bool runs_identical(const std::string& dir_a, const std::string& dir_b, std::string* detail) {
  auto report = [&](const std::string& msg) {
    if (detail) *detail = msg;
    return false;
  };
  json ma, mb;
  try {
    ma = json::parse(read_file(fs::path(dir_a) / "manifest.json"));
    mb = json::parse(read_file(fs::path(dir_b) / "manifest.json"));
  } catch (const std::exception& e) {
    return report(std::string("manifest unreadable: ") + e.what());
  }
  for (json* m : {&ma, &mb}) {
    m->erase("started");
    m->erase("finished");
  }
  if (ma != mb) return report("manifests differ beyond timestamps");

  for (const auto& [name, entry] : ma["files"].items()) {
    std::string a = read_file(fs::path(dir_a) / name);
    std::string b = read_file(fs::path(dir_b) / name);
    if (a != b) return report("artifact '" + name + "' differs");
    if (checksum_hex(a) != entry["fnv1a64"].get<std::string>())
      return report("artifact '" + name + "' does not match its manifest checksum");
  }
  // The inventory must account for everything on disk (manifest aside).
  for (const std::string& dir : {dir_a, dir_b})
    for (const auto& e : fs::directory_iterator(dir)) {
      std::string name = e.path().filename().string();
      if (name != "manifest.json" && !ma["files"].contains(name))
        return report("file '" + name + "' in " + dir + " is not in the manifest");
    }
  return true;
}

}  // namespace fvpop
