#include "fvpop/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "fvpop/demos.hpp"
#include "fvpop/engine.hpp"
#include "fvpop/error.hpp"
#include "fvpop/flow.hpp"
#include "fvpop/fv_reference.hpp"
#include "fvpop/run_output.hpp"
#include "fvpop/stats.hpp"
#include "json.hpp"

namespace fvpop {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Stream offset for reference samplers, far above any replicate index.
constexpr uint64_t kReferenceStream = uint64_t(1) << 32;

std::string band_str(double lo, double hi) {
  return "[" + format_exact(lo) + ", " + format_exact(hi) + "]";
}

json check_json(const CheckLine& c) {
  return json{{"name", c.name},
              {"value", c.value},
              {"lo", c.lo},
              {"hi", c.hi},
              {"passed", c.passed}};
}

CheckLine make_check(std::string name, double value, double lo, double hi) {
  CheckLine c;
  c.name = std::move(name);
  c.value = value;
  c.lo = lo;
  c.hi = hi;
  c.passed = std::isfinite(value) && value >= lo && value <= hi;
  return c;
}

std::string checks_text(const std::vector<CheckLine>& checks) {
  std::string out;
  for (const CheckLine& c : checks) {
    out += (c.passed ? "ok   " : "FAIL ");
    out += c.name + " = " + format_exact(c.value) + "  band " + band_str(c.lo, c.hi) + "\n";
  }
  return out;
}

}  // namespace

bool PipelineOutcome::all_passed() const {
  for (const CheckLine& c : checks)
    if (!c.passed) return false;
  return true;
}

std::string PipelineOutcome::table() const { return checks_text(checks); }

PipelineOutcome genetics_demo(const GeneticsDemoOptions& opt) {
  if (opt.N < 50 || opt.fixation_replicates < 1 || opt.chains < 1 || opt.samples_per_chain < 1)
    throw ConfigError("genetics demo: N >= 50 and positive replicate/chain/sample counts required");
  if (opt.init_share <= 0.0 || opt.init_share >= 1.0)
    throw ConfigError("genetics demo: init_share must lie strictly inside (0, 1)");
  PipelineOutcome out;

  // Fixation probability of the minority allele (site 0) across a population
  // sweep. The allele label is neutral, so the exact count of the focal type
  // is a martingale and the fixation probability equals the initial share at
  // every N; the Moran chain gives the same value by the standard ratio
  // formula, cross-checked against its first-step linear system.
  int oracle_M = 1000;
  int oracle_k = static_cast<int>(std::llround(opt.init_share * oracle_M));
  double oracle_gap =
      std::abs(moran_absorption(oracle_M, 1.0, oracle_k) -
               static_cast<double>(oracle_k) / static_cast<double>(oracle_M)) +
      std::abs(moran_absorption(oracle_M, 1.0, oracle_k) -
               moran_absorption_solve(oracle_M, 1.0, oracle_k));
  out.checks.push_back(
      make_check("neutral absorption oracle self-consistency", oracle_gap, 0.0, 1e-9));

  std::set<int64_t> sweep{std::max<int64_t>(opt.N / 16, 50), std::max<int64_t>(opt.N / 4, 50),
                          opt.N};
  ModelSpec fix_model = genetics_fixation_spec(opt.init_share);
  std::string fixation_csv = "N,replicates,fixed,unresolved,fraction,wilson_lo,wilson_hi,target\n";
  double top_fraction = std::numeric_limits<double>::quiet_NaN();
  for (int64_t n : sweep) {
    SimConfig cfg;
    cfg.N = n;
    cfg.T_end = 16.0;
    cfg.t_N = 0.0;
    cfg.seed = opt.seed;
    cfg.grid_points = 2;
    cfg.record_observables = false;
    cfg.keep_final_state = false;
    cfg.stop_on_monomorphic = true;
    cfg.replicates = opt.fixation_replicates;
    std::vector<TrajectoryRecord> recs = simulate_replicates(fix_model, cfg, cfg.replicates);
    int fixed = 0, unresolved = 0;
    for (const TrajectoryRecord& r : recs) {
      if (r.status == RunStatus::Fixated && r.fixed_site == 0)
        ++fixed;
      else if (r.status != RunStatus::Fixated)
        ++unresolved;
    }
    ProportionEstimate est = fixation_estimate(fixed, opt.fixation_replicates);
    fixation_csv += std::to_string(n) + "," + std::to_string(opt.fixation_replicates) + "," +
                    std::to_string(fixed) + "," + std::to_string(unresolved) + "," +
                    format_exact(est.p_hat) + "," + format_exact(est.lower) + "," +
                    format_exact(est.upper) + "," + format_exact(opt.init_share) + "\n";
    if (n == opt.N) top_fraction = est.p_hat;
  }
  out.checks.push_back(make_check(
      "fixation probability of the minority allele (N=" + std::to_string(opt.N) + ")",
      top_fraction, opt.init_share - 0.04, opt.init_share + 0.04));

  // Stationary largest-allele shares of the infinite-alleles model. Exact
  // coordinates on the zero-diffusion interval are allele labels (they arise
  // only by copy at birth or a fresh mutant draw), and at stationarity the
  // ranked shares follow the Poisson-Dirichlet law whose parameter is the
  // averaged redraw rate over the ordered-pair sampling rate.
  ModelSpec alleles = genetics_alleles_spec();
  EquilibriumData eq = find_equilibrium(alleles);
  AveragedCoefficients avg = averaged_coefficients(alleles, eq);
  double pd_alpha = avg.c_total / avg.gamma_smpl;
  StationaritySchedule plan = stationarity_schedule(eq);

  SimConfig acfg;
  acfg.N = std::max<int64_t>(opt.N / 2, 100);
  acfg.t_N = 0.0;
  acfg.seed = opt.seed;
  acfg.record_observables = false;
  acfg.record_states = true;
  acfg.keep_final_state = false;
  for (int s = 0; s < opt.samples_per_chain; ++s)
    acfg.record_grid.push_back(plan.burn_in + s * plan.spacing);
  acfg.T_end = plan.burn_in + opt.samples_per_chain * plan.spacing;
  std::vector<TrajectoryRecord> chains = simulate_replicates(alleles, acfg, opt.chains);

  std::vector<double> largest;
  std::string allele_csv = "chain,t,largest_share,allele_count\n";
  for (int c = 0; c < opt.chains; ++c) {
    const TrajectoryRecord& rec = chains[c];
    for (size_t g = 0; g < rec.states.size(); ++g) {
      Eigen::VectorXd shares = location_shares(rec.states[g]);
      largest.push_back(shares[0]);
      allele_csv += std::to_string(c) + "," + format_exact(rec.t[g]) + "," +
                    format_exact(shares[0]) + "," + std::to_string(shares.size()) + "\n";
    }
  }

  Rng pd_rng(opt.seed, kReferenceStream);
  PDParams pd;
  pd.alpha = pd_alpha;
  std::vector<double> pd_largest(largest.size());
  std::string pd_csv = "sample,largest_share\n";
  for (size_t k = 0; k < pd_largest.size(); ++k) {
    pd_largest[k] = sample_poisson_dirichlet(pd, pd_rng)[0];
    pd_csv += std::to_string(k) + "," + format_exact(pd_largest[k]) + "\n";
  }
  KSResult ks = compare_samples(largest, pd_largest);
  out.checks.push_back(
      make_check("largest allele share vs Poisson-Dirichlet, KS p-value", ks.p_value, 0.01, 1.0));

  if (!opt.out_root.empty()) {
    RunConfig rc;
    rc.model = fix_model;
    rc.sim.N = opt.N;
    rc.sim.T_end = 16.0;
    rc.sim.t_N = 0.0;
    rc.sim.seed = opt.seed;
    rc.sim.grid_points = 2;
    rc.sim.record_observables = false;
    rc.sim.keep_final_state = false;
    rc.sim.stop_on_monomorphic = true;
    rc.sim.replicates = opt.fixation_replicates;
    RunDirectory dir(opt.out_root, rc, "-genetics");
    json params;
    params["pipeline"] = "genetics";
    params["N"] = opt.N;
    params["fixation_replicates"] = opt.fixation_replicates;
    params["init_share"] = opt.init_share;
    params["chains"] = opt.chains;
    params["samples_per_chain"] = opt.samples_per_chain;
    params["allele_N"] = acfg.N;
    params["pd_alpha"] = pd_alpha;
    params["gamma_smpl"] = avg.gamma_smpl;
    params["redraw_total"] = avg.c_total;
    params["burn_in"] = plan.burn_in;
    params["spacing"] = plan.spacing;
    params["ks_statistic"] = ks.statistic;
    params["ks_p"] = ks.p_value;
    params["seed"] = opt.seed;
    json summary;
    summary["params"] = params;
    summary["checks"] = json::array();
    for (const CheckLine& c : out.checks) summary["checks"].push_back(check_json(c));
    summary["passed"] = out.all_passed();
    dir.write("fixation_table.csv", fixation_csv);
    dir.write("allele_samples.csv", allele_csv);
    dir.write("pd_samples.csv", pd_csv);
    dir.write("checks.txt", checks_text(out.checks));
    dir.write("summary.json", summary.dump(2) + "\n");
    dir.finish();
    out.run_dir = dir.path();
  }
  return out;
}

PipelineOutcome polarity_demo(const PolarityDemoOptions& opt) {
  if (opt.N < 50 || opt.chains < 1 || opt.samples_per_chain < 1)
    throw ConfigError("polarity demo: N >= 50 and positive chain/sample counts required");
  if (opt.k_fb <= opt.k_off)
    throw ConfigError("polarity demo: feedback must exceed dissociation (k_fb > k_off)");
  PipelineOutcome out;

  ModelSpec model = polarity_spec(opt.k_on, opt.k_fb, opt.k_off, opt.D);
  EquilibriumData eq = find_equilibrium(model);
  AveragedCoefficients avg = averaged_coefficients(model, eq);
  double pd_alpha = avg.c_total / avg.gamma_smpl;
  StationaritySchedule plan = stationarity_schedule(eq);

  // Dense grid for the time average, every fourth point (one relaxation time
  // apart) for the decorrelated clan samples.
  const int per_spacing = 4;
  SimConfig cfg;
  cfg.N = opt.N;
  cfg.t_N = 0.0;
  cfg.seed = opt.seed;
  cfg.record_observables = false;
  cfg.record_clans = true;
  cfg.keep_final_state = false;
  int grid_n = per_spacing * opt.samples_per_chain;
  for (int s = 0; s < grid_n; ++s)
    cfg.record_grid.push_back(plan.burn_in + s * plan.spacing / per_spacing);
  cfg.T_end = plan.burn_in + opt.samples_per_chain * plan.spacing;
  std::vector<TrajectoryRecord> chains = simulate_replicates(model, cfg, opt.chains);

  double h_sum = 0.0;
  int64_t h_n = 0;
  std::vector<double> clan_largest;
  std::vector<double> dispersions;
  std::string density_csv = "chain,t,h\n";
  std::string clan_csv = "chain,t,largest_share,clan_count,dominant_dispersion\n";
  for (int c = 0; c < opt.chains; ++c) {
    const TrajectoryRecord& rec = chains[c];
    for (size_t g = 0; g < rec.t.size(); ++g) {
      h_sum += rec.h[g][0];
      ++h_n;
      density_csv += std::to_string(c) + "," + format_exact(rec.t[g]) + "," +
                     format_exact(rec.h[g][0]) + "\n";
      if (g % per_spacing != 0) continue;
      const ClanSummary& cs = rec.clans[g];
      clan_largest.push_back(cs.largest);
      if (std::isfinite(cs.dominant_dispersion)) dispersions.push_back(cs.dominant_dispersion);
      clan_csv += std::to_string(c) + "," + format_exact(rec.t[g]) + "," +
                  format_exact(cs.largest) + "," + std::to_string(cs.shares.size()) + "," +
                  format_exact(cs.dominant_dispersion) + "\n";
    }
  }
  double h_avg = h_sum / static_cast<double>(h_n);
  out.checks.push_back(make_check("time-averaged membrane density", h_avg, eq.h_eq[0] - 0.05,
                                  eq.h_eq[0] + 0.05));

  Rng pd_rng(opt.seed, kReferenceStream);
  PDParams pd;
  pd.alpha = pd_alpha;
  std::vector<double> pd_largest(clan_largest.size());
  std::string pd_csv = "sample,largest_share\n";
  for (size_t k = 0; k < pd_largest.size(); ++k) {
    pd_largest[k] = sample_poisson_dirichlet(pd, pd_rng)[0];
    pd_csv += std::to_string(k) + "," + format_exact(pd_largest[k]) + "\n";
  }
  KSResult ks = compare_samples(clan_largest, pd_largest);
  out.checks.push_back(
      make_check("largest clan share vs Poisson-Dirichlet, KS p-value", ks.p_value, 0.01, 1.0));

  // Patch size from the diffusion/turnover balance: squared dispersion
  // 2 D / ((k_on + k_fb) k_off / (k_fb - k_off) + D / R^2) on the unit sphere.
  const double radius = 1.0;
  double turnover = (opt.k_on + opt.k_fb) * opt.k_off / (opt.k_fb - opt.k_off);
  double predicted = 2.0 * opt.D / (turnover + opt.D / (radius * radius));
  double disp_mean = 0.0;
  for (double d : dispersions) disp_mean += d;
  disp_mean = dispersions.empty() ? std::numeric_limits<double>::quiet_NaN()
                                  : disp_mean / static_cast<double>(dispersions.size());
  out.checks.push_back(make_check("dominant clan squared dispersion", disp_mean,
                                  0.75 * predicted, 1.25 * predicted));

  if (!opt.out_root.empty()) {
    RunConfig rc;
    rc.model = model;
    rc.sim = cfg;
    rc.sim.replicates = opt.chains;
    RunDirectory dir(opt.out_root, rc, "-polarity");
    json params;
    params["pipeline"] = "polarity";
    params["N"] = opt.N;
    params["chains"] = opt.chains;
    params["samples_per_chain"] = opt.samples_per_chain;
    params["pd_alpha"] = pd_alpha;
    params["gamma_smpl"] = avg.gamma_smpl;
    params["redraw_total"] = avg.c_total;
    params["burn_in"] = plan.burn_in;
    params["spacing"] = plan.spacing;
    params["h_eq"] = eq.h_eq[0];
    params["predicted_dispersion"] = predicted;
    params["ks_statistic"] = ks.statistic;
    params["ks_p"] = ks.p_value;
    params["seed"] = opt.seed;
    json summary;
    summary["params"] = params;
    summary["checks"] = json::array();
    for (const CheckLine& c : out.checks) summary["checks"].push_back(check_json(c));
    summary["passed"] = out.all_passed();
    dir.write("density_trace.csv", density_csv);
    dir.write("clan_samples.csv", clan_csv);
    dir.write("pd_samples.csv", pd_csv);
    dir.write("checks.txt", checks_text(out.checks));
    dir.write("summary.json", summary.dump(2) + "\n");
    dir.finish();
    out.run_dir = dir.path();
  }
  return out;
}

PipelineOutcome compare_run(const std::string& run_dir, const CompareOptions& opt) {
  fs::path dir(run_dir);
  if (!fs::exists(dir / "manifest.json"))
    throw ConfigError("'" + run_dir + "' has no manifest.json (not a completed run)");
  RunConfig cfg = load_config((dir / "config.json").string());
  EquilibriumData eq = find_equilibrium(cfg.model);

  // Trajectory files in replicate order.
  std::vector<std::pair<int, fs::path>> traj;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::string name = entry.path().filename().string();
    if (name.rfind("trajectory_", 0) != 0 || name.size() <= 15 ||
        name.substr(name.size() - 4) != ".csv")
      continue;
    std::string idx = name.substr(11, name.size() - 15);
    if (idx.empty() || idx.find_first_not_of("0123456789") != std::string::npos) continue;
    traj.emplace_back(std::stoi(idx), entry.path());
  }
  if (traj.empty()) throw ConfigError("'" + run_dir + "' holds no trajectory CSVs");
  std::sort(traj.begin(), traj.end());

  // Terminal statuses from the event summary, when present.
  std::map<int, std::string> statuses;
  if (fs::exists(dir / "events.jsonl")) {
    std::ifstream in(dir / "events.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json rec = json::parse(line, nullptr, false);
      if (rec.is_object() && rec.contains("replicate") && rec["replicate"].is_number_integer() &&
          rec.contains("status") && rec["status"].is_string())
        statuses[rec["replicate"].get<int>()] = rec["status"].get<std::string>();
    }
  }

  std::vector<double> densities, inseps;
  double zero_sum_max = 0.0;
  bool have_obs = false;
  std::string diag_csv =
      "replicate,status,density_deviation,inseparability,zero_sum_residual,final_clan_largest\n";
  for (const auto& [r, path] : traj) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    TrajectoryRecord rec = read_trajectory_csv(buf.str());
    if (rec.t.empty()) throw ConfigError("empty trajectory record in '" + path.string() + "'");
    double dev = density_deviation(rec, eq.h_eq, rec.t.front(), rec.t.back() - rec.t.front());
    densities.push_back(dev);
    double insep = std::numeric_limits<double>::quiet_NaN();
    double zmax = 0.0;
    if (!rec.obs.empty()) {
      have_obs = true;
      insep = inseparability_all(rec);
      inseps.push_back(insep);
      for (size_t fn = 0; fn < rec.obs_names.size(); ++fn) {
        Eigen::MatrixXd paths = yn_paths(rec, static_cast<int>(fn));
        zmax = std::max(zmax, paths.rowwise().sum().cwiseAbs().maxCoeff());
      }
      zero_sum_max = std::max(zero_sum_max, zmax);
    }
    double clan_last = std::numeric_limits<double>::quiet_NaN();
    if (!rec.clans.empty()) clan_last = rec.clans.back().largest;
    std::string status = statuses.count(r) ? statuses[r] : "unknown";
    diag_csv += std::to_string(r) + "," + status + "," + format_exact(dev) + "," +
                format_exact(insep) + "," + format_exact(zmax) + "," + format_exact(clan_last) +
                "\n";
  }

  PipelineOutcome out;
  out.checks.push_back(make_check("median density deviation from the flow equilibrium",
                                  quantile(densities, 0.5), 0.0, opt.density_tol));
  if (have_obs) {
    out.checks.push_back(make_check("median cross-type inseparability", quantile(inseps, 0.5),
                                    0.0, opt.insep_tol));
    out.checks.push_back(make_check("difference-path zero-sum residual", zero_sum_max, 0.0,
                                    opt.zero_sum_tol));
  }

  std::string root = opt.out_root.empty() ? dir.parent_path().string() : opt.out_root;
  if (root.empty()) root = ".";
  RunDirectory cdir(root, cfg, "-compare");
  json summary;
  summary["run"] = dir.filename().string();
  summary["replicates"] = traj.size();
  summary["tolerances"] = {{"density", opt.density_tol},
                           {"inseparability", opt.insep_tol},
                           {"zero_sum", opt.zero_sum_tol}};
  summary["checks"] = json::array();
  for (const CheckLine& c : out.checks) summary["checks"].push_back(check_json(c));
  summary["passed"] = out.all_passed();
  cdir.write("diagnostics.csv", diag_csv);
  cdir.write("checks.txt", checks_text(out.checks));
  cdir.write("summary.json", summary.dump(2) + "\n");
  cdir.finish();
  out.run_dir = cdir.path();
  return out;
}

}  // namespace fvpop
