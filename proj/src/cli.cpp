#include "fvpop/cli.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <variant>

#include "CLI11.hpp"
#include "fvpop/config_io.hpp"
#include "fvpop/demos.hpp"
#include "fvpop/engine.hpp"
#include "fvpop/error.hpp"
#include "fvpop/flow.hpp"
#include "fvpop/fv_reference.hpp"
#include "fvpop/lambda.hpp"
#include "fvpop/run_output.hpp"
#include "json.hpp"

namespace fvpop {

namespace {

using json = nlohmann::json;

std::string fmt_vec(const Eigen::VectorXd& v) {
  std::string out = "[";
  for (int i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_exact(v[i]);
  return out + "]";
}

std::string fmt_complex_sorted(Eigen::VectorXcd v) {
  std::vector<std::complex<double>> e(v.data(), v.data() + v.size());
  std::sort(e.begin(), e.end(), [](const auto& a, const auto& b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  std::string out = "[";
  for (size_t i = 0; i < e.size(); ++i) {
    out += (i ? ", " : "") + format_exact(e[i].real());
    if (std::abs(e[i].imag()) > 1e-14)
      out += (e[i].imag() >= 0 ? " + " : " - ") + format_exact(std::abs(e[i].imag())) + "i";
  }
  return out + "]";
}

std::string domain_str(const SpatialDomain& dom) {
  if (const auto* f = std::get_if<FiniteSetDomain>(&dom))
    return "finite set of " + std::to_string(f->K) + " sites";
  if (const auto* c = std::get_if<CircleDomain>(&dom))
    return "circle of circumference " + format_exact(c->circumference);
  if (const auto* s = std::get_if<SphereDomain>(&dom))
    return "sphere of radius " + format_exact(s->radius);
  return "unit interval";
}

// Unmatched `--model.path value` / `--model.path=value` tokens become
// dotted-path config overrides.
std::vector<std::pair<std::string, std::string>> pair_overrides(
    const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (tok.rfind("--", 0) != 0 || tok.find('.') == std::string::npos)
      throw ConfigError("unrecognized argument '" + tok +
                        "' (config overrides look like --sim.N 400)");
    std::string key = tok.substr(2);
    if (size_t eq = key.find('='); eq != std::string::npos) {
      out.emplace_back(key.substr(0, eq), key.substr(eq + 1));
      continue;
    }
    if (i + 1 >= extras.size()) throw ConfigError("override '" + tok + "' is missing a value");
    out.emplace_back(key, extras[i + 1]);
    ++i;
  }
  return out;
}

RunConfig load_with_overrides(const std::string& path, const std::vector<std::string>& extras) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  auto overrides = pair_overrides(extras);
  if (!overrides.empty()) text = apply_overrides(text, overrides);
  return config_from_json(text);
}

int do_validate(const RunConfig& cfg, bool quick) {
  ValidationOptions opts;
  opts.quick = quick;
  ValidationReport rep = validate_model(cfg.model, opts);
  std::cout << rep.summary();
  std::cout << (rep.accepted ? "accepted" : "rejected") << ": model '" << cfg.model.name << "'\n";
  return rep.accepted ? 0 : 2;
}

int do_flow(const RunConfig& cfg) {
  const ModelSpec& spec = cfg.model;
  EquilibriumData eq = find_equilibrium(spec);
  AveragedCoefficients avg = averaged_coefficients(spec, eq);
  std::cout << "model '" << spec.name << "': q=" << spec.q << ", " << domain_str(spec.domain)
            << "\n";
  std::cout << "h_eq = " << fmt_vec(eq.h_eq) << "\n";
  std::cout << "v_eq = " << fmt_vec(eq.v_eq) << "\n";
  Eigen::EigenSolver<Eigen::MatrixXd> es(eq.A_eq);
  std::cout << "interaction eigenvalues = " << fmt_complex_sorted(es.eigenvalues()) << "\n";
  std::cout << "flow jacobian eigenvalues = " << fmt_complex_sorted(eq.jac_eigs) << "\n";
  std::cout << "spectral abscissa = " << format_exact(eq.spectral_abscissa) << "\n";
  std::cout << "null-direction singular values: sv_min = " << format_exact(eq.sv_min)
            << ", sv_second = " << format_exact(eq.sv_second) << "\n";
  std::cout << "gamma_smpl = " << format_exact(avg.gamma_smpl) << "\n";
  if (avg.Q_avg.size() > 0) {
    std::cout << "Q_avg =\n";
    for (int r = 0; r < avg.Q_avg.rows(); ++r)
      std::cout << "  " << fmt_vec(avg.Q_avg.row(r).transpose()) << "\n";
  }
  if (avg.D_avg > 0) std::cout << "D_avg = " << format_exact(avg.D_avg) << "\n";
  std::cout << "redraw channels = " << avg.redraw.size()
            << ", total rate = " << format_exact(avg.c_total) << "\n";
  std::cout << "selection sup bounds: birth = " << format_exact(avg.sel_birth_sup)
            << ", death = " << format_exact(avg.sel_death_sup) << "\n";
  return 0;
}

int do_lambda(const RunConfig& cfg, int k_max) {
  const ModelSpec& spec = cfg.model;
  EquilibriumData eq = find_equilibrium(spec);
  SeriesOptions opts;
  opts.k_max = k_max;
  LambdaSeries series = solve_series(spec, eq, opts);
  std::cout << "model '" << spec.name << "': series to total degree " << series.k_max
            << " around h_eq = " << fmt_vec(series.h_eq) << "\n";
  std::cout << "eps0 = " << format_exact(series.eps0)
            << ", growth estimate c_hat = " << format_exact(series.c_hat) << "\n";
  std::cout << "certified radius r_trust = " << format_exact(series.r_trust)
            << " (residual <= " << format_exact(series.residual_tol) << ")\n";
  std::cout << "handoff radius r_hand = " << format_exact(series.r_hand) << "\n";
  std::cout << "eigenbasis: condition = " << format_exact(series.basis_condition)
            << ", max imaginary residue = " << format_exact(series.max_imag_residue) << "\n";
  std::cout << "coefficients (multi-index -> component vector):\n";
  for (const auto& [mi, coef] : series.coefficient_table()) {
    std::cout << "  (";
    for (size_t d = 0; d < mi.size(); ++d) std::cout << (d ? "," : "") << mi[d];
    std::cout << ") " << fmt_vec(coef) << "\n";
  }
  return 0;
}

int do_simulate(const RunConfig& cfg, const std::string& out_root) {
  ValidationOptions vopts;
  vopts.quick = true;
  ValidationReport rep = validate_model(cfg.model, vopts);
  if (!rep.accepted) {
    std::cout << rep.summary();
    std::cout << "rejected: model '" << cfg.model.name << "'\n";
    return 2;
  }
  std::vector<TrajectoryRecord> recs =
      simulate_replicates(cfg.model, cfg.sim, cfg.sim.replicates);
  RunDirectory dir(out_root, cfg);
  for (int r = 0; r < static_cast<int>(recs.size()); ++r) {
    dir.write("trajectory_" + std::to_string(r) + ".csv", trajectory_csv(recs[r]));
    if (cfg.sim.keep_final_state)
      dir.write("snapshot_" + std::to_string(r) + ".txt", snapshot_text(recs[r].final_state));
  }
  dir.write("events.jsonl", event_summary_jsonl(recs));
  std::string manifest = dir.finish();

  std::map<std::string, int> by_status;
  for (const TrajectoryRecord& r : recs) {
    const char* names[] = {"completed", "extinct", "frozen", "fixated"};
    by_status[names[static_cast<int>(r.status)]] += 1;
  }
  std::cout << "run " << dir.hash() << ": " << recs.size() << " replicate(s)";
  for (const auto& [name, n] : by_status) std::cout << ", " << n << " " << name;
  std::cout << "\n";
  std::cout << "artifacts: " << dir.path() << "\n";
  (void)manifest;
  return 0;
}

int do_reference(const RunConfig& cfg, const std::string& out_root, double wf_T, double wf_dt,
                 double moran_T, int M, int samples) {
  const ModelSpec& spec = cfg.model;
  EquilibriumData eq = find_equilibrium(spec);
  AveragedCoefficients avg = averaged_coefficients(spec, eq);
  RunDirectory dir(out_root, cfg, "-reference");

  json params;
  params["gamma_smpl"] = avg.gamma_smpl;
  params["redraw_total"] = avg.c_total;
  params["resample"] = 2.0 * avg.gamma_smpl;
  params["domain"] = domain_str(spec.domain);
  if (avg.c_total > 0 && avg.gamma_smpl > 0)
    params["pd_alpha"] = avg.c_total / avg.gamma_smpl;

  if (const auto* fin = std::get_if<FiniteSetDomain>(&spec.domain)) {
    WFParams wf = wf_params_from_averaged(avg, *fin);
    params["wf"] = {{"K", wf.K}, {"resample", wf.resample}};
    params["wf"]["theta"] = json::array();
    for (int r = 0; r < wf.theta.rows(); ++r) {
      json row = json::array();
      for (int c = 0; c < wf.theta.cols(); ++c) row.push_back(wf.theta(r, c));
      params["wf"]["theta"].push_back(row);
    }
    params["wf"]["alpha"] = std::vector<double>(wf.alpha.data(), wf.alpha.data() + wf.alpha.size());

    // Initial site shares: type masses spread by their placement laws.
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(fin->K);
    for (int i = 0; i < spec.q; ++i)
      x0 += spec.init.h0[i] * spec.init.placement[i].site_weights(*fin);
    x0 /= x0.sum();

    WFPath path = simulate_wf(wf, x0, wf_T, wf_dt, cfg.sim.seed);
    std::string csv = "t";
    for (int s = 0; s < wf.K; ++s) csv += ",x_" + std::to_string(s);
    csv += "\n";
    for (size_t g = 0; g < path.t.size(); ++g) {
      csv += format_exact(path.t[g]);
      for (int s = 0; s < wf.K; ++s) csv += "," + format_exact(path.x[g][s]);
      csv += "\n";
    }
    dir.write("wf_trajectory.csv", csv);

    MoranFVConfig mcfg;
    mcfg.M = M;
    mcfg.T = moran_T;
    mcfg.seed = cfg.sim.seed;
    for (int g = 0; g <= 10; ++g) mcfg.grid.push_back(moran_T * g / 10.0);
    mcfg.initial.kind = SourceLaw::Kind::Discrete;
    mcfg.initial.weights.assign(x0.data(), x0.data() + x0.size());
    MoranFVRecord rec = moran_fv(spec.domain, avg, mcfg);
    std::vector<std::string> names = test_fn_names(spec.domain);
    std::string mcsv = "t";
    for (const std::string& n : names) mcsv += ",obs_" + n;
    mcsv += "\n";
    for (size_t g = 0; g < rec.t.size(); ++g) {
      mcsv += format_exact(rec.t[g]);
      for (int fn = 0; fn < rec.obs[g].size(); ++fn) mcsv += "," + format_exact(rec.obs[g][fn]);
      mcsv += "\n";
    }
    dir.write("moran_trajectory.csv", mcsv);
    params["moran"] = {{"M", M},
                       {"T", moran_T},
                       {"calibration_z", rec.calibration_z},
                       {"calibration_gap", rec.calibration_gap}};
  }

  if (avg.c_total > 0 && avg.gamma_smpl > 0) {
    PDParams pd;
    pd.alpha = avg.c_total / avg.gamma_smpl;
    Rng rng(cfg.sim.seed, uint64_t(1) << 32);
    std::string csv = "sample,largest_share\n";
    for (int k = 0; k < samples; ++k)
      csv += std::to_string(k) + "," + format_exact(sample_poisson_dirichlet(pd, rng)[0]) + "\n";
    dir.write("pd_samples.csv", csv);
  }

  dir.write("reference_params.json", params.dump(2) + "\n");
  dir.finish();
  std::cout << "reference processes for '" << spec.name
            << "': gamma_smpl = " << format_exact(avg.gamma_smpl)
            << ", redraw total = " << format_exact(avg.c_total) << "\n";
  std::cout << "artifacts: " << dir.path() << "\n";
  return 0;
}

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Exact simulator and limit diagnostics for density-regulated spatial populations"};
  app.require_subcommand(1);

  std::string config_path, out_root = "runs", run_dir;
  bool quick = false;
  int k_max = 8;
  double wf_T = 1.0, wf_dt = 1e-4, moran_T = 1.0;
  int moran_M = 300, pd_samples = 500;

  CLI::App* c_validate =
      app.add_subcommand("validate", "Check a model against the standing assumptions");
  c_validate->add_option("config", config_path, "model/sim config (JSON)")->required();
  c_validate->add_flag("--quick", quick, "structural checks only, skip equilibrium analysis");
  c_validate->allow_extras();

  CLI::App* c_flow =
      app.add_subcommand("flow", "Density-flow analysis: equilibrium and averaged coefficients");
  c_flow->add_option("config", config_path, "model/sim config (JSON)")->required();
  c_flow->allow_extras();

  CLI::App* c_lambda =
      app.add_subcommand("lambda", "Power-series inverse-density solution with certification");
  c_lambda->add_option("config", config_path, "model/sim config (JSON)")->required();
  c_lambda->add_option("--k-max", k_max, "series truncation degree")->check(CLI::Range(1, 16));
  c_lambda->allow_extras();

  CLI::App* c_sim = app.add_subcommand("simulate", "Run replicates and persist artifacts");
  c_sim->add_option("config", config_path, "model/sim config (JSON)")->required();
  c_sim->add_option("--out", out_root, "output root directory (default runs)");
  c_sim->allow_extras();

  CLI::App* c_ref = app.add_subcommand(
      "reference", "Matched limit references: Wright-Fisher, Moran scheme, Poisson-Dirichlet");
  c_ref->add_option("config", config_path, "model/sim config (JSON)")->required();
  c_ref->add_option("--out", out_root, "output root directory (default runs)");
  c_ref->add_option("--wf-T", wf_T, "Wright-Fisher horizon");
  c_ref->add_option("--wf-dt", wf_dt, "Wright-Fisher step size")
      ->check(CLI::PositiveNumber);
  c_ref->add_option("--moran-T", moran_T, "Moran scheme horizon");
  c_ref->add_option("--M", moran_M, "Moran particle count");
  c_ref->add_option("--samples", pd_samples, "Poisson-Dirichlet sample count")
      ->check(CLI::PositiveNumber);
  c_ref->allow_extras();

  CompareOptions copt;
  CLI::App* c_cmp =
      app.add_subcommand("compare", "Convergence diagnostics over a persisted run directory");
  c_cmp->add_option("run_dir", run_dir, "directory written by `simulate`")->required();
  c_cmp->add_option("--density-tol", copt.density_tol, "sup-norm density deviation tolerance");
  c_cmp->add_option("--insep-tol", copt.insep_tol, "cross-type inseparability tolerance");
  c_cmp->add_option("--zero-sum-tol", copt.zero_sum_tol, "zero-sum identity tolerance");
  c_cmp->add_option("--out", copt.out_root, "output root (default: next to the run)");

  CLI::App* c_demo = app.add_subcommand("demo", "End-to-end pipelines with reference checks");
  c_demo->require_subcommand(1);
  GeneticsDemoOptions gopt;
  CLI::App* c_gen = c_demo->add_subcommand(
      "genetics", "Fixation probabilities across N and stationary allele shares");
  c_gen->add_option("--N", gopt.N, "top population size of the sweep");
  c_gen->add_option("--replicates", gopt.fixation_replicates, "fixation replicates per N");
  c_gen->add_option("--chains", gopt.chains, "stationary alleles chains");
  c_gen->add_option("--samples-per-chain", gopt.samples_per_chain, "clan samples per chain");
  c_gen->add_option("--seed", gopt.seed, "manifest seed");
  c_gen->add_option("--out", gopt.out_root, "output root directory (default runs)");

  PolarityDemoOptions popt;
  CLI::App* c_pol = c_demo->add_subcommand(
      "polarity", "Stationary polarity-patch statistics against the limit predictions");
  c_pol->add_option("--N", popt.N, "population size scale");
  c_pol->add_option("--chains", popt.chains, "stationary chains");
  c_pol->add_option("--samples-per-chain", popt.samples_per_chain, "clan samples per chain");
  c_pol->add_option("--k-on", popt.k_on, "association rate");
  c_pol->add_option("--k-fb", popt.k_fb, "feedback recruitment rate");
  c_pol->add_option("--k-off", popt.k_off, "dissociation rate");
  c_pol->add_option("--D", popt.D, "membrane diffusion constant");
  c_pol->add_option("--seed", popt.seed, "manifest seed");
  c_pol->add_option("--out", popt.out_root, "output root directory (default runs)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (*c_validate) return do_validate(load_with_overrides(config_path, c_validate->remaining()),
                                      quick);
  if (*c_flow) return do_flow(load_with_overrides(config_path, c_flow->remaining()));
  if (*c_lambda) return do_lambda(load_with_overrides(config_path, c_lambda->remaining()), k_max);
  if (*c_sim) return do_simulate(load_with_overrides(config_path, c_sim->remaining()), out_root);
  if (*c_ref)
    return do_reference(load_with_overrides(config_path, c_ref->remaining()), out_root, wf_T,
                        wf_dt, moran_T, moran_M, pd_samples);
  if (*c_cmp) {
    PipelineOutcome out = compare_run(run_dir, copt);
    std::cout << out.table();
    std::cout << "artifacts: " << out.run_dir << "\n";
    return out.all_passed() ? 0 : 2;
  }
  if (*c_gen) {
    PipelineOutcome out = genetics_demo(gopt);
    std::cout << out.table();
    if (!out.run_dir.empty()) std::cout << "artifacts: " << out.run_dir << "\n";
    return out.all_passed() ? 0 : 2;
  }
  if (*c_pol) {
    PipelineOutcome out = polarity_demo(popt);
    std::cout << out.table();
    if (!out.run_dir.empty()) std::cout << "artifacts: " << out.run_dir << "\n";
    return out.all_passed() ? 0 : 2;
  }
  return 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const DiagnosticError& e) {
    std::cerr << "diagnostic error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace fvpop
