#pragma once
// Command-line front end: subcommand dispatch with dotted-path config
// overrides, plus the library entry points behind the `compare` and `demo`
// subcommands so test drivers can call the same pipelines in-process.

#include <cstdint>
#include <string>
#include <vector>

namespace fvpop {

// One pass/fail line of a pipeline: `value` must land in [lo, hi].
struct CheckLine {
  std::string name;
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool passed = false;
};

struct PipelineOutcome {
  std::vector<CheckLine> checks;
  std::string run_dir;  // artifact directory; empty when persistence is off

  bool all_passed() const;
  // One aligned "ok|FAIL name = value (band [lo, hi])" line per check.
  std::string table() const;
};

// Neutral-genetics pipeline: fixation probabilities of the minority allele
// across a population-size sweep {N/16, N/4, N} against the martingale /
// Moran-chain value, then stationary largest-allele shares of the
// infinite-alleles model against Poisson-Dirichlet sampling.
struct GeneticsDemoOptions {
  int64_t N = 1600;  // top of the fixation sweep; alleles run at N/2
  int fixation_replicates = 1000;
  double init_share = 0.3;
  int chains = 25;  // stationary alleles chains
  int samples_per_chain = 20;
  uint64_t seed = 1;
  std::string out_root = "runs";  // empty: compute checks, skip artifacts
};

PipelineOutcome genetics_demo(const GeneticsDemoOptions& opt);

// Membrane-polarity pipeline on the sphere: stationary membrane density
// against the flow equilibrium, largest clan shares against
// Poisson-Dirichlet, and dominant-patch squared dispersion against the
// diffusion/turnover balance prediction.
struct PolarityDemoOptions {
  int64_t N = 2000;
  double k_on = 0.5, k_fb = 2.0, k_off = 1.0, D = 0.01;
  int chains = 25;
  int samples_per_chain = 20;
  uint64_t seed = 1;
  std::string out_root = "runs";
};

PipelineOutcome polarity_demo(const PolarityDemoOptions& opt);

// Convergence diagnostics recomputed purely from a persisted run directory
// (config.json + trajectory CSVs + events.jsonl): sup-norm density deviation
// from the flow equilibrium, cross-type inseparability, the exact zero-sum
// identity of the per-type difference paths, and final clan shares. Writes
// diagnostics.csv + summary.json to <out_root>/<hash>-compare.
struct CompareOptions {
  double density_tol = 0.15;
  double insep_tol = 0.10;
  double zero_sum_tol = 1e-12;
  std::string out_root;  // empty: default to the run directory's parent
};

PipelineOutcome compare_run(const std::string& run_dir, const CompareOptions& opt = {});

// Entry point behind main(): parses `fvpop <subcommand> ...`, maps errors to
// exit codes (1 config, 2 validation, 3 diagnostics).
int run_cli(int argc, const char* const* argv);

}  // namespace fvpop
