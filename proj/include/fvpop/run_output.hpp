#pragma once
// Artifact persistence: trajectory CSV, JSON-lines event summaries, particle
// snapshots, and run directories keyed by config hash with a manifest written
// atomically last. All numeric text uses shortest round-trip formatting, so
// artifacts are byte-stable across reruns and diagnostics recomputed from a
// saved CSV match the in-memory values bit for bit.

#include <map>
#include <string>
#include <vector>

#include "fvpop/config_io.hpp"
#include "fvpop/engine.hpp"

namespace fvpop {

inline constexpr const char* kCodeVersion = "0.1.0";

// Shortest decimal string that parses back to exactly x.
std::string format_exact(double x);

// One row per grid point. Columns, in order (optional groups present only
// when the record carries them): t; h_<type>; count_<type>;
// obs_<fn>_<type> (test-function averages); clan_count, clan_largest,
// clan_dispersion; ev_* cumulative event counts.
std::string trajectory_csv(const TrajectoryRecord& rec);

// Inverse of trajectory_csv for the columns it writes. Terminal status and
// the final particle state live in the event summary / snapshot, not the CSV,
// so those fields keep their defaults.
TrajectoryRecord read_trajectory_csv(const std::string& csv);

// One JSON object per record: replicate index, terminal status, event totals,
// final time and particle count.
std::string event_summary_jsonl(const std::vector<TrajectoryRecord>& recs);

// Portable text snapshot: a small header, then one line per particle with
// type, location (site index, coordinate, or x y z), and clan id.
std::string snapshot_text(const PopulationSnapshot& snap);

// Output directory <root>/<config-hash><tag>/. Construction creates the
// directory and stages the canonical config; write() persists an artifact and
// records it in the inventory; finish() writes manifest.json (config hash,
// seed, code version, timestamps, and per-file sizes and checksums) via a
// temporary file and an atomic rename, so a manifest's presence marks a
// complete run. The tag separates derived outputs (reference processes,
// comparison reports) from the primary run keyed by the same config.
class RunDirectory {
 public:
  RunDirectory(const std::string& root, const RunConfig& cfg, const std::string& tag = "");

  const std::string& path() const { return path_; }
  const std::string& hash() const { return hash_; }

  void write(const std::string& name, const std::string& bytes);
  std::string finish();

 private:
  struct FileEntry {
    uint64_t bytes = 0;
    std::string checksum;
  };
  std::string path_;
  std::string hash_;
  std::string started_;
  uint64_t seed_ = 0;
  std::map<std::string, FileEntry> files_;
  bool finished_ = false;
};

// Byte-compares two completed run directories: identical inventories,
// identical artifact bytes, and identical manifests apart from the two
// timestamp fields. On mismatch returns false and names the culprit.
bool runs_identical(const std::string& dir_a, const std::string& dir_b,
                    std::string* detail = nullptr);

}  // namespace fvpop
