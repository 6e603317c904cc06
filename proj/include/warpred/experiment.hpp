#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "warpred/hwsim.hpp"
#include "warpred/tuner.hpp"
#include "warpred/workload.hpp"

// Batch experiment harness: resolve a config into (machine, policy,
// threshold) cells, simulate each cell over one trace, and persist metrics,
// histograms, tune reports and a manifest as CSV/JSON under an output
// directory. Reruns of an identical config produce byte-identical files.

namespace warpred::experiment {

inline constexpr int config_version = 1;

struct MachineRef {
  std::string name;                          // preset name or custom label
  std::optional<hwsim::MachineConfig> inline_config;  // set for custom machines
};

struct ExperimentConfig {
  workload::SceneSpec scene;
  std::vector<MachineRef> machines;
  std::vector<reducers::PolicyKind> policies;
  std::vector<int> thresholds;  // ignored when sweep is set
  bool threshold_sweep = false;
  // Fraction of end-to-end time spent in gradient computation, used to
  // synthesize end-to-end speedup from gradient-computation speedup.
  double grad_fraction = 0.44;
  std::string output_dir;
  std::optional<std::string> trace_file;  // load instead of generating
  bool trace_file_binary = false;
  bool emit_events = false;
};

// Parses the versioned key-value config (JSON). Unknown fields and type or
// range violations produce diagnostics naming the offending field.
ExperimentConfig parse_config_text(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

// FNV-1a over the canonical serialization of the semantic fields (scene,
// machines, policies, thresholds, grad_fraction, trace_file); output paths
// and debug switches do not participate.
std::uint64_t config_hash(const ExperimentConfig& cfg);

struct CellResult {
  std::string machine;
  reducers::PolicyKind policy;
  std::optional<int> threshold;
  hwsim::RunMetrics metrics;
  double grad_speedup = 1.0;
  double end_to_end_speedup = 1.0;
};

struct Manifest {
  std::uint64_t hash = 0;
  std::string status;  // "complete" or "aborted"
  std::string error;   // set when aborted
  std::vector<std::string> outputs;
  std::vector<CellResult> cells;
};

// Executes every cell. A failing cell aborts the run; the manifest then
// records the cells completed so far and the failure.
Manifest run_experiment(const ExperimentConfig& cfg);

// Readers for the emitted CSVs (round-trip checks and downstream tools).
std::vector<CellResult> read_metrics_csv(std::istream& in);
std::map<int, std::uint64_t> read_histogram_csv(std::istream& in);

void write_histogram_csv(const std::map<int, std::uint64_t>& hist,
                         const std::string& key_column, std::ostream& out);

}  // namespace warpred::experiment
