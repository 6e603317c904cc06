#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>

#include "warpred/hwsim.hpp"

// Balancing-threshold selection by exhaustive profiling: simulate one trace
// segment under every threshold and pick the fastest, re-running the sweep
// periodically during a long training loop.

namespace warpred::tuner {

inline constexpr int default_reprofile_period = 2000;

enum class PolicyFamily { sw_s, sw_b };

struct TuneReport {
  std::map<int, std::uint64_t> per_threshold_cycles;  // thresholds 0..32
  int chosen = 0;  // argmin; ties break toward the lowest threshold
  std::int32_t profile_iteration = 0;
  int reprofile_period = default_reprofile_period;
};

// Records of one iteration index: the natural profiling segment.
workload::Trace extract_iteration(const workload::Trace& trace,
                                  std::int32_t iteration);

// Sweeps thresholds 0..32 on the segment. Throws std::invalid_argument when
// the segment is empty.
TuneReport tune(const workload::Trace& segment,
                const hwsim::MachineConfig& config, PolicyFamily family);

// CSV: `threshold,cycles` rows, then a summary line with the chosen value.
void write_tune_report_csv(const TuneReport& report, std::ostream& out);
TuneReport read_tune_report_csv(std::istream& in);

reducers::PolicyKind family_policy_kind(PolicyFamily family);

}  // namespace warpred::tuner
