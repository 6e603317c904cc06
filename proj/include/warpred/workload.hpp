#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <vector>

#include "warpred/simt.hpp"

// Synthetic gradient-computation workload: traces of per-warp atomic-update
// activity that statistically mimic rasterization backward passes, plus the
// diagnostic histograms over those traces.

namespace warpred::workload {

struct SceneSpec {
  std::int32_t num_primitives = 1024;
  int params_per_primitive = 3;  // N gradient values per update
  int image_width = 64;
  int image_height = 32;
  // Mean length (pixels) of the contiguous run one primitive covers.
  double mean_fragment_span = 64.0;
  // Mean loop trip count per warp (Poisson, truncated at 1).
  double fragments_per_pixel_mean = 1.0;
  // Probability a lane passes the participation checks in one iteration.
  double activity_prob = 1.0;
  // Probability an entire warp references a single primitive in an iteration.
  double locality = 1.0;
  std::uint64_t seed = 0;
  // Gradient values drawn from {k/256 : k=1..255} when set, so any summation
  // order produces bit-identical results; full-range uniform reals otherwise.
  bool quantized_values = true;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;

  bool operator==(const SceneSpec&) const = default;
};

// One loop iteration of one warp: the unit of atomic traffic.
struct WarpRecord {
  std::int32_t warp_id = 0;
  std::int32_t iteration = 0;
  simt::LaneMask active = 0;
  // Primitive referenced by each lane. The generator fills all 32 slots
  // (inactive lanes follow the warp's lockstep loop); -1 marks a lane whose
  // reference is unknown, e.g. after a round trip through the text format.
  std::array<std::int32_t, simt::warp_size> lane_primitive;
  // 32 x N gradient values, lane-major. Inactive lanes hold zeros.
  std::vector<double> lane_grads;

  WarpRecord() { lane_primitive.fill(-1); }

  int params() const {
    return static_cast<int>(lane_grads.size()) / simt::warp_size;
  }
  double grad(int lane, int param) const {
    return lane_grads[static_cast<std::size_t>(lane) * params() + param];
  }
  double& grad(int lane, int param) {
    return lane_grads[static_cast<std::size_t>(lane) * params() + param];
  }

  bool operator==(const WarpRecord&) const = default;
};

// Fixed (sm, sub-core) placement for a warp; used by tests and experiments
// that need an explicit layout instead of the default round-robin.
struct SubcorePlacement {
  int sm = 0;
  int subcore = 0;
  bool operator==(const SubcorePlacement&) const = default;
};

struct Trace {
  SceneSpec scene;
  // Record order is the issue order consumed by the simulator.
  std::vector<WarpRecord> records;
  // Optional pinned placements; warps not listed are placed round-robin.
  std::map<std::int32_t, SubcorePlacement> placement;

  bool operator==(const Trace&) const = default;
};

// Deterministic for a given seed: equal specs yield byte-identical traces.
Trace generate(const SceneSpec& scene);

// Number of distinct primitives referenced by the active lanes of a record.
int distinct_active_primitives(const WarpRecord& record);

// Frequency of distinct-primitive counts per record, over records with a
// nonempty active mask. Throws std::invalid_argument on an empty trace.
std::map<int, std::uint64_t> histogram_distinct_primitives(const Trace& trace);

// Frequency of popc(active) per record. Throws on an empty trace.
std::map<int, std::uint64_t> histogram_active_lanes(const Trace& trace);

}  // namespace warpred::workload
