#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <span>

// Deterministic emulation of a 32-lane warp and the warp-level primitives
// (match_any, ballot, shuffle, shuffle_down, ffs, popc). All functions are
// pure; lane 0 is the lowest lane.

namespace warpred::simt {

inline constexpr int warp_size = 32;

// Bit i set = lane i participates.
using LaneMask = std::uint32_t;

inline constexpr LaneMask full_mask = 0xffffffffu;

constexpr LaneMask lane_bit(int lane) { return LaneMask{1} << lane; }

constexpr bool lane_in(LaneMask mask, int lane) {
  return (mask & lane_bit(lane)) != 0;
}

constexpr int popc(LaneMask mask) { return std::popcount(mask); }

// 1-based position of the lowest set bit; 0 for the empty mask, so that
// `ffs(mask) - 1` yields the leader lane (or -1 when there is none).
constexpr int ffs(LaneMask mask) {
  return mask == 0 ? 0 : std::countr_zero(mask) + 1;
}

constexpr int leader_lane(LaneMask mask) { return ffs(mask) - 1; }

// For each active lane i, the mask of active lanes whose key equals key[i].
// Inactive lanes get the empty mask.
inline std::array<LaneMask, warp_size> match_any(
    LaneMask active, std::span<const std::int32_t, warp_size> keys) {
  std::array<LaneMask, warp_size> groups{};
  for (int i = 0; i < warp_size; ++i) {
    if (!lane_in(active, i)) continue;
    LaneMask m = 0;
    for (int j = 0; j < warp_size; ++j) {
      if (lane_in(active, j) && keys[j] == keys[i]) m |= lane_bit(j);
    }
    groups[i] = m;
  }
  return groups;
}

// Bit i set iff lane i is active and its predicate holds.
inline LaneMask ballot(LaneMask active,
                       const std::array<bool, warp_size>& predicate) {
  LaneMask m = 0;
  for (int i = 0; i < warp_size; ++i) {
    if (lane_in(active, i) && predicate[i]) m |= lane_bit(i);
  }
  return m;
}

// result[i] = values[src_lane[i]]. The value read is whatever the source
// lane's register holds, regardless of that lane's activity.
inline std::array<double, warp_size> shuffle(
    std::span<const double, warp_size> values,
    std::span<const int, warp_size> src_lane) {
  std::array<double, warp_size> out{};
  for (int i = 0; i < warp_size; ++i) out[i] = values[src_lane[i]];
  return out;
}

// result[i] = values[i + offset] when in range, else the lane's own value
// (the standard warp shuffle-down contract).
inline std::array<double, warp_size> shuffle_down(
    std::span<const double, warp_size> values, int offset) {
  std::array<double, warp_size> out{};
  for (int i = 0; i < warp_size; ++i) {
    out[i] = (i + offset < warp_size) ? values[i + offset] : values[i];
  }
  return out;
}

}  // namespace warpred::simt
