#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "warpred/workload.hpp"

// The per-record atomic-update policies: native per-lane atomics, the
// serialized and butterfly warp-level reductions with a balancing threshold,
// and a per-parameter reduction baseline. Each policy turns one WarpRecord
// into an ordered stream of atomic requests plus a count of the warp
// instructions and FP adds executed at the core.

namespace warpred::reducers {

struct Address {
  std::int32_t primitive = 0;
  std::int32_t param = 0;
  auto operator<=>(const Address&) const = default;
};

struct RequestSource {
  std::int32_t sm = 0;
  std::int32_t subcore = 0;
  std::int32_t warp = 0;
  bool operator==(const RequestSource&) const = default;
};

// One address+value update destined for the L2 atomic (ROP) path.
// sm/subcore are stamped when the request is scheduled onto a machine;
// policies fill in only the warp id.
struct AtomicRequest {
  Address addr;
  double value = 0.0;
  RequestSource source;
  bool operator==(const AtomicRequest&) const = default;
};

struct PolicyOutput {
  std::vector<AtomicRequest> requests;
  std::uint64_t core_instructions = 0;  // warp instructions, incl. atomic issues
  std::uint64_t core_fp_adds = 0;       // adds performed at the SM
};

// Warp-instruction cost table shared by all policies. Shuffle+add is charged
// per param per fetched lane (serial) or per param per tree level (butterfly);
// atomic issue is charged per emitted request.
struct InstructionCosts {
  std::uint64_t match_any = 1;
  std::uint64_t ballot = 1;
  std::uint64_t popc = 1;
  std::uint64_t ffs = 1;
  std::uint64_t branch = 1;
  std::uint64_t shuffle_add = 1;
  std::uint64_t atomic_issue = 1;
};

inline constexpr InstructionCosts default_costs{};

// Comparison is `group_count >= threshold`: 0 always reduces (where a
// reduction is possible at all), 33 never does. The tuner sweeps 0..32.
inline constexpr int min_balance_threshold = 0;
inline constexpr int max_balance_threshold = 33;

// One request per (active lane x param), lane-major then param order.
PolicyOutput native_atomics(const workload::WarpRecord& record);

// Per match_any group of size >= threshold, the lowest-lane leader folds the
// group's values in ascending lane order and emits one request per param;
// smaller groups fall back to per-lane atomics.
PolicyOutput reduce_serial(const workload::WarpRecord& record,
                           int balance_threshold);

// Full-warp butterfly tree (shuffle-down offsets 16,8,4,2,1). Requires all
// 32 lanes to reference one primitive; inactive lanes participate with the
// zeros the record carries and `active` records original activity. With
// diagnose_divergence set, a record whose lanes reference more than one
// primitive throws instead of falling back.
PolicyOutput reduce_bfly(const workload::WarpRecord& record,
                         int balance_threshold,
                         bool diagnose_divergence = false);

// Library-style baseline: a separate full-warp eligibility check plus
// reduction for every param, never batching the params of a primitive.
PolicyOutput cccl_style(const workload::WarpRecord& record);

// Ground-truth accumulation per address, in trace order; the reference
// against which every policy's delivered sums are checked.
std::map<Address, double> oracle_sum(const workload::Trace& trace);

enum class PolicyKind { native, sw_s, sw_b, cccl, hw_atomred };

struct Policy {
  PolicyKind kind = PolicyKind::native;
  int threshold = 0;  // used by sw_s / sw_b only
};

// Dispatch for the core-side policies; hw_atomred is scheduled inside the
// machine simulation and has no per-record output here.
PolicyOutput apply_policy(const workload::WarpRecord& record,
                          const Policy& policy);

bool policy_uses_threshold(PolicyKind kind);
std::string policy_kind_name(PolicyKind kind);
PolicyKind parse_policy_kind(const std::string& name);

}  // namespace warpred::reducers
