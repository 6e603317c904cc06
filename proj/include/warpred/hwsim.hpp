#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "warpred/reducers.hpp"
#include "warpred/workload.hpp"

// Cycle-approximate simulation of the atomic path: sub-core issue, the
// per-SM LSU instruction queue, the SM->L2 interconnect, and the ROP units
// that apply atomic adds at the memory partition. For the hw_atomred policy
// the sub-core additionally coalesces each warp's updates into reduce
// transactions and routes them between the LSU and a per-sub-core reduction
// unit based on contention.
//
// The cycle model is approximate by construction: results are meaningful as
// orderings, ratios and conservation checks, not absolute cycle counts.

namespace warpred::hwsim {

struct MachineConfig {
  int num_sms = 1;
  int subcores_per_sm = 4;
  // Entries per SM, shared by its sub-cores. 0 means unbounded.
  int lsu_queue_depth = 32;
  int rop_units = 2;
  double rop_throughput = 1.0;  // requests/cycle/unit
  int interconnect_latency = 20;
  int interconnect_bandwidth = 256;  // packets/cycle entering the wire
  int red_unit_latency_per_add = 1;
  int red_pipe_depth = 4;  // pending reduce transactions per sub-core
  int warp_issue_width = 4;  // instructions/cycle/sub-core

  void validate() const;
  bool lsu_unbounded() const { return lsu_queue_depth <= 0; }
};

// Presets encode only the published SM/ROP counts; everything else uses the
// shared defaults above.
MachineConfig preset(std::string_view name);
std::vector<std::string> preset_names();

// Coalesced record of one address plus the participating lanes' values and
// mask: the payload of one atomred instruction group.
struct ReduceTransaction {
  reducers::Address addr;
  std::vector<double> values;  // ascending lane order
  simt::LaneMask lane_mask = 0;
  reducers::RequestSource origin;
};

// One transaction per distinct (primitive, param) address among active
// lanes; transaction order is ascending leader lane, then param index.
std::vector<ReduceTransaction> coalesce_atomred(
    const workload::WarpRecord& record);

enum class Route { lsu_direct, subcore_reduce, stall };

// Contention determination: the LSU direct path requires room for the whole
// unbundled burst; otherwise the sub-core reduction pipe is tried; if both
// are full the transaction retries next cycle. lsu_free_slots < 0 means the
// queue is unbounded.
Route contention_route(const ReduceTransaction& txn, int lsu_free_slots,
                       int red_pipe_free_slots);

// Single FP adder fed by the sub-core reduce pipe. One value is consumed
// per latency_per_add cycles; after popc(lane_mask) adds the accumulated
// request is emitted for forwarding to the LSU queue.
class ReductionUnit {
 public:
  ReductionUnit(int latency_per_add, int pipe_depth);

  int pipe_free_slots() const;
  void enqueue(ReduceTransaction txn);

  // Advances one cycle; returns the finished request when a fold completes.
  std::optional<reducers::AtomicRequest> step();

  bool idle() const;
  std::uint64_t adds_performed() const { return adds_; }

 private:
  int latency_per_add_;
  int pipe_depth_;
  std::deque<ReduceTransaction> pipe_;
  bool active_ = false;
  ReduceTransaction current_;
  std::size_t next_value_ = 0;
  double acc_ = 0.0;
  int countdown_ = 0;
  std::uint64_t adds_ = 0;
};

struct RunMetrics {
  std::uint64_t total_cycles = 0;
  std::uint64_t stalls_lsu = 0;    // sub-core cycles blocked on a full LSU queue
  std::uint64_t stalls_other = 0;  // issue-complete cycles waiting for drain
  std::uint64_t atomic_requests_to_l2 = 0;
  std::uint64_t core_instructions = 0;
  std::uint64_t core_fp_adds = 0;
  std::uint64_t interconnect_packets = 0;
  double energy_proxy = 0.0;

  bool operator==(const RunMetrics&) const = default;
};

// energy_proxy = alpha * interconnect_packets + beta * (rop_ops + core_fp_adds).
// A declared proxy expressing the relative cost of interconnect traffic;
// never reported as joules.
inline constexpr double energy_alpha_interconnect = 10.0;
inline constexpr double energy_beta_compute = 1.0;

struct SimResult {
  RunMetrics metrics;
  // Per-address sums as applied by the ROP units, for conservation checks.
  std::map<reducers::Address, double> applied_sums;
};

// Deterministic for identical (trace, config, policy). Warps are placed on
// (sm, sub-core) slots round-robin by warp id unless the trace pins them;
// a pinned placement outside the machine is an error.
//
// Each cycle runs fixed phases: ROP service, LSU->interconnect dispatch
// (rotating round-robin over SMs, bounded by interconnect_bandwidth),
// reduction-unit steps and result forwarding, then sub-core issue. A
// request issued in cycle c is therefore dispatched at c+1 and serviced at
// c+1+latency: one lone request costs issue(1) + latency + 1 ROP cycle.
RunMetrics simulate(const workload::Trace& trace, const MachineConfig& config,
                    const reducers::Policy& policy);
SimResult simulate_detailed(const workload::Trace& trace,
                            const MachineConfig& config,
                            const reducers::Policy& policy,
                            std::ostream* event_log = nullptr);

// CSV row helpers shared by the experiment harness and tests.
std::string metrics_csv_header();
std::string metrics_csv_row(const RunMetrics& m);
RunMetrics parse_metrics_csv_fields(
    const std::vector<std::string_view>& fields, std::size_t offset);

}  // namespace warpred::hwsim
