#include "warpred/hwsim.hpp"

#include <algorithm>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "warpred/csv.hpp"

namespace warpred::hwsim {

using reducers::AtomicRequest;
using reducers::Policy;
using reducers::PolicyKind;
using workload::Trace;
using workload::WarpRecord;

void MachineConfig::validate() const {
  auto fail = [](const char* field) {
    throw std::invalid_argument(std::string("MachineConfig: invalid field ") +
                                field);
  };
  if (num_sms < 1) fail("num_sms");
  if (subcores_per_sm < 1) fail("subcores_per_sm");
  if (lsu_queue_depth < 0) fail("lsu_queue_depth");
  if (rop_units < 1) fail("rop_units");
  if (!(rop_throughput > 0.0)) fail("rop_throughput");
  if (interconnect_latency < 1) fail("interconnect_latency");
  if (interconnect_bandwidth < 1) fail("interconnect_bandwidth");
  if (red_unit_latency_per_add < 1) fail("red_unit_latency_per_add");
  if (red_pipe_depth < 1) fail("red_pipe_depth");
  if (warp_issue_width < 1) fail("warp_issue_width");
}

MachineConfig preset(std::string_view name) {
  MachineConfig cfg;
  if (name == "tiny") {
    cfg.num_sms = 1;
    cfg.rop_units = 2;
  } else if (name == "rtx3060like") {
    cfg.num_sms = 28;
    cfg.rop_units = 48;
  } else if (name == "rtx4090like") {
    cfg.num_sms = 144;
    cfg.rop_units = 176;
  } else {
    throw std::invalid_argument("unknown machine preset: " +
                                std::string(name));
  }
  return cfg;
}

std::vector<std::string> preset_names() {
  return {"tiny", "rtx3060like", "rtx4090like"};
}

std::vector<ReduceTransaction> coalesce_atomred(const WarpRecord& record) {
  std::vector<ReduceTransaction> txns;
  const int n = record.params();
  simt::LaneMask remaining = record.active;
  const auto groups = simt::match_any(
      record.active,
      std::span<const std::int32_t, simt::warp_size>(record.lane_primitive));
  while (remaining != 0) {
    const int leader = simt::leader_lane(remaining);
    const simt::LaneMask group = groups[leader];
    for (int p = 0; p < n; ++p) {
      ReduceTransaction txn;
      txn.addr = {record.lane_primitive[leader], p};
      txn.lane_mask = group;
      txn.origin = {0, 0, record.warp_id};
      simt::LaneMask members = group;
      while (members != 0) {
        const int lane = simt::leader_lane(members);
        members &= ~simt::lane_bit(lane);
        txn.values.push_back(record.grad(lane, p));
      }
      txns.push_back(std::move(txn));
    }
    remaining &= ~group;
  }
  return txns;
}

Route contention_route(const ReduceTransaction& txn, int lsu_free_slots,
                       int red_pipe_free_slots) {
  const int burst = simt::popc(txn.lane_mask);
  if (lsu_free_slots < 0 || lsu_free_slots >= burst) return Route::lsu_direct;
  if (red_pipe_free_slots >= 1) return Route::subcore_reduce;
  return Route::stall;
}

ReductionUnit::ReductionUnit(int latency_per_add, int pipe_depth)
    : latency_per_add_(latency_per_add), pipe_depth_(pipe_depth) {}

int ReductionUnit::pipe_free_slots() const {
  return pipe_depth_ - static_cast<int>(pipe_.size());
}

void ReductionUnit::enqueue(ReduceTransaction txn) {
  pipe_.push_back(std::move(txn));
}

std::optional<AtomicRequest> ReductionUnit::step() {
  if (!active_) {
    if (pipe_.empty()) return std::nullopt;
    current_ = std::move(pipe_.front());
    pipe_.pop_front();
    active_ = true;
    next_value_ = 0;
    acc_ = 0.0;
    countdown_ = latency_per_add_;
  }
  if (--countdown_ > 0) return std::nullopt;
  // One value consumed, in ascending lane order.
  acc_ += current_.values[next_value_++];
  ++adds_;
  countdown_ = latency_per_add_;
  if (next_value_ < current_.values.size()) return std::nullopt;
  active_ = false;
  return AtomicRequest{current_.addr, acc_, current_.origin};
}

bool ReductionUnit::idle() const { return !active_ && pipe_.empty(); }

namespace {

// Per-SM LSU instruction queue. Slots may be reserved ahead of time for a
// transaction committed to the direct path, so the burst admission check
// stays exact while the pushes are spread over later cycles.
struct LsuQueue {
  int depth = 0;  // 0 = unbounded
  int reserved = 0;
  std::deque<AtomicRequest> q;

  bool unbounded() const { return depth <= 0; }
  int free_slots() const {
    if (unbounded()) return -1;
    return depth - static_cast<int>(q.size()) - reserved;
  }
  bool try_push(const AtomicRequest& req) {
    if (!unbounded() && static_cast<int>(q.size()) + reserved >= depth)
      return false;
    q.push_back(req);
    return true;
  }
  void reserve(int n) { reserved += n; }
  void push_reserved(const AtomicRequest& req) {
    if (reserved > 0) --reserved;
    q.push_back(req);
  }
};

struct Packet {
  AtomicRequest req;
  std::uint64_t ready_cycle = 0;
};

struct SubcoreState {
  int sm = 0;
  int subcore = 0;
  std::vector<const WarpRecord*> records;
  std::size_t next_record = 0;

  // Core-side policy stream.
  reducers::PolicyOutput current;
  bool current_valid = false;
  std::uint64_t non_atomic_left = 0;
  std::size_t next_request = 0;

  // hw_atomred stream.
  std::vector<ReduceTransaction> txns;
  bool txns_valid = false;
  std::size_t next_txn = 0;
  std::vector<AtomicRequest> unbundle;
  std::size_t next_unbundle = 0;

  ReductionUnit red;
  std::optional<AtomicRequest> red_latch;

  SubcoreState(int latency, int pipe_depth) : red(latency, pipe_depth) {}

  bool had_work() const { return !records.empty(); }
};

class Simulation {
 public:
  Simulation(const Trace& trace, const MachineConfig& cfg,
             const Policy& policy, std::ostream* log)
      : trace_(trace), cfg_(cfg), policy_(policy), log_(log) {
    cfg.validate();
    if (reducers::policy_uses_threshold(policy.kind) &&
        (policy.threshold < reducers::min_balance_threshold ||
         policy.threshold > reducers::max_balance_threshold)) {
      throw std::invalid_argument("policy threshold out of range");
    }
    place_warps();
  }

  SimResult run() {
    SimResult result;
    std::uint64_t cycle = 0;
    while (!finished()) {
      ++cycle;
      if (cycle > cycle_limit_) {
        throw std::runtime_error("simulation exceeded cycle limit");
      }
      rop_phase(cycle, result);
      dispatch_phase(cycle);
      if (policy_.kind == PolicyKind::hw_atomred) red_phase(cycle);
      issue_phase(cycle);
    }
    metrics_.total_cycles = cycle;
    metrics_.atomic_requests_to_l2 = rop_ops_;
    metrics_.energy_proxy =
        energy_alpha_interconnect *
            static_cast<double>(metrics_.interconnect_packets) +
        energy_beta_compute *
            static_cast<double>(rop_ops_ + metrics_.core_fp_adds);
    result.metrics = metrics_;
    return result;
  }

 private:
  void place_warps() {
    const int total_subcores = cfg_.num_sms * cfg_.subcores_per_sm;
    subcores_.reserve(total_subcores);
    for (int i = 0; i < total_subcores; ++i) {
      subcores_.emplace_back(cfg_.red_unit_latency_per_add,
                             cfg_.red_pipe_depth);
      subcores_.back().sm = i / cfg_.subcores_per_sm;
      subcores_.back().subcore = i % cfg_.subcores_per_sm;
    }
    lsu_.assign(cfg_.num_sms, LsuQueue{cfg_.lsu_queue_depth, 0, {}});

    for (const auto& rec : trace_.records) {
      int slot;
      if (const auto it = trace_.placement.find(rec.warp_id);
          it != trace_.placement.end()) {
        const auto& p = it->second;
        if (p.sm < 0 || p.sm >= cfg_.num_sms || p.subcore < 0 ||
            p.subcore >= cfg_.subcores_per_sm) {
          throw std::invalid_argument(
              "trace placement does not fit machine config");
        }
        slot = p.sm * cfg_.subcores_per_sm + p.subcore;
      } else {
        slot = static_cast<int>(rec.warp_id % total_subcores);
        if (slot < 0) slot += total_subcores;
      }
      subcores_[slot].records.push_back(&rec);
    }
    for (int i = 0; i < total_subcores; ++i) {
      if (subcores_[i].had_work()) working_.push_back(i);
    }
  }

  bool finished() const {
    for (const int i : working_) {
      const auto& sc = subcores_[i];
      if (!issue_done(sc) || !sc.red.idle() || sc.red_latch) return false;
    }
    for (const auto& q : lsu_) {
      if (!q.q.empty()) return false;
    }
    return in_flight_.empty();
  }

  bool issue_done(const SubcoreState& sc) const {
    if (sc.next_record < sc.records.size()) return false;
    if (policy_.kind == PolicyKind::hw_atomred) {
      return (!sc.txns_valid || sc.next_txn >= sc.txns.size()) &&
             sc.next_unbundle >= sc.unbundle.size();
    }
    return !sc.current_valid || (sc.non_atomic_left == 0 &&
                                 sc.next_request >= sc.current.requests.size());
  }

  void rop_phase(std::uint64_t cycle, SimResult& result) {
    // Fractional throughput carries over; unused whole units do not bank.
    const double capacity =
        static_cast<double>(cfg_.rop_units) * cfg_.rop_throughput +
        rop_carry_;
    auto budget = static_cast<std::uint64_t>(capacity);
    rop_carry_ = capacity - static_cast<double>(budget);
    while (budget > 0 && !in_flight_.empty() &&
           in_flight_.front().ready_cycle <= cycle) {
      const auto& req = in_flight_.front().req;
      result.applied_sums[req.addr] += req.value;
      ++rop_ops_;
      --budget;
      if (log_) {
        *log_ << "c=" << cycle << " ev=rop prim=" << req.addr.primitive
              << " param=" << req.addr.param
              << " val=" << csv::format_double(req.value) << "\n";
      }
      in_flight_.pop_front();
    }
  }

  void dispatch_phase(std::uint64_t cycle) {
    int budget = cfg_.interconnect_bandwidth;
    // Round-robin over the SM queues, rotating the starting SM each cycle.
    bool progress = true;
    while (budget > 0 && progress) {
      progress = false;
      for (int k = 0; k < cfg_.num_sms && budget > 0; ++k) {
        const int sm =
            static_cast<int>((cycle + k) % static_cast<std::uint64_t>(
                                               cfg_.num_sms));
        auto& q = lsu_[sm];
        if (q.q.empty()) continue;
        in_flight_.push_back(
            {q.q.front(),
             cycle + static_cast<std::uint64_t>(cfg_.interconnect_latency)});
        q.q.pop_front();
        ++metrics_.interconnect_packets;
        --budget;
        progress = true;
        if (log_) {
          *log_ << "c=" << cycle << " ev=dispatch sm=" << sm << "\n";
        }
      }
    }
  }

  void red_phase(std::uint64_t cycle) {
    for (const int i : working_) {
      auto& sc = subcores_[i];
      if (!sc.red_latch) {
        const auto before = sc.red.adds_performed();
        if (auto done = sc.red.step()) sc.red_latch = std::move(done);
        metrics_.core_fp_adds += sc.red.adds_performed() - before;
      }
      // Finished folds are forwarded to the LSU queue as soon as it has room.
      if (sc.red_latch && lsu_[sc.sm].try_push(*sc.red_latch)) {
        if (log_) {
          *log_ << "c=" << cycle << " ev=red_done sm=" << sc.sm
                << " sub=" << sc.subcore << "\n";
        }
        sc.red_latch.reset();
      }
    }
  }

  void expand_policy(SubcoreState& sc) {
    const WarpRecord& rec = *sc.records[sc.next_record++];
    sc.current = reducers::apply_policy(rec, policy_);
    for (auto& req : sc.current.requests) {
      req.source.sm = sc.sm;
      req.source.subcore = sc.subcore;
    }
    sc.current_valid = true;
    sc.next_request = 0;
    sc.non_atomic_left =
        sc.current.core_instructions - sc.current.requests.size();
    metrics_.core_instructions += sc.current.core_instructions;
    metrics_.core_fp_adds += sc.current.core_fp_adds;
  }

  void expand_txns(SubcoreState& sc) {
    const WarpRecord& rec = *sc.records[sc.next_record++];
    sc.txns = coalesce_atomred(rec);
    for (auto& txn : sc.txns) {
      txn.origin.sm = sc.sm;
      txn.origin.subcore = sc.subcore;
    }
    sc.txns_valid = true;
    sc.next_txn = 0;
  }

  // Core-side policies: spend the record's instruction budget at issue
  // width; atomic issues push into the SM queue and block on a full one.
  void issue_core(SubcoreState& sc, int& budget, bool& issued,
                  bool& blocked) {
    auto& q = lsu_[sc.sm];
    while (budget > 0) {
      if (!sc.current_valid ||
          (sc.non_atomic_left == 0 &&
           sc.next_request >= sc.current.requests.size())) {
        if (sc.next_record >= sc.records.size()) return;
        expand_policy(sc);
        continue;
      }
      if (sc.non_atomic_left > 0) {
        const auto spend =
            std::min<std::uint64_t>(budget, sc.non_atomic_left);
        sc.non_atomic_left -= spend;
        budget -= static_cast<int>(spend);
        issued = true;
        continue;
      }
      if (!q.try_push(sc.current.requests[sc.next_request])) {
        blocked = true;
        return;
      }
      ++sc.next_request;
      --budget;
      issued = true;
    }
  }

  // hw_atomred: route transactions, unbundling direct ones into per-lane
  // pushes at issue width (so an uncontended run matches the native path
  // cycle for cycle).
  void issue_hw(SubcoreState& sc, int& budget, bool& issued, bool& blocked,
                std::uint64_t cycle) {
    auto& q = lsu_[sc.sm];
    while (budget > 0) {
      if (sc.next_unbundle < sc.unbundle.size()) {
        q.push_reserved(sc.unbundle[sc.next_unbundle++]);
        ++metrics_.core_instructions;
        --budget;
        issued = true;
        continue;
      }
      if (!sc.txns_valid || sc.next_txn >= sc.txns.size()) {
        if (sc.next_record >= sc.records.size()) return;
        expand_txns(sc);
        continue;
      }
      auto& txn = sc.txns[sc.next_txn];
      const Route route =
          contention_route(txn, q.free_slots(), sc.red.pipe_free_slots());
      if (route == Route::lsu_direct) {
        const int burst = simt::popc(txn.lane_mask);
        if (!q.unbounded()) q.reserve(burst);
        sc.unbundle.clear();
        sc.next_unbundle = 0;
        simt::LaneMask members = txn.lane_mask;
        std::size_t v = 0;
        while (members != 0) {
          members &= members - 1;
          sc.unbundle.push_back({txn.addr, txn.values[v++], txn.origin});
        }
        ++sc.next_txn;
        if (log_) {
          *log_ << "c=" << cycle << " ev=route_direct sm=" << sc.sm
                << " sub=" << sc.subcore << "\n";
        }
        continue;
      }
      if (route == Route::subcore_reduce) {
        sc.red.enqueue(std::move(txn));
        ++sc.next_txn;
        ++metrics_.core_instructions;
        --budget;
        issued = true;
        if (log_) {
          *log_ << "c=" << cycle << " ev=route_reduce sm=" << sc.sm
                << " sub=" << sc.subcore << "\n";
        }
        continue;
      }
      blocked = true;
      if (log_) {
        *log_ << "c=" << cycle << " ev=route_stall sm=" << sc.sm
              << " sub=" << sc.subcore << "\n";
      }
      return;
    }
  }

  void issue_phase(std::uint64_t cycle) {
    for (const int i : working_) {
      auto& sc = subcores_[i];
      if (issue_done(sc)) {
        // Issue complete; the warp waits for its traffic to drain.
        ++metrics_.stalls_other;
        continue;
      }
      int budget = cfg_.warp_issue_width;
      bool issued = false;
      bool blocked = false;
      if (policy_.kind == PolicyKind::hw_atomred) {
        issue_hw(sc, budget, issued, blocked, cycle);
      } else {
        issue_core(sc, budget, issued, blocked);
      }
      if (!issued) {
        if (blocked) ++metrics_.stalls_lsu;
        else ++metrics_.stalls_other;
      }
    }
  }

  const Trace& trace_;
  const MachineConfig& cfg_;
  const Policy policy_;
  std::ostream* log_;

  std::vector<SubcoreState> subcores_;
  std::vector<int> working_;
  std::vector<LsuQueue> lsu_;
  std::deque<Packet> in_flight_;
  double rop_carry_ = 0.0;
  std::uint64_t rop_ops_ = 0;
  RunMetrics metrics_;

  static constexpr std::uint64_t cycle_limit_ = 1ull << 40;
};

}  // namespace

RunMetrics simulate(const Trace& trace, const MachineConfig& config,
                    const Policy& policy) {
  return Simulation(trace, config, policy, nullptr).run().metrics;
}

SimResult simulate_detailed(const Trace& trace, const MachineConfig& config,
                            const Policy& policy, std::ostream* event_log) {
  return Simulation(trace, config, policy, event_log).run();
}

std::string metrics_csv_header() {
  return "total_cycles,stalls_lsu,stalls_other,atomic_requests_to_l2,"
         "core_instructions,core_fp_adds,interconnect_packets,energy_proxy";
}

std::string metrics_csv_row(const RunMetrics& m) {
  std::ostringstream out;
  out << m.total_cycles << ',' << m.stalls_lsu << ',' << m.stalls_other << ','
      << m.atomic_requests_to_l2 << ',' << m.core_instructions << ','
      << m.core_fp_adds << ',' << m.interconnect_packets << ','
      << csv::format_double(m.energy_proxy);
  return out.str();
}

RunMetrics parse_metrics_csv_fields(
    const std::vector<std::string_view>& fields, std::size_t offset) {
  if (fields.size() < offset + 8) {
    throw std::invalid_argument("metrics row: too few fields");
  }
  RunMetrics m;
  m.total_cycles = csv::parse_int<std::uint64_t>(fields[offset + 0]);
  m.stalls_lsu = csv::parse_int<std::uint64_t>(fields[offset + 1]);
  m.stalls_other = csv::parse_int<std::uint64_t>(fields[offset + 2]);
  m.atomic_requests_to_l2 = csv::parse_int<std::uint64_t>(fields[offset + 3]);
  m.core_instructions = csv::parse_int<std::uint64_t>(fields[offset + 4]);
  m.core_fp_adds = csv::parse_int<std::uint64_t>(fields[offset + 5]);
  m.interconnect_packets = csv::parse_int<std::uint64_t>(fields[offset + 6]);
  m.energy_proxy = csv::parse_double(fields[offset + 7]);
  return m;
}

}  // namespace warpred::hwsim
