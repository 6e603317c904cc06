#include "warpred/reducers.hpp"

#include <stdexcept>

namespace warpred::reducers {

using simt::lane_bit;
using simt::lane_in;
using simt::popc;
using simt::warp_size;
using workload::Trace;
using workload::WarpRecord;

namespace {

void check_threshold(int threshold) {
  if (threshold < min_balance_threshold ||
      threshold > max_balance_threshold) {
    throw std::invalid_argument("balance threshold out of range 0..33");
  }
}

void emit_lane_requests(const WarpRecord& rec, int lane,
                        std::vector<AtomicRequest>& out) {
  const int n = rec.params();
  for (int p = 0; p < n; ++p) {
    out.push_back({{rec.lane_primitive[lane], p},
                   rec.grad(lane, p),
                   {0, 0, rec.warp_id}});
  }
}

// Ascending-leader enumeration of the match_any groups over active lanes.
template <typename Fn>
void for_each_group(const WarpRecord& rec, Fn&& fn) {
  const auto groups = simt::match_any(
      rec.active, std::span<const std::int32_t, warp_size>(rec.lane_primitive));
  simt::LaneMask remaining = rec.active;
  while (remaining != 0) {
    const int leader = simt::leader_lane(remaining);
    const simt::LaneMask group = groups[leader];
    fn(leader, group);
    remaining &= ~group;
  }
}

// True when every one of the 32 lanes references the same known primitive;
// the butterfly calling convention requires the full warp to agree.
bool all_lanes_same_primitive(const WarpRecord& rec) {
  const std::int32_t first = rec.lane_primitive[0];
  if (first < 0) return false;
  for (int lane = 1; lane < warp_size; ++lane) {
    if (rec.lane_primitive[lane] != first) return false;
  }
  return true;
}

bool lanes_reference_multiple_primitives(const WarpRecord& rec) {
  std::int32_t seen = -1;
  for (int lane = 0; lane < warp_size; ++lane) {
    const std::int32_t id = rec.lane_primitive[lane];
    if (id < 0) continue;
    if (seen < 0) seen = id;
    else if (id != seen) return true;
  }
  return false;
}

// Butterfly fold of one param across the full warp, in tree order
// (offsets 16, 8, 4, 2, 1); the result lands in lane 0.
double butterfly_fold(const WarpRecord& rec, int param) {
  std::array<double, warp_size> vals;
  for (int lane = 0; lane < warp_size; ++lane) vals[lane] = rec.grad(lane, param);
  for (int offset = 16; offset >= 1; offset /= 2) {
    const auto shifted =
        simt::shuffle_down(std::span<const double, warp_size>(vals), offset);
    for (int lane = 0; lane < warp_size; ++lane) vals[lane] += shifted[lane];
  }
  return vals[0];
}

}  // namespace

PolicyOutput native_atomics(const WarpRecord& record) {
  PolicyOutput out;
  const auto& c = default_costs;
  for (int lane = 0; lane < warp_size; ++lane) {
    if (!lane_in(record.active, lane)) continue;
    emit_lane_requests(record, lane, out.requests);
  }
  out.core_instructions = c.atomic_issue * out.requests.size();
  return out;
}

PolicyOutput reduce_serial(const WarpRecord& record, int balance_threshold) {
  check_threshold(balance_threshold);
  PolicyOutput out;
  const auto& c = default_costs;
  const int n = record.params();

  for_each_group(record, [&](int leader, simt::LaneMask group) {
    const int group_count = popc(group);
    out.core_instructions += c.match_any + c.popc + c.branch;
    if (group_count >= balance_threshold) {
      out.core_instructions += c.ffs;  // leader determination
      std::vector<double> sums(n);
      for (int p = 0; p < n; ++p) sums[p] = record.grad(leader, p);
      simt::LaneMask fetch = group & ~lane_bit(leader);
      while (fetch != 0) {
        const int src = simt::leader_lane(fetch);
        fetch &= ~lane_bit(src);
        for (int p = 0; p < n; ++p) sums[p] += record.grad(src, p);
        out.core_instructions +=
            c.ffs + c.branch + c.shuffle_add * static_cast<std::uint64_t>(n);
        out.core_fp_adds += static_cast<std::uint64_t>(n);
      }
      for (int p = 0; p < n; ++p) {
        out.requests.push_back({{record.lane_primitive[leader], p},
                                sums[p],
                                {0, 0, record.warp_id}});
      }
      out.core_instructions += c.atomic_issue * static_cast<std::uint64_t>(n);
    } else {
      simt::LaneMask members = group;
      while (members != 0) {
        const int lane = simt::leader_lane(members);
        members &= ~lane_bit(lane);
        emit_lane_requests(record, lane, out.requests);
      }
      out.core_instructions += c.atomic_issue *
                               static_cast<std::uint64_t>(group_count) *
                               static_cast<std::uint64_t>(n);
    }
  });
  return out;
}

PolicyOutput reduce_bfly(const WarpRecord& record, int balance_threshold,
                         bool diagnose_divergence) {
  check_threshold(balance_threshold);
  const bool all_same = all_lanes_same_primitive(record);
  if (diagnose_divergence && !all_same &&
      lanes_reference_multiple_primitives(record)) {
    throw std::invalid_argument(
        "reduce_bfly: record lanes reference more than one primitive");
  }

  PolicyOutput out;
  const auto& c = default_costs;
  const int n = record.params();
  const int active_count = popc(record.active);
  out.core_instructions = c.match_any + c.ballot + c.popc + c.branch;

  // A warp iteration with no participating lanes issues no atomic traffic
  // on either path.
  if (all_same && active_count > 0 && active_count >= balance_threshold) {
    for (int p = 0; p < n; ++p) {
      out.requests.push_back({{record.lane_primitive[0], p},
                              butterfly_fold(record, p),
                              {0, 0, record.warp_id}});
    }
    out.core_instructions +=
        c.shuffle_add * 5 * static_cast<std::uint64_t>(n) +
        c.atomic_issue * static_cast<std::uint64_t>(n);
    out.core_fp_adds += static_cast<std::uint64_t>(warp_size) * 5 *
                        static_cast<std::uint64_t>(n);
  } else {
    for (int lane = 0; lane < warp_size; ++lane) {
      if (!lane_in(record.active, lane)) continue;
      emit_lane_requests(record, lane, out.requests);
    }
    out.core_instructions += c.atomic_issue * out.requests.size();
  }
  return out;
}

PolicyOutput cccl_style(const WarpRecord& record) {
  PolicyOutput out;
  const auto& c = default_costs;
  const int n = record.params();
  const bool all_same = all_lanes_same_primitive(record);
  const int active_count = popc(record.active);

  for (int p = 0; p < n; ++p) {
    // The eligibility check is repeated for every param: this is the
    // modeled inefficiency of per-parameter reduction calls.
    out.core_instructions += c.match_any + c.ballot + c.popc + c.branch;
    if (all_same && active_count > 0) {
      out.requests.push_back({{record.lane_primitive[0], p},
                              butterfly_fold(record, p),
                              {0, 0, record.warp_id}});
      out.core_instructions += c.shuffle_add * 5 + c.atomic_issue;
      out.core_fp_adds += static_cast<std::uint64_t>(warp_size) * 5;
    } else {
      for (int lane = 0; lane < warp_size; ++lane) {
        if (!lane_in(record.active, lane)) continue;
        out.requests.push_back({{record.lane_primitive[lane], p},
                                record.grad(lane, p),
                                {0, 0, record.warp_id}});
      }
      out.core_instructions +=
          c.atomic_issue * static_cast<std::uint64_t>(active_count);
    }
  }
  return out;
}

std::map<Address, double> oracle_sum(const Trace& trace) {
  std::map<Address, double> sums;
  const int n = trace.scene.params_per_primitive;
  for (const auto& rec : trace.records) {
    for (int lane = 0; lane < warp_size; ++lane) {
      if (!lane_in(rec.active, lane)) continue;
      for (int p = 0; p < n; ++p) {
        sums[{rec.lane_primitive[lane], p}] += rec.grad(lane, p);
      }
    }
  }
  return sums;
}

PolicyOutput apply_policy(const WarpRecord& record, const Policy& policy) {
  switch (policy.kind) {
    case PolicyKind::native:
      return native_atomics(record);
    case PolicyKind::sw_s:
      return reduce_serial(record, policy.threshold);
    case PolicyKind::sw_b:
      return reduce_bfly(record, policy.threshold);
    case PolicyKind::cccl:
      return cccl_style(record);
    case PolicyKind::hw_atomred:
      break;
  }
  throw std::invalid_argument(
      "apply_policy: hw_atomred has no per-record core policy");
}

bool policy_uses_threshold(PolicyKind kind) {
  return kind == PolicyKind::sw_s || kind == PolicyKind::sw_b;
}

std::string policy_kind_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::native: return "native";
    case PolicyKind::sw_s: return "sw_s";
    case PolicyKind::sw_b: return "sw_b";
    case PolicyKind::cccl: return "cccl";
    case PolicyKind::hw_atomred: return "hw_atomred";
  }
  return "unknown";
}

PolicyKind parse_policy_kind(const std::string& name) {
  if (name == "native") return PolicyKind::native;
  if (name == "sw_s") return PolicyKind::sw_s;
  if (name == "sw_b") return PolicyKind::sw_b;
  if (name == "cccl") return PolicyKind::cccl;
  if (name == "hw_atomred") return PolicyKind::hw_atomred;
  throw std::invalid_argument("unknown policy: " + name);
}

}  // namespace warpred::reducers
