#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <random>
#include <set>
#include <sstream>

#include "warpred/csv.hpp"
#include "warpred/hwsim.hpp"

using namespace warpred;
using hwsim::MachineConfig;
using hwsim::ReduceTransaction;
using hwsim::Route;
using reducers::Address;
using reducers::Policy;
using reducers::PolicyKind;
using workload::SceneSpec;
using workload::Trace;
using workload::WarpRecord;

namespace {

WarpRecord make_record(simt::LaneMask active, std::int32_t prim, int n) {
  WarpRecord rec;
  rec.active = active;
  rec.lane_primitive.fill(prim);
  rec.lane_grads.assign(static_cast<std::size_t>(simt::warp_size) * n, 0.0);
  return rec;
}

Trace busy_trace(std::uint64_t seed, double locality = 0.95,
                 double activity = 0.8, int n = 3) {
  SceneSpec s;
  s.num_primitives = 500;
  s.params_per_primitive = n;
  s.image_width = 64;
  s.image_height = 32;
  s.mean_fragment_span = 24.0;
  s.fragments_per_pixel_mean = 1.5;
  s.locality = locality;
  s.activity_prob = activity;
  s.seed = seed;
  return workload::generate(s);
}

// Same per-SM workload on every SM: copy the base records once per SM with
// pinned placements so machines with different SM counts see identical
// per-SM streams.
Trace replicate_per_sm(const Trace& base, int num_sms, int subcores_per_sm) {
  Trace out;
  out.scene = base.scene;
  std::set<std::int32_t> warp_ids;
  for (const auto& rec : base.records) warp_ids.insert(rec.warp_id);
  std::map<std::int32_t, int> warp_index;
  for (const auto id : warp_ids) {
    const int idx = static_cast<int>(warp_index.size());
    warp_index[id] = idx;
  }
  const auto base_warps = static_cast<std::int32_t>(warp_ids.size());
  for (int sm = 0; sm < num_sms; ++sm) {
    for (const auto& rec : base.records) {
      WarpRecord copy = rec;
      copy.warp_id = sm * base_warps + warp_index[rec.warp_id];
      out.placement[copy.warp_id] = {
          sm, warp_index[rec.warp_id] % subcores_per_sm};
      out.records.push_back(std::move(copy));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("presets carry the published counts") {
  const auto big = hwsim::preset("rtx4090like");
  CHECK(big.num_sms == 144);
  CHECK(big.rop_units == 176);
  const auto small = hwsim::preset("rtx3060like");
  CHECK(small.num_sms == 28);
  CHECK(small.rop_units == 48);
  CHECK(big.subcores_per_sm == 4);
  CHECK(small.subcores_per_sm == 4);
  // Everything except the published counts is shared.
  CHECK(big.lsu_queue_depth == small.lsu_queue_depth);
  CHECK(big.interconnect_latency == small.interconnect_latency);
  CHECK(hwsim::preset_names().size() == 3);
  CHECK_THROWS_AS(hwsim::preset("bogus"), std::invalid_argument);
}

TEST_CASE("coalesce: one full-warp group") {
  std::mt19937 rng(5);
  WarpRecord rec = make_record(simt::full_mask, 3, 3);
  for (int lane = 0; lane < simt::warp_size; ++lane)
    for (int p = 0; p < 3; ++p)
      rec.grad(lane, p) = static_cast<double>(1 + rng() % 255) / 256.0;
  const auto txns = hwsim::coalesce_atomred(rec);
  REQUIRE(txns.size() == 3);
  for (int p = 0; p < 3; ++p) {
    CHECK(txns[p].addr == Address{3, p});
    CHECK(txns[p].lane_mask == simt::full_mask);
    CHECK(txns[p].values.size() == 32);
  }
}

TEST_CASE("coalesce: all distinct") {
  WarpRecord rec = make_record(0b11u, 0, 1);
  rec.lane_primitive[0] = 4;
  rec.lane_primitive[1] = 9;
  rec.grad(0, 0) = 0.5;
  rec.grad(1, 0) = 0.25;
  const auto txns = hwsim::coalesce_atomred(rec);
  REQUIRE(txns.size() == 2);
  CHECK(txns[0].addr == Address{4, 0});
  CHECK(txns[0].values == std::vector<double>{0.5});
  CHECK(txns[1].addr == Address{9, 0});
  CHECK(txns[1].values == std::vector<double>{0.25});
}

TEST_CASE("coalesce matches a brute-force grouping oracle") {
  std::mt19937 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    WarpRecord rec = make_record(static_cast<simt::LaneMask>(rng()), 0, 2);
    for (int lane = 0; lane < simt::warp_size; ++lane) {
      rec.lane_primitive[lane] = static_cast<std::int32_t>(rng() % 4);
      for (int p = 0; p < 2; ++p)
        rec.grad(lane, p) = static_cast<double>(lane * 2 + p);
    }
    const auto txns = hwsim::coalesce_atomred(rec);

    // Brute force: group (lane -> address) pairs.
    std::map<Address, std::vector<double>> expect;
    for (int lane = 0; lane < simt::warp_size; ++lane) {
      if (!simt::lane_in(rec.active, lane)) continue;
      for (int p = 0; p < 2; ++p) {
        expect[{rec.lane_primitive[lane], p}].push_back(rec.grad(lane, p));
      }
    }
    CHECK(txns.size() == expect.size());
    std::map<Address, std::vector<double>> got;
    for (const auto& txn : txns) {
      CHECK(simt::popc(txn.lane_mask) ==
            static_cast<int>(txn.values.size()));
      got[txn.addr] = txn.values;
    }
    CHECK(got == expect);
  }
}

TEST_CASE("contention_route") {
  ReduceTransaction txn;
  txn.lane_mask = 0b1111u;  // burst of 4
  txn.values = {1, 2, 3, 4};
  // Empty queue: room for the burst.
  CHECK(hwsim::contention_route(txn, 32, 4) == Route::lsu_direct);
  // Unbounded queue.
  CHECK(hwsim::contention_route(txn, -1, 0) == Route::lsu_direct);
  // Full queue, free reduction pipe.
  CHECK(hwsim::contention_route(txn, 0, 4) == Route::subcore_reduce);
  // Not enough room for the whole burst counts as contended.
  CHECK(hwsim::contention_route(txn, 3, 4) == Route::subcore_reduce);
  // Both full.
  CHECK(hwsim::contention_route(txn, 0, 0) == Route::stall);
}

TEST_CASE("reduction unit consumes one value per latency cycle") {
  hwsim::ReductionUnit unit(1, 4);
  ReduceTransaction txn;
  txn.addr = {7, 0};
  txn.lane_mask = simt::full_mask;
  for (int i = 0; i < 32; ++i) txn.values.push_back(1.0 / 256.0 * (i + 1));
  unit.enqueue(std::move(txn));

  int emitted_at = 0;
  std::optional<reducers::AtomicRequest> result;
  for (int cycle = 1; cycle <= 40 && !result; ++cycle) {
    result = unit.step();
    if (result) emitted_at = cycle;
  }
  REQUIRE(result.has_value());
  CHECK(emitted_at == 32);  // 32 values, latency 1
  double fold = 0.0;
  for (int i = 0; i < 32; ++i) fold += 1.0 / 256.0 * (i + 1);
  CHECK(result->value == fold);
  CHECK(result->addr == Address{7, 0});
  CHECK(unit.adds_performed() == 32);
  CHECK(unit.idle());
}

TEST_CASE("reduction unit: single value, higher latency") {
  hwsim::ReductionUnit unit(1, 4);
  ReduceTransaction txn;
  txn.lane_mask = 0b1u;
  txn.values = {0.5};
  unit.enqueue(txn);
  auto r = unit.step();
  REQUIRE(r.has_value());  // emitted after 1 cycle
  CHECK(r->value == 0.5);

  hwsim::ReductionUnit slow(3, 4);
  slow.enqueue(txn);
  CHECK(!slow.step().has_value());
  CHECK(!slow.step().has_value());
  CHECK(slow.step().has_value());  // 3 cycles per add
}

TEST_CASE("reduction unit serializes queued transactions") {
  hwsim::ReductionUnit unit(1, 4);
  ReduceTransaction a;
  a.lane_mask = 0b11u;
  a.values = {1.0, 2.0};
  ReduceTransaction b = a;
  b.values = {3.0, 4.0};
  unit.enqueue(a);
  unit.enqueue(b);
  int results = 0;
  for (int cycle = 1; cycle <= 4; ++cycle) {
    if (auto r = unit.step()) {
      ++results;
      CHECK(r->value == (results == 1 ? 3.0 : 7.0));
      // Strictly serial: first fold completes at cycle 2, second at 4.
      CHECK(cycle == results * 2);
    }
  }
  CHECK(results == 2);
}

TEST_CASE("single request walks the pipeline in issue+latency+1 cycles") {
  Trace trace;
  trace.scene.params_per_primitive = 1;
  WarpRecord rec = make_record(0b1u, 0, 1);
  rec.grad(0, 0) = 0.5;
  trace.records.push_back(rec);

  MachineConfig cfg = hwsim::preset("tiny");
  cfg.interconnect_latency = 5;
  const auto metrics = hwsim::simulate(trace, cfg, {PolicyKind::native, 0});
  CHECK(metrics.total_cycles == 1 + 5 + 1);
  CHECK(metrics.atomic_requests_to_l2 == 1);
  CHECK(metrics.interconnect_packets == 1);
  CHECK(metrics.core_instructions == 1);
}

TEST_CASE("full-warp reduction collapses traffic 32:1") {
  Trace trace = busy_trace(42, 1.0, 1.0, 2);
  const auto cfg = hwsim::preset("tiny");
  const auto native = hwsim::simulate(trace, cfg, {PolicyKind::native, 0});
  const auto swb = hwsim::simulate(trace, cfg, {PolicyKind::sw_b, 0});
  CHECK(native.atomic_requests_to_l2 == 32 * swb.atomic_requests_to_l2);
}

TEST_CASE("every policy conserves the oracle sums through the machine") {
  const Trace trace = busy_trace(7, 0.9, 0.7);
  const auto oracle = reducers::oracle_sum(trace);
  for (const auto preset_name : {"tiny", "rtx3060like"}) {
    const auto cfg = hwsim::preset(preset_name);
    for (const auto kind :
         {PolicyKind::native, PolicyKind::sw_s, PolicyKind::sw_b,
          PolicyKind::cccl, PolicyKind::hw_atomred}) {
      const auto result =
          hwsim::simulate_detailed(trace, cfg, {kind, 16}, nullptr);
      CHECK(result.applied_sums == oracle);
    }
  }
}

TEST_CASE("hw_atomred never sends more requests than native") {
  for (const std::uint64_t seed : {1u, 2u, 3u}) {
    const Trace trace = busy_trace(seed, 0.9, 0.6);
    const auto cfg = hwsim::preset("tiny");
    const auto native = hwsim::simulate(trace, cfg, {PolicyKind::native, 0});
    const auto hw = hwsim::simulate(trace, cfg, {PolicyKind::hw_atomred, 0});
    CHECK(hw.atomic_requests_to_l2 <= native.atomic_requests_to_l2);
    CHECK(hw.interconnect_packets <= native.interconnect_packets);
  }
}

TEST_CASE("unbounded queues degrade hw_atomred to the native path") {
  const Trace trace = busy_trace(9, 0.95, 0.8);
  for (const auto preset_name : {"tiny", "rtx3060like", "rtx4090like"}) {
    MachineConfig cfg = hwsim::preset(preset_name);
    cfg.lsu_queue_depth = 0;  // unbounded
    const auto native = hwsim::simulate(trace, cfg, {PolicyKind::native, 0});
    const auto hw = hwsim::simulate(trace, cfg, {PolicyKind::hw_atomred, 0});
    CHECK(native == hw);
    CHECK(native.stalls_lsu == 0);
    CHECK(hw.stalls_lsu == 0);
    CHECK(hw.core_fp_adds == 0);
  }
}

TEST_CASE("more ROP units never slow the run down") {
  const Trace trace = busy_trace(11, 0.9, 0.9);
  MachineConfig cfg = hwsim::preset("tiny");
  cfg.interconnect_bandwidth = 4;
  std::uint64_t prev = 0;
  bool first = true;
  for (const int rops : {1, 2, 4, 8, 16}) {
    cfg.rop_units = rops;
    const auto metrics = hwsim::simulate(trace, cfg, {PolicyKind::native, 0});
    if (!first) CHECK(metrics.total_cycles <= prev);
    prev = metrics.total_cycles;
    first = false;
  }
}

TEST_CASE("simulation is deterministic") {
  const Trace trace = busy_trace(123, 0.92, 0.7);
  const auto cfg = hwsim::preset("rtx3060like");
  for (const auto kind : {PolicyKind::native, PolicyKind::sw_s,
                          PolicyKind::hw_atomred}) {
    const auto a = hwsim::simulate_detailed(trace, cfg, {kind, 12}, nullptr);
    const auto b = hwsim::simulate_detailed(trace, cfg, {kind, 12}, nullptr);
    CHECK(a.metrics == b.metrics);
    CHECK(a.applied_sums == b.applied_sums);
  }
}

TEST_CASE("per-SM ratio ordering: the bigger machine stalls harder") {
  const Trace base = busy_trace(77, 1.0, 1.0);
  const auto big_cfg = hwsim::preset("rtx4090like");
  const auto small_cfg = hwsim::preset("rtx3060like");
  const Trace big_trace =
      replicate_per_sm(base, big_cfg.num_sms, big_cfg.subcores_per_sm);
  const Trace small_trace =
      replicate_per_sm(base, small_cfg.num_sms, small_cfg.subcores_per_sm);

  const auto big =
      hwsim::simulate(big_trace, big_cfg, {PolicyKind::native, 0});
  const auto small =
      hwsim::simulate(small_trace, small_cfg, {PolicyKind::native, 0});
  const auto fraction = [](const hwsim::RunMetrics& m) {
    return static_cast<double>(m.stalls_lsu) /
           static_cast<double>(m.stalls_lsu + m.stalls_other);
  };
  CHECK(fraction(big) > fraction(small));
}

TEST_CASE("stall counters stay within the per-warp bound") {
  const Trace trace = busy_trace(31, 0.9, 0.8);
  std::set<std::int32_t> warps;
  for (const auto& rec : trace.records) warps.insert(rec.warp_id);
  const auto cfg = hwsim::preset("tiny");
  for (const auto kind : {PolicyKind::native, PolicyKind::hw_atomred}) {
    const auto m = hwsim::simulate(trace, cfg, {kind, 0});
    CHECK(m.stalls_lsu + m.stalls_other <= m.total_cycles * warps.size());
  }
}

TEST_CASE("ROP pool is work-conserving under backlog") {
  // Enough same-cycle arrivals that the pool must run at full capacity
  // every cycle until the backlog clears.
  Trace trace;
  trace.scene.params_per_primitive = 4;
  for (int w = 0; w < 4; ++w) {
    auto rec = make_record(simt::full_mask, w, 4);
    rec.warp_id = w;
    trace.records.push_back(rec);
  }
  MachineConfig cfg = hwsim::preset("tiny");
  cfg.rop_units = 2;
  cfg.interconnect_bandwidth = 64;
  cfg.warp_issue_width = 64;

  std::ostringstream log;
  hwsim::simulate_detailed(trace, cfg, {PolicyKind::native, 0}, &log);
  std::map<std::uint64_t, int> rop_per_cycle;
  std::istringstream lines(log.str());
  std::string line;
  std::uint64_t applied = 0;
  while (std::getline(lines, line)) {
    if (line.find("ev=rop") == std::string::npos) continue;
    const auto cycle = std::stoull(line.substr(2, line.find(' ') - 2));
    ++rop_per_cycle[cycle];
    ++applied;
  }
  REQUIRE(applied == 4 * 32 * 4);
  // No idle cycle between the first and last service.
  const auto first = rop_per_cycle.begin()->first;
  const auto last = rop_per_cycle.rbegin()->first;
  std::uint64_t remaining = applied;
  for (std::uint64_t c = first; c <= last; ++c) {
    REQUIRE(rop_per_cycle.count(c) == 1);
    const int served = rop_per_cycle.at(c);
    CHECK(served == static_cast<int>(std::min<std::uint64_t>(2, remaining)));
    remaining -= served;
  }
}

TEST_CASE("energy proxy follows the declared formula") {
  const Trace trace = busy_trace(4, 0.95, 0.9);
  const auto cfg = hwsim::preset("tiny");
  const auto m = hwsim::simulate(trace, cfg, {PolicyKind::sw_s, 8});
  CHECK(m.energy_proxy ==
        hwsim::energy_alpha_interconnect *
                static_cast<double>(m.interconnect_packets) +
            hwsim::energy_beta_compute *
                static_cast<double>(m.atomic_requests_to_l2 +
                                    m.core_fp_adds));
}

TEST_CASE("counter identities hold across policies and machines") {
  for (const std::uint64_t seed : {21u, 22u, 23u}) {
    const Trace trace = busy_trace(seed, 0.9, 0.65);
    for (const auto preset_name : {"tiny", "rtx3060like"}) {
      const auto cfg = hwsim::preset(preset_name);
      for (const auto kind :
           {PolicyKind::native, PolicyKind::sw_s, PolicyKind::sw_b,
            PolicyKind::cccl, PolicyKind::hw_atomred}) {
        const auto m = hwsim::simulate(trace, cfg, {kind, 8});
        // Every request that reaches the ROPs crossed the wire once.
        CHECK(m.interconnect_packets == m.atomic_requests_to_l2);
        // Instructions include one issue per request (plus overhead).
        CHECK(m.core_instructions >= m.atomic_requests_to_l2);
        if (kind == PolicyKind::native) {
          CHECK(m.core_instructions == m.atomic_requests_to_l2);
          CHECK(m.core_fp_adds == 0);
        }
        CHECK(m.total_cycles > 0);
      }
    }
  }
}

TEST_CASE("pinned placements outside the machine are rejected") {
  Trace trace;
  trace.scene.params_per_primitive = 1;
  trace.records.push_back(make_record(0b1u, 0, 1));
  trace.placement[0] = {5, 0};  // tiny has one SM
  const auto cfg = hwsim::preset("tiny");
  CHECK_THROWS_AS(hwsim::simulate(trace, cfg, {PolicyKind::native, 0}),
                  std::invalid_argument);
}

TEST_CASE("config validation") {
  MachineConfig cfg = hwsim::preset("tiny");
  cfg.rop_units = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = hwsim::preset("tiny");
  cfg.lsu_queue_depth = 0;  // unbounded is allowed
  CHECK_NOTHROW(cfg.validate());
  cfg.lsu_queue_depth = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("event log is emitted on request") {
  Trace trace;
  trace.scene.params_per_primitive = 1;
  trace.records.push_back(make_record(0b1u, 0, 1));
  std::ostringstream log;
  hwsim::simulate_detailed(trace, hwsim::preset("tiny"),
                           {PolicyKind::native, 0}, &log);
  CHECK(log.str().find("ev=dispatch") != std::string::npos);
  CHECK(log.str().find("ev=rop") != std::string::npos);
}

TEST_CASE("metrics csv row round trip") {
  hwsim::RunMetrics m;
  m.total_cycles = 123;
  m.stalls_lsu = 4;
  m.stalls_other = 5;
  m.atomic_requests_to_l2 = 67;
  m.core_instructions = 89;
  m.core_fp_adds = 10;
  m.interconnect_packets = 67;
  m.energy_proxy = 747.0;
  const auto row = hwsim::metrics_csv_row(m);
  const auto fields = csv::split(row, ',');
  CHECK(hwsim::parse_metrics_csv_fields(fields, 0) == m);
}
