// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Each criterion pins its scenario and tolerance in code.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "warpred/experiment.hpp"
#include "warpred/hwsim.hpp"
#include "warpred/trace_io.hpp"
#include "warpred/tuner.hpp"
#include "warpred/workload.hpp"

using namespace warpred;
namespace fs = std::filesystem;
using hwsim::MachineConfig;
using reducers::Policy;
using reducers::PolicyKind;
using workload::SceneSpec;
using workload::Trace;
using workload::WarpRecord;

namespace {

int failures = 0;

void report(int criterion, const std::string& label, bool pass,
            const std::string& detail = "") {
  std::printf("%s criterion %2d: %s%s%s\n", pass ? "PASS" : "FAIL", criterion,
              label.c_str(), detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

Trace scene_trace(std::uint64_t seed, double locality, double activity,
                  int n, int width, int height,
                  double fragments_mean = 1.5) {
  SceneSpec s;
  s.num_primitives = 400;
  s.params_per_primitive = n;
  s.image_width = width;
  s.image_height = height;
  s.mean_fragment_span = 24.0;
  s.fragments_per_pixel_mean = fragments_mean;
  s.locality = locality;
  s.activity_prob = activity;
  s.seed = seed;
  return workload::generate(s);
}

// Identical per-SM streams on machines with different SM counts.
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
      out.placement[copy.warp_id] = {sm,
                                     warp_index[rec.warp_id] % subcores_per_sm};
      out.records.push_back(std::move(copy));
    }
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// --- criteria -------------------------------------------------------------

// 1000 seeded traces x all 5 policies x 3 presets: ROP-applied sums match
// the oracle bit-exactly on the quantized value grid; under 5 minutes.
void criterion_1() {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<PolicyKind> policies = {
      PolicyKind::native, PolicyKind::sw_s, PolicyKind::sw_b,
      PolicyKind::cccl, PolicyKind::hw_atomred};
  const auto presets = hwsim::preset_names();

  bool pass = true;
  std::string detail;
  std::mt19937_64 mix(20240801);
  for (int i = 0; i < 1000 && pass; ++i) {
    SceneSpec s;
    s.num_primitives = 50 + static_cast<std::int32_t>(mix() % 400);
    s.params_per_primitive = 1 + static_cast<int>(mix() % 4);
    s.image_width = 32 + 8 * static_cast<int>(mix() % 5);
    s.image_height = 16 + 4 * static_cast<int>(mix() % 5);
    s.mean_fragment_span = 8.0 + static_cast<double>(mix() % 48);
    s.fragments_per_pixel_mean = 1.0 + 0.25 * static_cast<double>(mix() % 5);
    s.locality = 0.5 + 0.5 * static_cast<double>(mix() % 101) / 100.0;
    s.activity_prob = 0.3 + 0.7 * static_cast<double>(mix() % 101) / 100.0;
    s.seed = mix();
    const Trace trace = workload::generate(s);
    const auto oracle = reducers::oracle_sum(trace);

    for (const auto& preset_name : presets) {
      const auto cfg = hwsim::preset(preset_name);
      for (const auto kind : policies) {
        const int threshold =
            reducers::policy_uses_threshold(kind)
                ? static_cast<int>(mix() % 33)
                : 0;
        const auto result =
            hwsim::simulate_detailed(trace, cfg, {kind, threshold}, nullptr);
        if (result.applied_sums != oracle) {
          pass = false;
          detail = "sum mismatch: trace " + std::to_string(i) + ", " +
                   preset_name + ", " + reducers::policy_kind_name(kind);
          break;
        }
      }
      if (!pass) break;
    }
  }
  const auto elapsed = std::chrono::duration_cast<std::chrono::seconds>(
                           std::chrono::steady_clock::now() - start)
                           .count();
  if (elapsed >= 300) {
    pass = false;
    detail = "runtime " + std::to_string(elapsed) + "s exceeds 5 min";
  }
  report(1, "sum-correctness oracle over 1000 traces x 5 policies x 3 presets",
         pass, "elapsed " + std::to_string(elapsed) + "s" +
                   (detail.empty() ? "" : ", " + detail));
}

// locality 0.99: histogram mass at one distinct location is 0.99 +/- 0.01
// over at least 10^4 records.
void criterion_2() {
  SceneSpec s;
  s.num_primitives = 4096;
  s.params_per_primitive = 2;
  s.image_width = 1024;
  s.image_height = 512;
  s.mean_fragment_span = 48.0;
  s.locality = 0.99;
  s.activity_prob = 1.0;
  s.seed = 1723;
  const Trace trace = workload::generate(s);
  const auto hist = workload::histogram_distinct_primitives(trace);
  std::uint64_t total = 0;
  for (const auto& [k, f] : hist) total += f;
  const double mass = static_cast<double>(hist.count(1) ? hist.at(1) : 0) /
                      static_cast<double>(total);
  const bool pass = trace.records.size() >= 10000 && mass >= 0.98 &&
                    mass <= 1.00;
  std::ostringstream detail;
  detail << trace.records.size() << " records, mass(1)=" << mass;
  report(2, "single-location warp fraction reproduces locality 0.99", pass,
         detail.str());
}

// Full-warp convergent traffic: SW-B(0) and hw_atomred each send exactly
// 1/32 of native's L2 requests.
void criterion_3() {
  const Trace trace = scene_trace(3301, 1.0, 1.0, 3, 64, 32);
  MachineConfig cfg = hwsim::preset("tiny");
  // Shallower than one full-warp burst, so the direct path never admits a
  // transaction and every one is reduced at the sub-core.
  cfg.lsu_queue_depth = 16;

  const auto native = hwsim::simulate(trace, cfg, {PolicyKind::native, 0});
  const auto swb = hwsim::simulate(trace, cfg, {PolicyKind::sw_b, 0});
  const auto hw = hwsim::simulate(trace, cfg, {PolicyKind::hw_atomred, 0});

  const bool pass =
      native.atomic_requests_to_l2 == 32 * swb.atomic_requests_to_l2 &&
      native.atomic_requests_to_l2 == 32 * hw.atomic_requests_to_l2;
  std::ostringstream detail;
  detail << "native=" << native.atomic_requests_to_l2
         << " sw_b=" << swb.atomic_requests_to_l2
         << " hw=" << hw.atomic_requests_to_l2;
  report(3, "full-warp reduction collapses L2 traffic exactly 32:1", pass,
         detail.str());
}

// Request counts non-decreasing in threshold for both reducers, exhaustive
// over 0..32 on 100 random records.
void criterion_4() {
  std::mt19937_64 rng(44);
  bool pass = true;
  for (int trial = 0; trial < 100 && pass; ++trial) {
    WarpRecord rec;
    rec.active = static_cast<simt::LaneMask>(rng());
    const int n = 1 + static_cast<int>(rng() % 3);
    rec.lane_grads.assign(static_cast<std::size_t>(simt::warp_size) * n, 0.0);
    const bool convergent = trial % 2 == 0;
    const auto base = static_cast<std::int32_t>(rng() % 8);
    for (int lane = 0; lane < simt::warp_size; ++lane) {
      rec.lane_primitive[lane] =
          convergent ? base : static_cast<std::int32_t>(rng() % 8);
      for (int p = 0; p < n; ++p) {
        rec.grad(lane, p) = static_cast<double>(1 + rng() % 255) / 256.0;
      }
    }
    std::size_t prev_serial = 0;
    std::size_t prev_bfly = 0;
    for (int t = 0; t <= 32; ++t) {
      const auto serial = reducers::reduce_serial(rec, t).requests.size();
      const auto bfly = reducers::reduce_bfly(rec, t).requests.size();
      if (t > 0 && (serial < prev_serial || bfly < prev_bfly)) {
        pass = false;
        break;
      }
      prev_serial = serial;
      prev_bfly = bfly;
    }
  }
  report(4, "L2 request count is non-decreasing in the balancing threshold",
         pass);
}

// Same per-SM native workload: the SM-heavy machine spends a strictly
// larger fraction of its stalls blocked on the LSU.
void criterion_5() {
  const Trace base = scene_trace(5501, 1.0, 1.0, 3, 64, 16);
  const auto big_cfg = hwsim::preset("rtx4090like");
  const auto small_cfg = hwsim::preset("rtx3060like");
  const auto big = hwsim::simulate(
      replicate_per_sm(base, big_cfg.num_sms, big_cfg.subcores_per_sm),
      big_cfg, {PolicyKind::native, 0});
  const auto small = hwsim::simulate(
      replicate_per_sm(base, small_cfg.num_sms, small_cfg.subcores_per_sm),
      small_cfg, {PolicyKind::native, 0});
  const auto fraction = [](const hwsim::RunMetrics& m) {
    return static_cast<double>(m.stalls_lsu) /
           static_cast<double>(m.stalls_lsu + m.stalls_other);
  };
  const bool pass = fraction(big) > fraction(small);
  std::ostringstream detail;
  detail << "rtx4090like=" << fraction(big) << " rtx3060like="
         << fraction(small);
  report(5, "LSU stall fraction ordering across machine presets", pass,
         detail.str());
}

// High-locality, high-contention sweep: non-monotone for both families and
// the tuner's choice dominates both endpoints.
void criterion_6() {
  SceneSpec s;
  s.num_primitives = 400;
  s.params_per_primitive = 3;
  s.image_width = 64;
  s.image_height = 32;
  s.mean_fragment_span = 24.0;
  s.fragments_per_pixel_mean = 1.0;
  s.locality = 0.97;
  s.activity_prob = 0.12;
  s.seed = 1;
  const Trace trace = workload::generate(s);

  MachineConfig cfg = hwsim::preset("tiny");
  cfg.interconnect_bandwidth = 2;
  cfg.warp_issue_width = 1;
  cfg.interconnect_latency = 5;

  bool pass = true;
  std::ostringstream detail;
  for (const auto family :
       {tuner::PolicyFamily::sw_s, tuner::PolicyFamily::sw_b}) {
    const auto report_data = tuner::tune(trace, cfg, family);
    bool rises = false;
    bool falls = false;
    for (int t = 1; t <= 32; ++t) {
      const auto prev = report_data.per_threshold_cycles.at(t - 1);
      const auto cur = report_data.per_threshold_cycles.at(t);
      if (cur > prev) rises = true;
      if (cur < prev) falls = true;
    }
    const auto chosen = report_data.per_threshold_cycles.at(report_data.chosen);
    const bool family_pass =
        rises && falls &&
        chosen <= report_data.per_threshold_cycles.at(0) &&
        chosen <= report_data.per_threshold_cycles.at(32);
    if (!family_pass) pass = false;
    detail << (family == tuner::PolicyFamily::sw_s ? "sw_s" : "sw_b") << "(t*="
           << report_data.chosen << " cyc=" << chosen << " ends="
           << report_data.per_threshold_cycles.at(0) << "/"
           << report_data.per_threshold_cycles.at(32) << ") ";
  }
  report(6, "threshold sweep is non-monotone with a dominating optimum", pass,
         detail.str());
}

// cccl-style per-parameter reduction executes more instructions and runs
// slower than the batched butterfly on convergent traces with N >= 3.
void criterion_7() {
  bool pass = true;
  std::ostringstream detail;
  for (const std::uint64_t seed : {701, 702, 703}) {
    const Trace trace = scene_trace(seed, 1.0, 1.0, 3, 64, 32);
    MachineConfig cfg = hwsim::preset("tiny");
    cfg.warp_issue_width = 1;  // makes core instruction load visible
    const auto cccl = hwsim::simulate(trace, cfg, {PolicyKind::cccl, 0});
    const auto swb = hwsim::simulate(trace, cfg, {PolicyKind::sw_b, 0});
    if (!(cccl.core_instructions > swb.core_instructions &&
          cccl.total_cycles > swb.total_cycles)) {
      pass = false;
    }
    if (seed == 701) {
      detail << "instr " << cccl.core_instructions << ">"
             << swb.core_instructions << ", cycles " << cccl.total_cycles
             << ">" << swb.total_cycles;
    }
  }
  report(7, "per-parameter reduction baseline is strictly less efficient",
         pass, detail.str());
}

// Unbounded LSU queues: the contention check always picks the direct path
// and hw_atomred equals native on every metric.
void criterion_8() {
  bool pass = true;
  for (const auto& preset_name : hwsim::preset_names()) {
    MachineConfig cfg = hwsim::preset(preset_name);
    cfg.lsu_queue_depth = 0;  // unbounded
    const Trace trace = scene_trace(801, 0.95, 0.8, 3, 64, 32);
    const auto native = hwsim::simulate(trace, cfg, {PolicyKind::native, 0});
    const auto hw = hwsim::simulate(trace, cfg, {PolicyKind::hw_atomred, 0});
    if (!(native == hw) || native.stalls_lsu != 0) pass = false;
  }
  report(8, "hw_atomred degenerates to native under unbounded LSU queues",
         pass);
}

// Identical config and seed produce byte-identical output files.
void criterion_9() {
  const fs::path base = fs::temp_directory_path() / "warpred_acceptance";
  fs::remove_all(base);
  const fs::path dir_a = base / "a";
  const fs::path dir_b = base / "b";

  experiment::ExperimentConfig cfg;
  cfg.scene.num_primitives = 300;
  cfg.scene.params_per_primitive = 2;
  cfg.scene.image_width = 32;
  cfg.scene.image_height = 16;
  cfg.scene.locality = 0.95;
  cfg.scene.activity_prob = 0.7;
  cfg.scene.seed = 909;
  cfg.machines.push_back({"tiny", std::nullopt});
  cfg.policies = {PolicyKind::native, PolicyKind::sw_s, PolicyKind::sw_b,
                  PolicyKind::cccl, PolicyKind::hw_atomred};
  cfg.threshold_sweep = true;

  cfg.output_dir = dir_a.string();
  const auto first = experiment::run_experiment(cfg);
  cfg.output_dir = dir_b.string();
  const auto second = experiment::run_experiment(cfg);

  bool pass = first.status == "complete" && second.status == "complete" &&
              first.hash == second.hash;
  std::vector<std::string> names = first.outputs;
  names.emplace_back("manifest.json");
  for (const auto& name : names) {
    if (read_file(dir_a / name) != read_file(dir_b / name)) {
      pass = false;
      report(9, "reruns produce byte-identical CSVs", false,
             "differs: " + name);
      return;
    }
  }
  report(9, "reruns produce byte-identical CSVs", pass,
         std::to_string(names.size()) + " files compared");
}

// hw_atomred cuts interconnect traffic, hence the energy proxy, on every
// high-locality trace.
void criterion_10() {
  bool pass = true;
  for (const std::uint64_t seed : {1001, 1002, 1003, 1004, 1005}) {
    for (const auto& preset_name : hwsim::preset_names()) {
      const auto cfg = hwsim::preset(preset_name);
      const Trace trace = scene_trace(seed, 0.98, 0.9, 3, 64, 32);
      const auto native = hwsim::simulate(trace, cfg, {PolicyKind::native, 0});
      const auto hw = hwsim::simulate(trace, cfg, {PolicyKind::hw_atomred, 0});
      if (!(hw.interconnect_packets < native.interconnect_packets &&
            hw.energy_proxy < native.energy_proxy)) {
        pass = false;
      }
    }
  }
  report(10, "hw_atomred reduces interconnect traffic and the energy proxy",
         pass);
}

}  // namespace

int main() {
  const auto start = std::chrono::steady_clock::now();
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  const auto elapsed = std::chrono::duration_cast<std::chrono::seconds>(
                           std::chrono::steady_clock::now() - start)
                           .count();
  std::printf("%s (%d/10 criteria, %llds)\n",
              failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED",
              10 - failures, static_cast<long long>(elapsed));
  return failures == 0 ? 0 : 1;
}
