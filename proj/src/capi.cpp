#include "warpred.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>

#include "warpred/experiment.hpp"
#include "warpred/hwsim.hpp"
#include "warpred/trace_io.hpp"
#include "warpred/tuner.hpp"
#include "warpred/workload.hpp"

struct wr_trace {
  warpred::workload::Trace trace;
};

namespace {

thread_local std::string last_error = "ok";

wr_status fail(wr_status code, const std::string& message) {
  last_error = message;
  return code;
}

wr_status fail_invalid(const std::string& message) {
  return fail(WR_ERR_INVALID_ARGUMENT, message);
}

template <typename Fn>
wr_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    return fail(WR_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::ios_base::failure& e) {
    return fail(WR_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(WR_ERR_RUNTIME, e.what());
  }
}

warpred::workload::SceneSpec to_scene(const wr_scene_spec& s) {
  warpred::workload::SceneSpec scene;
  scene.num_primitives = s.num_primitives;
  scene.params_per_primitive = s.params_per_primitive;
  scene.image_width = s.image_width;
  scene.image_height = s.image_height;
  scene.mean_fragment_span = s.mean_fragment_span;
  scene.fragments_per_pixel_mean = s.fragments_per_pixel_mean;
  scene.activity_prob = s.activity_prob;
  scene.locality = s.locality;
  scene.seed = s.seed;
  scene.quantized_values = s.quantized_values != 0;
  return scene;
}

void from_scene(const warpred::workload::SceneSpec& scene, wr_scene_spec* s) {
  s->num_primitives = scene.num_primitives;
  s->params_per_primitive = scene.params_per_primitive;
  s->image_width = scene.image_width;
  s->image_height = scene.image_height;
  s->mean_fragment_span = scene.mean_fragment_span;
  s->fragments_per_pixel_mean = scene.fragments_per_pixel_mean;
  s->activity_prob = scene.activity_prob;
  s->locality = scene.locality;
  s->seed = scene.seed;
  s->quantized_values = scene.quantized_values ? 1 : 0;
}

warpred::hwsim::MachineConfig to_machine(const wr_machine_config& m) {
  warpred::hwsim::MachineConfig cfg;
  cfg.num_sms = m.num_sms;
  cfg.subcores_per_sm = m.subcores_per_sm;
  cfg.lsu_queue_depth = m.lsu_queue_depth;
  cfg.rop_units = m.rop_units;
  cfg.rop_throughput = m.rop_throughput;
  cfg.interconnect_latency = m.interconnect_latency;
  cfg.interconnect_bandwidth = m.interconnect_bandwidth;
  cfg.red_unit_latency_per_add = m.red_unit_latency_per_add;
  cfg.red_pipe_depth = m.red_pipe_depth;
  cfg.warp_issue_width = m.warp_issue_width;
  return cfg;
}

void from_metrics(const warpred::hwsim::RunMetrics& metrics,
                  wr_run_metrics* out) {
  out->total_cycles = metrics.total_cycles;
  out->stalls_lsu = metrics.stalls_lsu;
  out->stalls_other = metrics.stalls_other;
  out->atomic_requests_to_l2 = metrics.atomic_requests_to_l2;
  out->core_instructions = metrics.core_instructions;
  out->core_fp_adds = metrics.core_fp_adds;
  out->interconnect_packets = metrics.interconnect_packets;
  out->energy_proxy = metrics.energy_proxy;
}

warpred::reducers::Policy to_policy(wr_policy_kind kind, int threshold) {
  using warpred::reducers::PolicyKind;
  switch (kind) {
    case WR_POLICY_NATIVE: return {PolicyKind::native, 0};
    case WR_POLICY_SW_S: return {PolicyKind::sw_s, threshold};
    case WR_POLICY_SW_B: return {PolicyKind::sw_b, threshold};
    case WR_POLICY_CCCL: return {PolicyKind::cccl, 0};
    case WR_POLICY_HW_ATOMRED: return {PolicyKind::hw_atomred, 0};
  }
  throw std::invalid_argument("unknown policy kind");
}

void fill_histogram(const std::map<int, std::uint64_t>& hist,
                    uint64_t out_counts[33]) {
  for (int i = 0; i < 33; ++i) out_counts[i] = 0;
  for (const auto& [key, freq] : hist) {
    if (key >= 0 && key <= 32) out_counts[key] = freq;
  }
}

}  // namespace

extern "C" {

const char* wr_version(void) { return "1.0.0"; }

const char* wr_last_error(void) { return last_error.c_str(); }

void wr_scene_spec_init(wr_scene_spec* scene) {
  if (!scene) return;
  from_scene(warpred::workload::SceneSpec{}, scene);
}

wr_status wr_scene_from_config(const char* config_path, wr_scene_spec* out) {
  if (!config_path || !out) return fail_invalid("null argument");
  return guarded([&] {
    const auto cfg = warpred::experiment::load_config(config_path);
    from_scene(cfg.scene, out);
    return WR_OK;
  });
}

int wr_preset_count(void) {
  return static_cast<int>(warpred::hwsim::preset_names().size());
}

const char* wr_preset_name(int index) {
  static const auto names = warpred::hwsim::preset_names();
  if (index < 0 || index >= static_cast<int>(names.size())) return nullptr;
  return names[static_cast<std::size_t>(index)].c_str();
}

wr_status wr_machine_preset(const char* name, wr_machine_config* out) {
  if (!name || !out) return fail_invalid("null argument");
  return guarded([&] {
    const auto cfg = warpred::hwsim::preset(name);
    out->num_sms = cfg.num_sms;
    out->subcores_per_sm = cfg.subcores_per_sm;
    out->lsu_queue_depth = cfg.lsu_queue_depth;
    out->rop_units = cfg.rop_units;
    out->rop_throughput = cfg.rop_throughput;
    out->interconnect_latency = cfg.interconnect_latency;
    out->interconnect_bandwidth = cfg.interconnect_bandwidth;
    out->red_unit_latency_per_add = cfg.red_unit_latency_per_add;
    out->red_pipe_depth = cfg.red_pipe_depth;
    out->warp_issue_width = cfg.warp_issue_width;
    return WR_OK;
  });
}

wr_status wr_trace_generate(const wr_scene_spec* scene, wr_trace** out) {
  if (!scene || !out) return fail_invalid("null argument");
  return guarded([&] {
    auto trace = std::make_unique<wr_trace>();
    trace->trace = warpred::workload::generate(to_scene(*scene));
    *out = trace.release();
    return WR_OK;
  });
}

void wr_trace_free(wr_trace* trace) { delete trace; }

int64_t wr_trace_record_count(const wr_trace* trace) {
  return trace ? static_cast<int64_t>(trace->trace.records.size()) : -1;
}

wr_status wr_trace_save(const wr_trace* trace, const char* path, int binary) {
  if (!trace || !path) return fail_invalid("null argument");
  return guarded([&] {
    if (binary) warpred::trace_io::save_trace_binary(trace->trace, path);
    else warpred::trace_io::save_trace_csv(trace->trace, path);
    return WR_OK;
  });
}

wr_status wr_trace_load(const char* path, int binary, wr_trace** out) {
  if (!path || !out) return fail_invalid("null argument");
  return guarded([&] {
    auto trace = std::make_unique<wr_trace>();
    trace->trace = binary ? warpred::trace_io::load_trace_binary(path)
                          : warpred::trace_io::load_trace_csv(path);
    *out = trace.release();
    return WR_OK;
  });
}

wr_status wr_trace_histogram_distinct(const wr_trace* trace,
                                      uint64_t out_counts[33]) {
  if (!trace || !out_counts) return fail_invalid("null argument");
  return guarded([&] {
    fill_histogram(
        warpred::workload::histogram_distinct_primitives(trace->trace),
        out_counts);
    return WR_OK;
  });
}

wr_status wr_trace_histogram_active(const wr_trace* trace,
                                    uint64_t out_counts[33]) {
  if (!trace || !out_counts) return fail_invalid("null argument");
  return guarded([&] {
    fill_histogram(warpred::workload::histogram_active_lanes(trace->trace),
                   out_counts);
    return WR_OK;
  });
}

wr_status wr_trace_write_histograms(const wr_trace* trace, const char* dir) {
  if (!trace || !dir) return fail_invalid("null argument");
  return guarded([&] {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
      std::ofstream out(fs::path(dir) / "histogram_distinct.csv",
                        std::ios::binary);
      if (!out) throw std::ios_base::failure("cannot write histogram csv");
      warpred::experiment::write_histogram_csv(
          warpred::workload::histogram_distinct_primitives(trace->trace),
          "distinct_count", out);
    }
    {
      std::ofstream out(fs::path(dir) / "histogram_active.csv",
                        std::ios::binary);
      if (!out) throw std::ios_base::failure("cannot write histogram csv");
      warpred::experiment::write_histogram_csv(
          warpred::workload::histogram_active_lanes(trace->trace),
          "active_lanes", out);
    }
    return WR_OK;
  });
}

wr_status wr_simulate(const wr_trace* trace, const wr_machine_config* machine,
                      wr_policy_kind policy, int threshold,
                      wr_run_metrics* out) {
  if (!trace || !machine || !out) return fail_invalid("null argument");
  return guarded([&] {
    const auto metrics = warpred::hwsim::simulate(
        trace->trace, to_machine(*machine), to_policy(policy, threshold));
    from_metrics(metrics, out);
    return WR_OK;
  });
}

wr_status wr_tune(const wr_trace* trace, const wr_machine_config* machine,
                  wr_policy_family family, int32_t iteration,
                  wr_tune_report* out) {
  if (!trace || !machine || !out) return fail_invalid("null argument");
  return guarded([&] {
    const auto fam = family == WR_FAMILY_SW_S
                         ? warpred::tuner::PolicyFamily::sw_s
                         : warpred::tuner::PolicyFamily::sw_b;
    const auto segment =
        iteration < 0 ? trace->trace
                      : warpred::tuner::extract_iteration(trace->trace,
                                                          iteration);
    const auto report =
        warpred::tuner::tune(segment, to_machine(*machine), fam);
    for (int t = 0; t <= 32; ++t) {
      out->cycles_by_threshold[t] = report.per_threshold_cycles.at(t);
    }
    out->chosen = report.chosen;
    out->profile_iteration = report.profile_iteration;
    out->reprofile_period = report.reprofile_period;
    return WR_OK;
  });
}

wr_status wr_tune_report_save_csv(const wr_tune_report* report,
                                  const char* path) {
  if (!report || !path) return fail_invalid("null argument");
  return guarded([&] {
    warpred::tuner::TuneReport r;
    for (int t = 0; t <= 32; ++t) {
      r.per_threshold_cycles[t] = report->cycles_by_threshold[t];
    }
    r.chosen = report->chosen;
    r.profile_iteration = report->profile_iteration;
    r.reprofile_period = report->reprofile_period;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::ios_base::failure(std::string("cannot write: ") + path);
    warpred::tuner::write_tune_report_csv(r, out);
    return WR_OK;
  });
}

wr_status wr_experiment_run(const char* config_path,
                            const char* output_dir_override,
                            int64_t seed_override, int emit_events) {
  if (!config_path) return fail_invalid("null argument");
  return guarded([&] {
    auto cfg = warpred::experiment::load_config(config_path);
    if (output_dir_override && *output_dir_override) {
      cfg.output_dir = output_dir_override;
    }
    if (seed_override >= 0) {
      cfg.scene.seed = static_cast<uint64_t>(seed_override);
    }
    if (emit_events) cfg.emit_events = true;
    const auto manifest = warpred::experiment::run_experiment(cfg);
    if (manifest.status != "complete") {
      return fail(WR_ERR_RUNTIME, "experiment aborted: " + manifest.error);
    }
    return WR_OK;
  });
}

}  // extern "C"
