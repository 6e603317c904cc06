// Batch front-end over the warpred C API: generate workload traces, run
// policy/config sweeps, tune balancing thresholds, and compute trace
// histograms, persisting everything as CSV.

#include <cstdint>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "warpred.h"

namespace {

int fail_stage(const char* stage) {
  std::fprintf(stderr, "error: %s: %s\n", stage, wr_last_error());
  return 1;
}

int run_gen(const std::string& config, const std::string& out,
            std::int64_t seed, bool binary) {
  wr_scene_spec scene;
  if (wr_scene_from_config(config.c_str(), &scene) != WR_OK) {
    return fail_stage("gen: load config");
  }
  if (seed >= 0) scene.seed = static_cast<std::uint64_t>(seed);
  wr_trace* trace = nullptr;
  if (wr_trace_generate(&scene, &trace) != WR_OK) {
    return fail_stage("gen: generate trace");
  }
  const wr_status rc = wr_trace_save(trace, out.c_str(), binary ? 1 : 0);
  const auto records = wr_trace_record_count(trace);
  wr_trace_free(trace);
  if (rc != WR_OK) return fail_stage("gen: save trace");
  std::printf("wrote %lld records to %s\n",
              static_cast<long long>(records), out.c_str());
  return 0;
}

int run_run(const std::string& config, const std::string& out,
            std::int64_t seed, bool emit_events) {
  if (wr_experiment_run(config.c_str(), out.empty() ? nullptr : out.c_str(),
                        seed, emit_events ? 1 : 0) != WR_OK) {
    return fail_stage("run: experiment");
  }
  std::printf("experiment complete\n");
  return 0;
}

int run_tune(const std::string& config, const std::string& machine_name,
             const std::string& family_name, int iteration,
             const std::string& out, std::int64_t seed) {
  wr_scene_spec scene;
  if (wr_scene_from_config(config.c_str(), &scene) != WR_OK) {
    return fail_stage("tune: load config");
  }
  if (seed >= 0) scene.seed = static_cast<std::uint64_t>(seed);
  wr_machine_config machine;
  if (wr_machine_preset(machine_name.c_str(), &machine) != WR_OK) {
    return fail_stage("tune: resolve machine preset");
  }
  wr_trace* trace = nullptr;
  if (wr_trace_generate(&scene, &trace) != WR_OK) {
    return fail_stage("tune: generate trace");
  }
  const wr_policy_family family =
      family_name == "sw_s" ? WR_FAMILY_SW_S : WR_FAMILY_SW_B;
  wr_tune_report report;
  const wr_status rc = wr_tune(trace, &machine, family, iteration, &report);
  wr_trace_free(trace);
  if (rc != WR_OK) return fail_stage("tune: threshold sweep");
  if (!out.empty() &&
      wr_tune_report_save_csv(&report, out.c_str()) != WR_OK) {
    return fail_stage("tune: save report");
  }
  std::printf("chosen threshold: %d (profiled iteration %d, reprofile every "
              "%d iterations)\n",
              report.chosen, report.profile_iteration,
              report.reprofile_period);
  return 0;
}

int run_analyze(const std::string& trace_path, bool binary,
                const std::string& out_dir) {
  wr_trace* trace = nullptr;
  if (wr_trace_load(trace_path.c_str(), binary ? 1 : 0, &trace) != WR_OK) {
    return fail_stage("analyze: load trace");
  }
  const wr_status rc = wr_trace_write_histograms(trace, out_dir.c_str());
  wr_trace_free(trace);
  if (rc != WR_OK) return fail_stage("analyze: write histograms");
  std::printf("histograms written to %s\n", out_dir.c_str());
  return 0;
}

int run_presets() {
  const int count = wr_preset_count();
  for (int i = 0; i < count; ++i) {
    const char* name = wr_preset_name(i);
    wr_machine_config cfg;
    if (wr_machine_preset(name, &cfg) != WR_OK) {
      return fail_stage("presets: resolve preset");
    }
    std::printf("%-12s sms=%d subcores=%d rops=%d lsu_depth=%d "
                "icnt_latency=%d icnt_bw=%d issue_width=%d\n",
                name, cfg.num_sms, cfg.subcores_per_sm, cfg.rop_units,
                cfg.lsu_queue_depth, cfg.interconnect_latency,
                cfg.interconnect_bandwidth, cfg.warp_issue_width);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"warpred: warp-level atomic reduction workload simulator"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::string trace_path;
  std::string machine = "rtx4090like";
  std::string family = "sw_b";
  std::int64_t seed = -1;
  int iteration = 0;
  bool binary = false;
  bool emit_events = false;

  auto* gen = app.add_subcommand("gen", "generate a trace from a scene spec");
  gen->add_option("--config", config, "experiment config file")->required();
  gen->add_option("--out", out, "trace output path")->required();
  gen->add_option("--seed", seed, "override the scene seed");
  gen->add_flag("--binary", binary, "write the binary trace format");

  auto* run = app.add_subcommand("run", "run an experiment matrix");
  run->add_option("--config", config, "experiment config file")->required();
  run->add_option("--out", out, "output directory (overrides config)");
  run->add_option("--seed", seed, "override the scene seed");
  run->add_flag("--emit-events", emit_events, "dump a per-cycle event log");

  auto* tune = app.add_subcommand("tune", "sweep the balancing threshold");
  tune->add_option("--config", config, "experiment config file")->required();
  tune->add_option("--machine", machine, "machine preset name");
  tune->add_option("--family", family, "sw_s or sw_b")
      ->check(CLI::IsMember({"sw_s", "sw_b"}));
  tune->add_option("--iteration", iteration,
                   "trace iteration to profile (-1: whole trace)");
  tune->add_option("--out", out, "tune report CSV path");
  tune->add_option("--seed", seed, "override the scene seed");

  auto* analyze = app.add_subcommand("analyze", "histograms from a trace");
  analyze->add_option("--trace", trace_path, "trace file")->required();
  analyze->add_flag("--binary", binary, "trace is in the binary format");
  analyze->add_option("--out", out, "output directory")->required();

  app.add_subcommand("presets", "list machine presets");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) return run_gen(config, out, seed, binary);
  if (run->parsed()) return run_run(config, out, seed, emit_events);
  if (tune->parsed())
    return run_tune(config, machine, family, iteration, out, seed);
  if (analyze->parsed()) return run_analyze(trace_path, binary, out);
  return run_presets();
}
