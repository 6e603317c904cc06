#ifndef WARPRED_H
#define WARPRED_H

/* C interface to the warpred library: synthetic gradient-computation
 * workloads, warp-level reduction policies, the atomic-pipeline machine
 * simulation, threshold tuning and the batch experiment harness.
 *
 * All functions return WR_OK on success; on failure they return an error
 * code and leave a message retrievable with wr_last_error() (thread-local).
 * Objects behind opaque handles must be released with the matching _free.
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum wr_status {
  WR_OK = 0,
  WR_ERR_INVALID_ARGUMENT = 1,
  WR_ERR_IO = 2,
  WR_ERR_RUNTIME = 3
} wr_status;

typedef enum wr_policy_kind {
  WR_POLICY_NATIVE = 0,
  WR_POLICY_SW_S = 1,
  WR_POLICY_SW_B = 2,
  WR_POLICY_CCCL = 3,
  WR_POLICY_HW_ATOMRED = 4
} wr_policy_kind;

typedef enum wr_policy_family {
  WR_FAMILY_SW_S = 0,
  WR_FAMILY_SW_B = 1
} wr_policy_family;

typedef struct wr_trace wr_trace;

typedef struct wr_scene_spec {
  int32_t num_primitives;
  int32_t params_per_primitive;
  int32_t image_width;
  int32_t image_height;
  double mean_fragment_span;
  double fragments_per_pixel_mean;
  double activity_prob;
  double locality;
  uint64_t seed;
  int32_t quantized_values; /* nonzero: values on the exact 1/256 grid */
} wr_scene_spec;

typedef struct wr_machine_config {
  int32_t num_sms;
  int32_t subcores_per_sm;
  int32_t lsu_queue_depth; /* 0 = unbounded */
  int32_t rop_units;
  double rop_throughput;
  int32_t interconnect_latency;
  int32_t interconnect_bandwidth;
  int32_t red_unit_latency_per_add;
  int32_t red_pipe_depth;
  int32_t warp_issue_width;
} wr_machine_config;

typedef struct wr_run_metrics {
  uint64_t total_cycles;
  uint64_t stalls_lsu;
  uint64_t stalls_other;
  uint64_t atomic_requests_to_l2;
  uint64_t core_instructions;
  uint64_t core_fp_adds;
  uint64_t interconnect_packets;
  double energy_proxy;
} wr_run_metrics;

typedef struct wr_tune_report {
  uint64_t cycles_by_threshold[33];
  int32_t chosen;
  int32_t profile_iteration;
  int32_t reprofile_period;
} wr_tune_report;

const char* wr_version(void);

/* Message for the most recent failing call on this thread; never NULL. */
const char* wr_last_error(void);

void wr_scene_spec_init(wr_scene_spec* scene);
wr_status wr_scene_from_config(const char* config_path, wr_scene_spec* out);

int wr_preset_count(void);
const char* wr_preset_name(int index);
wr_status wr_machine_preset(const char* name, wr_machine_config* out);

wr_status wr_trace_generate(const wr_scene_spec* scene, wr_trace** out);
void wr_trace_free(wr_trace* trace);
int64_t wr_trace_record_count(const wr_trace* trace);
wr_status wr_trace_save(const wr_trace* trace, const char* path, int binary);
wr_status wr_trace_load(const char* path, int binary, wr_trace** out);

/* out_counts[k] = number of records with the given statistic equal to k,
 * k in 0..32. */
wr_status wr_trace_histogram_distinct(const wr_trace* trace,
                                      uint64_t out_counts[33]);
wr_status wr_trace_histogram_active(const wr_trace* trace,
                                    uint64_t out_counts[33]);
/* Writes histogram_distinct.csv and histogram_active.csv under dir. */
wr_status wr_trace_write_histograms(const wr_trace* trace, const char* dir);

/* threshold is used by WR_POLICY_SW_S / WR_POLICY_SW_B only (0..32). */
wr_status wr_simulate(const wr_trace* trace, const wr_machine_config* machine,
                      wr_policy_kind policy, int threshold,
                      wr_run_metrics* out);

/* Profiles the records of the given iteration index (iteration < 0 profiles
 * the whole trace). */
wr_status wr_tune(const wr_trace* trace, const wr_machine_config* machine,
                  wr_policy_family family, int32_t iteration,
                  wr_tune_report* out);
wr_status wr_tune_report_save_csv(const wr_tune_report* report,
                                  const char* path);

/* Runs the experiment described by the JSON config. output_dir_override and
 * seed_override (< 0 keeps the config seed) optionally replace config
 * fields; a nonzero emit_events adds a per-cycle event log. Returns
 * WR_ERR_RUNTIME when the run aborted partway (the manifest still records
 * completed cells). */
wr_status wr_experiment_run(const char* config_path,
                            const char* output_dir_override,
                            int64_t seed_override, int emit_events);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* WARPRED_H */
