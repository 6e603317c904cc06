#include "warpred/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "warpred/csv.hpp"
#include "warpred/trace_io.hpp"

namespace warpred::experiment {

namespace fs = std::filesystem;
using nlohmann::json;
using reducers::PolicyKind;

namespace {

[[noreturn]] void config_error(const std::string& field,
                               const std::string& why) {
  throw std::invalid_argument("config: field '" + field + "': " + why);
}

template <typename T>
T get_field(const json& obj, const std::string& field, T fallback) {
  if (!obj.contains(field)) return fallback;
  try {
    return obj.at(field).get<T>();
  } catch (const json::exception&) {
    config_error(field, "wrong type");
  }
}

void reject_unknown_fields(const json& obj,
                           std::initializer_list<const char*> known,
                           const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool found = false;
    for (const auto* name : known) {
      if (key == name) {
        found = true;
        break;
      }
    }
    if (!found) config_error(where + key, "unknown field");
  }
}

workload::SceneSpec parse_scene(const json& obj) {
  reject_unknown_fields(
      obj,
      {"num_primitives", "params_per_primitive", "image_width",
       "image_height", "mean_fragment_span", "fragments_per_pixel_mean",
       "activity_prob", "locality", "seed", "quantized_values"},
      "scene.");
  workload::SceneSpec s;
  s.num_primitives = get_field(obj, "num_primitives", s.num_primitives);
  s.params_per_primitive =
      get_field(obj, "params_per_primitive", s.params_per_primitive);
  s.image_width = get_field(obj, "image_width", s.image_width);
  s.image_height = get_field(obj, "image_height", s.image_height);
  s.mean_fragment_span =
      get_field(obj, "mean_fragment_span", s.mean_fragment_span);
  s.fragments_per_pixel_mean =
      get_field(obj, "fragments_per_pixel_mean", s.fragments_per_pixel_mean);
  s.activity_prob = get_field(obj, "activity_prob", s.activity_prob);
  s.locality = get_field(obj, "locality", s.locality);
  s.seed = get_field(obj, "seed", s.seed);
  s.quantized_values = get_field(obj, "quantized_values", s.quantized_values);
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("config: scene: ") + e.what());
  }
  return s;
}

hwsim::MachineConfig parse_machine_fields(const json& obj) {
  reject_unknown_fields(
      obj,
      {"name", "preset", "num_sms", "subcores_per_sm", "lsu_queue_depth",
       "rop_units", "rop_throughput", "interconnect_latency",
       "interconnect_bandwidth", "red_unit_latency_per_add", "red_pipe_depth",
       "warp_issue_width"},
      "machines.");
  hwsim::MachineConfig m;
  if (obj.contains("preset")) {
    if (!obj.at("preset").is_string()) config_error("machines.preset", "wrong type");
    m = hwsim::preset(obj.at("preset").get<std::string>());
  }
  m.num_sms = get_field(obj, "num_sms", m.num_sms);
  m.subcores_per_sm = get_field(obj, "subcores_per_sm", m.subcores_per_sm);
  m.lsu_queue_depth = get_field(obj, "lsu_queue_depth", m.lsu_queue_depth);
  m.rop_units = get_field(obj, "rop_units", m.rop_units);
  m.rop_throughput = get_field(obj, "rop_throughput", m.rop_throughput);
  m.interconnect_latency =
      get_field(obj, "interconnect_latency", m.interconnect_latency);
  m.interconnect_bandwidth =
      get_field(obj, "interconnect_bandwidth", m.interconnect_bandwidth);
  m.red_unit_latency_per_add =
      get_field(obj, "red_unit_latency_per_add", m.red_unit_latency_per_add);
  m.red_pipe_depth = get_field(obj, "red_pipe_depth", m.red_pipe_depth);
  m.warp_issue_width = get_field(obj, "warp_issue_width", m.warp_issue_width);
  return m;
}

json machine_to_json(const hwsim::MachineConfig& m) {
  return json{{"num_sms", m.num_sms},
              {"subcores_per_sm", m.subcores_per_sm},
              {"lsu_queue_depth", m.lsu_queue_depth},
              {"rop_units", m.rop_units},
              {"rop_throughput", m.rop_throughput},
              {"interconnect_latency", m.interconnect_latency},
              {"interconnect_bandwidth", m.interconnect_bandwidth},
              {"red_unit_latency_per_add", m.red_unit_latency_per_add},
              {"red_pipe_depth", m.red_pipe_depth},
              {"warp_issue_width", m.warp_issue_width}};
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: not valid JSON: ") +
                                e.what());
  }
  reject_unknown_fields(
      root,
      {"config_version", "scene", "machines", "policies", "thresholds",
       "grad_fraction", "output_dir", "trace_file", "trace_file_binary",
       "emit_events"},
      "");
  const int version = get_field(root, "config_version", 0);
  if (version != config_version) {
    config_error("config_version",
                 "expected " + std::to_string(config_version));
  }

  ExperimentConfig cfg;
  if (!root.contains("scene")) config_error("scene", "missing");
  cfg.scene = parse_scene(root.at("scene"));

  if (!root.contains("machines") || !root.at("machines").is_array() ||
      root.at("machines").empty()) {
    config_error("machines", "must be a nonempty array");
  }
  for (const auto& entry : root.at("machines")) {
    MachineRef ref;
    if (entry.is_string()) {
      ref.name = entry.get<std::string>();
    } else if (entry.is_object()) {
      ref.name = get_field<std::string>(entry, "name", "");
      if (ref.name.empty()) config_error("machines", "custom machine needs a name");
      ref.inline_config = parse_machine_fields(entry);
    } else {
      config_error("machines", "entries must be preset names or objects");
    }
    cfg.machines.push_back(std::move(ref));
  }

  if (!root.contains("policies") || !root.at("policies").is_array() ||
      root.at("policies").empty()) {
    config_error("policies", "must be a nonempty array");
  }
  for (const auto& entry : root.at("policies")) {
    try {
      cfg.policies.push_back(
          reducers::parse_policy_kind(entry.get<std::string>()));
    } catch (const std::exception& e) {
      config_error("policies", e.what());
    }
  }

  if (root.contains("thresholds")) {
    const auto& t = root.at("thresholds");
    if (t.is_string() && t.get<std::string>() == "sweep") {
      cfg.threshold_sweep = true;
    } else if (t.is_array()) {
      for (const auto& v : t) {
        if (!v.is_number_integer()) {
          config_error("thresholds", "values must be integers");
        }
        const int threshold = v.get<int>();
        if (threshold < 0 || threshold > 32) {
          config_error("thresholds", "values must be in 0..32");
        }
        cfg.thresholds.push_back(threshold);
      }
    } else {
      config_error("thresholds", "must be \"sweep\" or an array");
    }
  }
  if (!cfg.threshold_sweep && cfg.thresholds.empty()) {
    cfg.thresholds.push_back(16);
  }

  cfg.grad_fraction = get_field(root, "grad_fraction", cfg.grad_fraction);
  if (!(cfg.grad_fraction > 0.0 && cfg.grad_fraction <= 1.0)) {
    config_error("grad_fraction", "must be in (0, 1]");
  }
  cfg.output_dir = get_field<std::string>(root, "output_dir", "");
  if (root.contains("trace_file")) {
    cfg.trace_file = get_field<std::string>(root, "trace_file", "");
    cfg.trace_file_binary = get_field(root, "trace_file_binary", false);
  }
  cfg.emit_events = get_field(root, "emit_events", false);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  json canon;
  canon["config_version"] = config_version;
  canon["scene"] = {{"num_primitives", cfg.scene.num_primitives},
                    {"params_per_primitive", cfg.scene.params_per_primitive},
                    {"image_width", cfg.scene.image_width},
                    {"image_height", cfg.scene.image_height},
                    {"mean_fragment_span", cfg.scene.mean_fragment_span},
                    {"fragments_per_pixel_mean",
                     cfg.scene.fragments_per_pixel_mean},
                    {"activity_prob", cfg.scene.activity_prob},
                    {"locality", cfg.scene.locality},
                    {"seed", cfg.scene.seed},
                    {"quantized_values", cfg.scene.quantized_values}};
  json machines = json::array();
  for (const auto& m : cfg.machines) {
    json entry;
    entry["name"] = m.name;
    if (m.inline_config) entry["config"] = machine_to_json(*m.inline_config);
    machines.push_back(entry);
  }
  canon["machines"] = machines;
  json policies = json::array();
  for (const auto p : cfg.policies) policies.push_back(reducers::policy_kind_name(p));
  canon["policies"] = policies;
  if (cfg.threshold_sweep) canon["thresholds"] = "sweep";
  else canon["thresholds"] = cfg.thresholds;
  canon["grad_fraction"] = cfg.grad_fraction;
  if (cfg.trace_file) canon["trace_file"] = *cfg.trace_file;

  const std::string text = canon.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

std::string hash_hex(std::uint64_t h) {
  static const char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

std::string threshold_label(const std::optional<int>& t) {
  return t ? std::to_string(*t) : "-";
}

void write_manifest(const fs::path& dir, const Manifest& manifest) {
  json cells = json::array();
  for (const auto& cell : manifest.cells) {
    cells.push_back({{"machine", cell.machine},
                     {"policy", reducers::policy_kind_name(cell.policy)},
                     {"threshold", threshold_label(cell.threshold)},
                     {"total_cycles", cell.metrics.total_cycles}});
  }
  json root = {{"config_version", config_version},
               {"config_hash", hash_hex(manifest.hash)},
               {"status", manifest.status},
               {"outputs", manifest.outputs},
               {"cells", cells}};
  if (!manifest.error.empty()) root["error"] = manifest.error;
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << root.dump(2) << "\n";
}

}  // namespace

void write_histogram_csv(const std::map<int, std::uint64_t>& hist,
                         const std::string& key_column, std::ostream& out) {
  out << key_column << ",frequency\n";
  for (const auto& [key, freq] : hist) out << key << ',' << freq << '\n';
}

std::map<int, std::uint64_t> read_histogram_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.find(",frequency") == std::string::npos) {
    throw std::runtime_error("histogram csv: bad header");
  }
  std::map<int, std::uint64_t> hist;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line, ',');
    if (f.size() != 2) throw std::runtime_error("histogram csv: bad row");
    hist[csv::parse_int<int>(f[0])] = csv::parse_int<std::uint64_t>(f[1]);
  }
  return hist;
}

std::vector<CellResult> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("metrics csv: empty");
  std::vector<CellResult> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line, ',');
    if (f.size() != 13) throw std::runtime_error("metrics csv: bad row");
    CellResult cell;
    cell.machine = std::string(f[0]);
    cell.policy = reducers::parse_policy_kind(std::string(f[1]));
    if (f[2] != "-") cell.threshold = csv::parse_int<int>(f[2]);
    cell.metrics = hwsim::parse_metrics_csv_fields(f, 3);
    cell.grad_speedup = csv::parse_double(f[11]);
    cell.end_to_end_speedup = csv::parse_double(f[12]);
    rows.push_back(std::move(cell));
  }
  return rows;
}

Manifest run_experiment(const ExperimentConfig& cfg) {
  if (cfg.output_dir.empty()) {
    throw std::invalid_argument("config: field 'output_dir': missing");
  }
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);

  Manifest manifest;
  manifest.hash = config_hash(cfg);
  manifest.status = "complete";

  workload::Trace trace;
  if (cfg.trace_file) {
    trace = cfg.trace_file_binary
                ? trace_io::load_trace_binary(*cfg.trace_file)
                : trace_io::load_trace_csv(*cfg.trace_file);
  } else {
    trace = workload::generate(cfg.scene);
  }

  auto add_output = [&](const std::string& name) {
    manifest.outputs.push_back(name);
  };

  {
    std::ofstream out(dir / "histogram_distinct.csv", std::ios::binary);
    write_histogram_csv(workload::histogram_distinct_primitives(trace),
                        "distinct_count", out);
    add_output("histogram_distinct.csv");
  }
  {
    std::ofstream out(dir / "histogram_active.csv", std::ios::binary);
    write_histogram_csv(workload::histogram_active_lanes(trace),
                        "active_lanes", out);
    add_output("histogram_active.csv");
  }

  std::ofstream metrics_out(dir / "metrics.csv", std::ios::binary);
  metrics_out << "machine,policy,threshold," << hwsim::metrics_csv_header()
              << ",grad_speedup,end_to_end_speedup\n";
  add_output("metrics.csv");

  std::ofstream events_out;
  if (cfg.emit_events) {
    events_out.open(dir / "events.log", std::ios::binary);
    add_output("events.log");
  }

  try {
    for (const auto& machine_ref : cfg.machines) {
      const hwsim::MachineConfig machine =
          machine_ref.inline_config ? *machine_ref.inline_config
                                    : hwsim::preset(machine_ref.name);
      machine.validate();

      // Baseline for the speedup columns, cached per machine.
      const std::uint64_t native_cycles =
          hwsim::simulate(trace, machine, {PolicyKind::native, 0})
              .total_cycles;

      for (const auto policy : cfg.policies) {
        std::vector<std::optional<int>> cells;
        if (reducers::policy_uses_threshold(policy)) {
          if (cfg.threshold_sweep) {
            for (int t = 0; t <= 32; ++t) cells.emplace_back(t);
          } else {
            for (const int t : cfg.thresholds) cells.emplace_back(t);
          }
        } else {
          cells.emplace_back(std::nullopt);
        }
        for (const auto& threshold : cells) {
          CellResult cell;
          cell.machine = machine_ref.name;
          cell.policy = policy;
          cell.threshold = threshold;
          const reducers::Policy p{policy, threshold.value_or(0)};
          cell.metrics =
              cfg.emit_events
                  ? hwsim::simulate_detailed(trace, machine, p, &events_out)
                        .metrics
                  : hwsim::simulate(trace, machine, p);
          const double s = static_cast<double>(native_cycles) /
                           static_cast<double>(cell.metrics.total_cycles);
          cell.grad_speedup = s;
          // Amdahl accounting over the gradient-computation fraction.
          cell.end_to_end_speedup =
              1.0 / (cfg.grad_fraction / s + (1.0 - cfg.grad_fraction));
          metrics_out << cell.machine << ','
                      << reducers::policy_kind_name(cell.policy) << ','
                      << threshold_label(cell.threshold) << ','
                      << hwsim::metrics_csv_row(cell.metrics) << ','
                      << csv::format_double(cell.grad_speedup) << ','
                      << csv::format_double(cell.end_to_end_speedup) << '\n';
          manifest.cells.push_back(std::move(cell));
        }
      }

      if (cfg.threshold_sweep) {
        for (const auto policy : cfg.policies) {
          if (!reducers::policy_uses_threshold(policy)) continue;
          const auto family = policy == PolicyKind::sw_s
                                  ? tuner::PolicyFamily::sw_s
                                  : tuner::PolicyFamily::sw_b;
          const auto segment = tuner::extract_iteration(trace, 0);
          const auto report = tuner::tune(segment, machine, family);
          const std::string name = "tune_" +
                                   reducers::policy_kind_name(policy) + "_" +
                                   machine_ref.name + ".csv";
          std::ofstream out(dir / name, std::ios::binary);
          tuner::write_tune_report_csv(report, out);
          add_output(name);
        }
      }
    }
  } catch (const std::exception& e) {
    manifest.status = "aborted";
    manifest.error = e.what();
  }

  metrics_out.close();
  write_manifest(dir, manifest);
  return manifest;
}

}  // namespace warpred::experiment
