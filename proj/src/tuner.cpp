#include "warpred/tuner.hpp"

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "warpred/csv.hpp"

namespace warpred::tuner {

using workload::Trace;

workload::Trace extract_iteration(const Trace& trace, std::int32_t iteration) {
  Trace segment;
  segment.scene = trace.scene;
  segment.placement = trace.placement;
  for (const auto& rec : trace.records) {
    if (rec.iteration == iteration) segment.records.push_back(rec);
  }
  return segment;
}

reducers::PolicyKind family_policy_kind(PolicyFamily family) {
  return family == PolicyFamily::sw_s ? reducers::PolicyKind::sw_s
                                      : reducers::PolicyKind::sw_b;
}

TuneReport tune(const Trace& segment, const hwsim::MachineConfig& config,
                PolicyFamily family) {
  if (segment.records.empty()) {
    throw std::invalid_argument("tune: empty trace segment");
  }
  TuneReport report;
  report.profile_iteration = segment.records.front().iteration;
  for (const auto& rec : segment.records) {
    report.profile_iteration = std::min(report.profile_iteration,
                                        rec.iteration);
  }
  const reducers::PolicyKind kind = family_policy_kind(family);
  std::uint64_t best = 0;
  for (int t = 0; t <= 32; ++t) {
    const auto metrics =
        hwsim::simulate(segment, config, {kind, t});
    report.per_threshold_cycles[t] = metrics.total_cycles;
    if (t == 0 || metrics.total_cycles < best) {
      best = metrics.total_cycles;
      report.chosen = t;
    }
  }
  return report;
}

void write_tune_report_csv(const TuneReport& report, std::ostream& out) {
  out << "threshold,cycles\n";
  for (const auto& [threshold, cycles] : report.per_threshold_cycles) {
    out << threshold << ',' << cycles << '\n';
  }
  out << "# chosen=" << report.chosen
      << " profile_iteration=" << report.profile_iteration
      << " reprofile_period=" << report.reprofile_period << '\n';
}

TuneReport read_tune_report_csv(std::istream& in) {
  TuneReport report;
  std::string line;
  if (!std::getline(in, line) || line != "threshold,cycles") {
    throw std::runtime_error("tune report: bad header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto fields = csv::split(std::string_view(line).substr(2), ' ');
      for (const auto f : fields) {
        const auto kv = csv::split(f, '=');
        if (kv.size() != 2) continue;
        if (kv[0] == "chosen") report.chosen = csv::parse_int<int>(kv[1]);
        else if (kv[0] == "profile_iteration")
          report.profile_iteration = csv::parse_int<std::int32_t>(kv[1]);
        else if (kv[0] == "reprofile_period")
          report.reprofile_period = csv::parse_int<int>(kv[1]);
      }
      continue;
    }
    const auto fields = csv::split(line, ',');
    if (fields.size() != 2) {
      throw std::runtime_error("tune report: bad row: " + line);
    }
    report.per_threshold_cycles[csv::parse_int<int>(fields[0])] =
        csv::parse_int<std::uint64_t>(fields[1]);
  }
  return report;
}

}  // namespace warpred::tuner
