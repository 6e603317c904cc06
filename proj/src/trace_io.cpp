#include "warpred/trace_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "warpred/csv.hpp"

namespace warpred::trace_io {

using workload::Trace;
using workload::WarpRecord;

namespace {

constexpr char text_magic[] = "WRTRACE v1";
constexpr char requests_magic[] = "WRREQS v1";
constexpr char binary_magic[8] = {'W', 'R', 'T', 'R', 'A', 'C', 'E', 'B'};
constexpr std::uint32_t binary_version = 1;

[[noreturn]] void bad_format(const std::string& what) {
  throw std::runtime_error("trace format error: " + what);
}

std::string mask_hex(simt::LaneMask mask) {
  static const char digits[] = "0123456789abcdef";
  std::string s(8, '0');
  for (int i = 7; i >= 0; --i) {
    s[i] = digits[mask & 0xf];
    mask >>= 4;
  }
  return s;
}

simt::LaneMask parse_mask_hex(std::string_view text) {
  if (text.size() != 8) bad_format("active mask must be 8 hex digits");
  simt::LaneMask mask = 0;
  for (char ch : text) {
    mask <<= 4;
    if (ch >= '0' && ch <= '9') mask |= static_cast<unsigned>(ch - '0');
    else if (ch >= 'a' && ch <= 'f') mask |= static_cast<unsigned>(ch - 'a' + 10);
    else bad_format("bad hex digit in active mask");
  }
  return mask;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

}  // namespace

void save_trace_csv(const Trace& trace, std::ostream& out) {
  out << text_magic << "; N=" << trace.scene.params_per_primitive
      << "; seed=" << trace.scene.seed << "\n";
  const int n = trace.scene.params_per_primitive;
  for (const auto& rec : trace.records) {
    out << rec.warp_id << ',' << rec.iteration << ','
        << mask_hex(rec.active);
    for (int lane = 0; lane < simt::warp_size; ++lane) {
      out << ',';
      if (simt::lane_in(rec.active, lane)) out << rec.lane_primitive[lane];
      else out << '-';
    }
    out << ',';
    for (int lane = 0; lane < simt::warp_size; ++lane) {
      if (lane > 0) out << ';';
      for (int p = 0; p < n; ++p) {
        if (p > 0) out << ',';
        out << csv::format_double(rec.grad(lane, p));
      }
    }
    out << '\n';
  }
}

void save_trace_csv(const Trace& trace, const std::string& path) {
  auto out = open_output(path);
  save_trace_csv(trace, out);
}

Trace load_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) bad_format("missing header");
  auto header = csv::split(line, ';');
  if (header.size() != 3 || header[0] != text_magic)
    bad_format("bad header: " + line);
  auto field = [&](std::string_view f, std::string_view key) {
    while (!f.empty() && f.front() == ' ') f.remove_prefix(1);
    if (f.substr(0, key.size()) != key) bad_format("bad header field");
    return f.substr(key.size());
  };
  const int n = csv::parse_int<int>(field(header[1], "N="));
  const auto seed = csv::parse_int<std::uint64_t>(field(header[2], "seed="));
  if (n < 1) bad_format("N must be >= 1");

  Trace trace;
  trace.scene.params_per_primitive = n;
  trace.scene.seed = seed;

  std::int32_t max_prim = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    // Positional parse: 35 comma fields, then the grads blob (which itself
    // contains commas within each lane).
    std::size_t pos = 0;
    auto next_field = [&]() -> std::string_view {
      const std::size_t end = line.find(',', pos);
      if (end == std::string::npos) bad_format("truncated record: " + line);
      std::string_view f(line.data() + pos, end - pos);
      pos = end + 1;
      return f;
    };
    WarpRecord rec;
    rec.warp_id = csv::parse_int<std::int32_t>(next_field());
    rec.iteration = csv::parse_int<std::int32_t>(next_field());
    rec.active = parse_mask_hex(next_field());
    for (int lane = 0; lane < simt::warp_size; ++lane) {
      const auto f = next_field();
      if (f == "-") {
        rec.lane_primitive[lane] = -1;
      } else {
        rec.lane_primitive[lane] = csv::parse_int<std::int32_t>(f);
        max_prim = std::max(max_prim, rec.lane_primitive[lane]);
      }
    }
    rec.lane_grads.assign(static_cast<std::size_t>(simt::warp_size) * n, 0.0);
    const auto lanes =
        csv::split(std::string_view(line).substr(pos), ';');
    if (lanes.size() != simt::warp_size) bad_format("expected 32 lane grads");
    for (int lane = 0; lane < simt::warp_size; ++lane) {
      const auto vals = csv::split(lanes[lane], ',');
      if (static_cast<int>(vals.size()) != n)
        bad_format("expected N grads per lane");
      for (int p = 0; p < n; ++p) rec.grad(lane, p) = csv::parse_double(vals[p]);
    }
    trace.records.push_back(std::move(rec));
  }
  trace.scene.num_primitives = max_prim + 1;
  return trace;
}

Trace load_trace_csv(const std::string& path) {
  auto in = open_input(path);
  return load_trace_csv(in);
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

void put_i32(std::ostream& out, std::int32_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
}

void put_f64(std::ostream& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) bad_format("truncated binary trace");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) bad_format("truncated binary trace");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::int32_t get_i32(std::istream& in) {
  return static_cast<std::int32_t>(get_u32(in));
}

double get_f64(std::istream& in) {
  return std::bit_cast<double>(get_u64(in));
}

}  // namespace

void save_trace_binary(const Trace& trace, std::ostream& out) {
  out.write(binary_magic, sizeof(binary_magic));
  put_u32(out, binary_version);
  const auto& s = trace.scene;
  put_i32(out, s.num_primitives);
  put_i32(out, s.params_per_primitive);
  put_i32(out, s.image_width);
  put_i32(out, s.image_height);
  put_f64(out, s.mean_fragment_span);
  put_f64(out, s.fragments_per_pixel_mean);
  put_f64(out, s.activity_prob);
  put_f64(out, s.locality);
  put_u64(out, s.seed);
  put_u32(out, s.quantized_values ? 1 : 0);
  put_u64(out, trace.records.size());
  const int n = s.params_per_primitive;
  for (const auto& rec : trace.records) {
    put_i32(out, rec.warp_id);
    put_i32(out, rec.iteration);
    put_u32(out, rec.active);
    for (int lane = 0; lane < simt::warp_size; ++lane)
      put_i32(out, rec.lane_primitive[lane]);
    for (int lane = 0; lane < simt::warp_size; ++lane)
      for (int p = 0; p < n; ++p) put_f64(out, rec.grad(lane, p));
  }
}

void save_trace_binary(const Trace& trace, const std::string& path) {
  auto out = open_output(path);
  save_trace_binary(trace, out);
}

Trace load_trace_binary(std::istream& in) {
  char magic[sizeof(binary_magic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, binary_magic, sizeof(magic)) != 0)
    bad_format("bad binary magic");
  if (get_u32(in) != binary_version) bad_format("unsupported binary version");
  Trace trace;
  auto& s = trace.scene;
  s.num_primitives = get_i32(in);
  s.params_per_primitive = get_i32(in);
  s.image_width = get_i32(in);
  s.image_height = get_i32(in);
  s.mean_fragment_span = get_f64(in);
  s.fragments_per_pixel_mean = get_f64(in);
  s.activity_prob = get_f64(in);
  s.locality = get_f64(in);
  s.seed = get_u64(in);
  s.quantized_values = get_u32(in) != 0;
  const std::uint64_t count = get_u64(in);
  const int n = s.params_per_primitive;
  if (n < 1) bad_format("N must be >= 1");
  trace.records.reserve(count);
  for (std::uint64_t r = 0; r < count; ++r) {
    WarpRecord rec;
    rec.warp_id = get_i32(in);
    rec.iteration = get_i32(in);
    rec.active = get_u32(in);
    for (int lane = 0; lane < simt::warp_size; ++lane)
      rec.lane_primitive[lane] = get_i32(in);
    rec.lane_grads.resize(static_cast<std::size_t>(simt::warp_size) * n);
    for (int lane = 0; lane < simt::warp_size; ++lane)
      for (int p = 0; p < n; ++p) rec.grad(lane, p) = get_f64(in);
    trace.records.push_back(std::move(rec));
  }
  return trace;
}

Trace load_trace_binary(const std::string& path) {
  auto in = open_input(path);
  return load_trace_binary(in);
}

void save_requests_csv(std::span<const reducers::AtomicRequest> requests,
                       std::ostream& out) {
  out << requests_magic << "\n";
  for (const auto& req : requests) {
    out << req.addr.primitive << ',' << req.addr.param << ','
        << csv::format_double(req.value) << ',' << req.source.sm << ','
        << req.source.subcore << ',' << req.source.warp << '\n';
  }
}

std::vector<reducers::AtomicRequest> load_requests_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != requests_magic)
    bad_format("bad request stream header");
  std::vector<reducers::AtomicRequest> requests;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line, ',');
    if (f.size() != 6) bad_format("bad request record: " + line);
    reducers::AtomicRequest req;
    req.addr.primitive = csv::parse_int<std::int32_t>(f[0]);
    req.addr.param = csv::parse_int<std::int32_t>(f[1]);
    req.value = csv::parse_double(f[2]);
    req.source.sm = csv::parse_int<std::int32_t>(f[3]);
    req.source.subcore = csv::parse_int<std::int32_t>(f[4]);
    req.source.warp = csv::parse_int<std::int32_t>(f[5]);
    requests.push_back(req);
  }
  return requests;
}

namespace {
constexpr char requests_binary_magic[8] = {'W', 'R', 'R', 'E',
                                           'Q', 'S', 'B', '1'};
}

void save_requests_binary(std::span<const reducers::AtomicRequest> requests,
                          std::ostream& out) {
  out.write(requests_binary_magic, sizeof(requests_binary_magic));
  put_u64(out, requests.size());
  for (const auto& req : requests) {
    put_i32(out, req.addr.primitive);
    put_i32(out, req.addr.param);
    put_f64(out, req.value);
    put_i32(out, req.source.sm);
    put_i32(out, req.source.subcore);
    put_i32(out, req.source.warp);
  }
}

std::vector<reducers::AtomicRequest> load_requests_binary(std::istream& in) {
  char magic[sizeof(requests_binary_magic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, requests_binary_magic, sizeof(magic)) != 0)
    bad_format("bad request stream magic");
  const std::uint64_t count = get_u64(in);
  std::vector<reducers::AtomicRequest> requests;
  requests.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    reducers::AtomicRequest req;
    req.addr.primitive = get_i32(in);
    req.addr.param = get_i32(in);
    req.value = get_f64(in);
    req.source.sm = get_i32(in);
    req.source.subcore = get_i32(in);
    req.source.warp = get_i32(in);
    requests.push_back(req);
  }
  return requests;
}

}  // namespace warpred::trace_io
