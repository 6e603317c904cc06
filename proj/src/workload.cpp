#include "warpred/workload.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace warpred::workload {

namespace {

// Hand-rolled variate transforms: the distributions in <random> other than
// the engines are implementation-defined, and trace bytes must not depend
// on the standard library build.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

bool bernoulli(std::mt19937_64& rng, double p) { return uniform01(rng) < p; }

// Knuth's method; trip-count means are small.
int poisson(std::mt19937_64& rng, double mean) {
  const double limit = std::exp(-mean);
  int k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= uniform01(rng);
  } while (p > limit);
  return k - 1;
}

// Geometric on {1, 2, ...} with the given mean, by inversion.
std::int64_t geometric_at_least_one(std::mt19937_64& rng, double mean) {
  if (mean <= 1.0) return 1;
  const double p = 1.0 / mean;
  const double u = uniform01(rng);
  const double len = std::floor(std::log1p(-u) / std::log1p(-p)) + 1.0;
  return static_cast<std::int64_t>(std::max(1.0, len));
}

std::int32_t uniform_index(std::mt19937_64& rng, std::int32_t n) {
  return static_cast<std::int32_t>(rng() % static_cast<std::uint64_t>(n));
}

double draw_grad(std::mt19937_64& rng, bool quantized) {
  if (quantized) {
    const auto k = 1 + static_cast<int>(rng() % 255);
    return static_cast<double>(k) / 256.0;
  }
  return 2.0 * uniform01(rng) - 1.0;
}

// Stream of rasterized fragments laid over the image's pixels in tile
// order: each fragment is one primitive covering a geometric-length run.
class FragmentStream {
 public:
  FragmentStream(const SceneSpec& scene, std::mt19937_64& rng)
      : scene_(scene), rng_(rng) {
    advance();
  }

  // Primitive covering the next 32-pixel slice (one warp iteration).
  std::int32_t take_warp_slice() {
    const std::int32_t prim = current_;
    remaining_ -= simt::warp_size;
    if (remaining_ <= 0) advance();
    return prim;
  }

 private:
  void advance() {
    current_ = uniform_index(rng_, scene_.num_primitives);
    remaining_ = geometric_at_least_one(rng_, scene_.mean_fragment_span);
  }

  const SceneSpec& scene_;
  std::mt19937_64& rng_;
  std::int32_t current_ = 0;
  std::int64_t remaining_ = 0;
};

}  // namespace

void SceneSpec::validate() const {
  auto fail = [](const std::string& field) {
    throw std::invalid_argument("SceneSpec: invalid field " + field);
  };
  if (num_primitives < 1) fail("num_primitives");
  if (params_per_primitive < 1) fail("params_per_primitive");
  if (image_width < 1) fail("image_width");
  if (image_height < 1) fail("image_height");
  if (!(mean_fragment_span >= 1.0)) fail("mean_fragment_span");
  if (!(fragments_per_pixel_mean > 0.0)) fail("fragments_per_pixel_mean");
  if (!(activity_prob >= 0.0 && activity_prob <= 1.0)) fail("activity_prob");
  if (!(locality >= 0.0 && locality <= 1.0)) fail("locality");
}

Trace generate(const SceneSpec& scene) {
  scene.validate();
  Trace trace;
  trace.scene = scene;

  std::mt19937_64 rng(scene.seed);
  FragmentStream fragments(scene, rng);

  // Warps tile the image in row-major 8x4 pixel tiles.
  const int tiles_x = (scene.image_width + 7) / 8;
  const int tiles_y = (scene.image_height + 3) / 4;
  const int num_warps = tiles_x * tiles_y;
  const int n = scene.params_per_primitive;

  for (std::int32_t warp = 0; warp < num_warps; ++warp) {
    const int trips =
        std::max(1, poisson(rng, scene.fragments_per_pixel_mean));
    for (std::int32_t iter = 0; iter < trips; ++iter) {
      WarpRecord rec;
      rec.warp_id = warp;
      rec.iteration = iter;
      rec.lane_grads.assign(
          static_cast<std::size_t>(simt::warp_size) * n, 0.0);

      for (int lane = 0; lane < simt::warp_size; ++lane) {
        if (bernoulli(rng, scene.activity_prob)) {
          rec.active |= simt::lane_bit(lane);
        }
      }

      const std::int32_t base = fragments.take_warp_slice();
      if (bernoulli(rng, scene.locality)) {
        rec.lane_primitive.fill(base);
      } else {
        // Lanes straddle a fragment boundary: draw from a small
        // neighborhood of 2..8 distinct primitives.
        const int k = 2 + static_cast<int>(rng() % 7);
        for (int lane = 0; lane < simt::warp_size; ++lane) {
          const auto offs = static_cast<std::int32_t>(rng() % k);
          rec.lane_primitive[lane] =
              (base + offs) % scene.num_primitives;
        }
      }

      for (int lane = 0; lane < simt::warp_size; ++lane) {
        if (!simt::lane_in(rec.active, lane)) continue;
        for (int p = 0; p < n; ++p) {
          rec.grad(lane, p) = draw_grad(rng, scene.quantized_values);
        }
      }
      trace.records.push_back(std::move(rec));
    }
  }
  return trace;
}

int distinct_active_primitives(const WarpRecord& record) {
  std::array<std::int32_t, simt::warp_size> seen;
  int count = 0;
  for (int lane = 0; lane < simt::warp_size; ++lane) {
    if (!simt::lane_in(record.active, lane)) continue;
    const std::int32_t id = record.lane_primitive[lane];
    bool found = false;
    for (int i = 0; i < count; ++i) {
      if (seen[i] == id) {
        found = true;
        break;
      }
    }
    if (!found) seen[count++] = id;
  }
  return count;
}

namespace {
void require_nonempty(const Trace& trace, const char* what) {
  if (trace.records.empty()) {
    throw std::invalid_argument(std::string(what) + ": empty trace");
  }
}
}  // namespace

std::map<int, std::uint64_t> histogram_distinct_primitives(
    const Trace& trace) {
  require_nonempty(trace, "histogram_distinct_primitives");
  std::map<int, std::uint64_t> hist;
  for (const auto& rec : trace.records) {
    if (rec.active == 0) continue;
    ++hist[distinct_active_primitives(rec)];
  }
  return hist;
}

std::map<int, std::uint64_t> histogram_active_lanes(const Trace& trace) {
  require_nonempty(trace, "histogram_active_lanes");
  std::map<int, std::uint64_t> hist;
  for (const auto& rec : trace.records) ++hist[simt::popc(rec.active)];
  return hist;
}

}  // namespace warpred::workload
