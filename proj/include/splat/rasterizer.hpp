#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "splat/gaussians.hpp"
#include "splat/geometry.hpp"
#include "splat/image.hpp"
#include "splat/mat.hpp"

namespace splat {

struct RenderOptions {
  std::array<double, 3> background{0, 0, 0};
  double alpha_clamp = 0.99;
  double transmittance_stop = 1e-4;
  // contributions with log-density below this are dropped (default 3 sigma);
  // the same rule applies per pixel in the tiled path and the dense oracle,
  // so both produce bitwise-identical images
  double power_min = -4.5;
  int tile = 16;
};

struct FrameBuffer {
  Image color;
  std::vector<double> transmittance;  // per pixel, residual after compositing
  std::vector<int> contrib;           // per pixel, splats actually composited
};

// Optional additive deformation applied before decoding: positions get dx,
// raw quaternions get drot, log-scales get dls. Any pointer may be null.
struct DeformDelta {
  const Mat* dx = nullptr;   // N x 3
  const Mat* drot = nullptr; // N x 4
  const Mat* dls = nullptr;  // N x 3
};

struct RasterGrads {
  Mat pos, rot, log_scale, opacity_raw, color;

  void init(int64_t n) {
    pos = Mat(n, 3);
    rot = Mat(n, 4);
    log_scale = Mat(n, 3);
    opacity_raw = Mat(n, 1);
    color = Mat(n, 3);
  }
};

// Forward cache: everything backward needs, without referencing the inputs.
struct RasterCache {
  bool valid = false;
  Camera cam;
  RenderOptions opt;
  int64_t n = 0;
  int tiles_x = 0, tiles_y = 0;

  // per gaussian
  std::vector<uint8_t> culled;
  std::vector<Vec2> mean;
  std::vector<double> cov_a, cov_b, cov_d;     // screen covariance (symmetric)
  std::vector<double> inv_a, inv_b, inv_d;     // its inverse
  std::vector<double> alpha;                   // sigmoid(opacity_raw)
  std::vector<std::array<double, 3>> rgb;      // clamped color
  std::vector<std::array<uint8_t, 3>> clamped; // color clamp mask
  std::vector<Quat> unit_rot;
  std::vector<Quat> raw_rot;
  std::vector<Vec3> scale;                     // exp(log_scale + dls)
  std::vector<Vec3> world_pos;
  std::vector<Covariance3> sigma;

  std::vector<std::vector<int>> tile_lists;    // sorted by (depth, index)
  std::vector<double> final_t;                 // per pixel
  std::vector<int> n_contrib;                  // per pixel
};

// Tile-based front-to-back compositing of the gaussian set under an optional
// deformation. Deterministic for any thread count.
FrameBuffer rasterize(const GaussianSet& set, const DeformDelta& delta,
                      const Camera& cam, const RenderOptions& opt,
                      RasterCache* cache = nullptr);

// d_image: height*width*3 upstream gradient (d loss / d pixel). Returns
// gradients in raw parameter space. Deformation deltas are additive, so
// their gradients equal the pos/rot/log_scale entries. Per-gaussian world
// position gradients are also exposed for densification statistics.
void rasterize_backward(const RasterCache& cache, const std::vector<double>& d_image,
                        RasterGrads& grads, Mat* screen_grad_norm = nullptr);

}  // namespace splat
