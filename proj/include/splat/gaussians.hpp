#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "splat/errors.hpp"
#include "splat/mat.hpp"
#include "splat/rng.hpp"

namespace splat {

// Canonical Gaussian head. Storage is raw optimization space: rotations
// unnormalized, scales in log space, opacities pre-sigmoid. Decode happens at
// every consumption point.
struct GaussianSet {
  Mat pos;          // N x 3, world units
  Mat rot;          // N x 4, (w,x,y,z), unnormalized
  Mat log_scale;    // N x 3
  Mat opacity_raw;  // N x 1, pre-sigmoid
  Mat color;        // N x 3, clamped to [0,1] at rasterization
  std::vector<uint8_t> landmark;  // benchmark marker flags

  std::array<double, 3> box_min{-1, -1, -1};
  std::array<double, 3> box_max{1, 1, 1};

  int64_t count() const { return pos.rows; }
  double extent() const;  // bounding-box diagonal length
};

double sigmoid(double x);
double logit(double p);

// Mean distance to the k nearest neighbors, exhaustive O(N^2).
std::vector<double> knn_mean_dist(const Mat& pos, int k);

// Positions uniform in the box; identity rotations; per-axis scale = mean
// 3-NN distance (fallback 10% of extent when N < 2); alpha = 0.1; mid-gray.
GaussianSet init_random(int64_t count, const std::array<double, 3>& box_min,
                        const std::array<double, 3>& box_max, uint64_t seed);

struct DensifyOptions {
  double grad_threshold = 2e-4;   // screen-space EMA threshold (NDC units)
  double split_size_frac = 0.01;  // of scene extent
  double prune_alpha = 0.005;
  double split_scale_div = 1.6;
  double clone_offset_frac = 0.5;  // of the gaussian's own mean scale
};

struct DensifyStats {
  std::vector<double> grad_ema;    // per-gaussian screen-gradient norm EMA
  Mat world_grad_sum;              // N x 3 accumulated world-position grads
  int64_t updates = 0;
};

struct DensifyResult {
  int64_t cloned = 0, split = 0, pruned = 0;
  // row_map[i] = source row of new row i, or -1 for freshly created rows;
  // feed to ParamStore::rebind_rows after the set's matrices are rebuilt.
  std::vector<int64_t> row_map;
};

// Clone small high-gradient gaussians (offset along the accumulated descent
// direction), split large ones into two children along the major axis with
// scale / split_scale_div, and prune alpha < prune_alpha. Deterministic.
DensifyResult densify_and_prune(GaussianSet& set, const DensifyStats& stats,
                                const DensifyOptions& opt);

// Binary little-endian PLY with double-typed fields x,y,z, opacity,
// scale_0..2, rot_0..3, f_dc_0..2 and uchar landmark. The reader also
// accepts float-typed third-party exports and ignores unknown properties.
void write_ply(const std::string& path, const GaussianSet& set);
GaussianSet read_ply(const std::string& path);

}  // namespace splat
