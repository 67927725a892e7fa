#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "splat/errors.hpp"
#include "splat/mat.hpp"
#include "splat/rng.hpp"

namespace splat {

// Multi-resolution hash grid over a 2D or 3D box. Level l has resolution
// N_l = floor(n_min * growth^l) cells per axis; a level indexes its
// (N_l+1)^dim vertices directly while they fit in the table, and hashes
// otherwise. Out-of-box queries clamp to the box surface.
class HashGrid {
 public:
  HashGrid() = default;
  HashGrid(int dim, int levels, int feat, double n_min, double growth,
           int table_log2, const std::array<double, 3>& box_min,
           const std::array<double, 3>& box_max);

  void init_tables(Rng& rng);  // uniform in [-1e-4, 1e-4]

  int dim() const { return dim_; }
  int levels() const { return levels_; }
  int feat() const { return feat_; }
  int out_dim() const { return levels_ * feat_; }
  int64_t table_entries() const { return int64_t(1) << table_log2_; }
  int resolution(int level) const { return res_[level]; }
  bool direct_indexed(int level) const { return direct_[level]; }

  std::vector<Mat>& tables() { return tables_; }
  const std::vector<Mat>& tables() const { return tables_; }

  // Table slot of an integer vertex at a level. Exposed for the
  // collision-freeness and determinism tests.
  uint32_t slot(int level, const int* vertex) const;

  // q: dim doubles. out: out_dim() doubles.
  void encode(const double* q, double* out) const;

  // Scatters table gradients (d_tables points at levels() mats shaped like
  // tables()) and accumulates the query-point gradient into dq (dim doubles,
  // pre-zeroed by the caller). Axes clamped at the box surface get zero
  // query gradient.
  void encode_backward(const double* q, const double* d_out, Mat* d_tables,
                       double* dq) const;
  void encode_backward(const double* q, const double* d_out,
                       std::vector<Mat>& d_tables, double* dq) const {
    encode_backward(q, d_out, d_tables.data(), dq);
  }

 private:
  int dim_ = 3;
  int levels_ = 0;
  int feat_ = 0;
  double n_min_ = 4;
  double growth_ = 1.45;
  int table_log2_ = 14;
  std::array<double, 3> box_min_{}, box_max_{};
  std::vector<int> res_;
  std::vector<bool> direct_;
  std::vector<Mat> tables_;
};

// Three 2D hash grids over the coordinate planes; features concatenate in
// the fixed order XY, YZ, XZ.
class TriPlaneEncoder {
 public:
  TriPlaneEncoder() = default;
  TriPlaneEncoder(int levels, int feat, double n_min, double growth,
                  int table_log2, const std::array<double, 3>& box_min,
                  const std::array<double, 3>& box_max);

  void init_tables(Rng& rng);

  int out_dim() const { return 3 * xy_.out_dim(); }
  HashGrid& plane(int i);              // 0=XY 1=YZ 2=XZ
  const HashGrid& plane(int i) const;

  void encode(const double* x3, double* out) const;
  void encode_backward(const double* x3, const double* d_out,
                       std::vector<Mat>& d_xy, std::vector<Mat>& d_yz,
                       std::vector<Mat>& d_xz, double* dx3) const;
  // Same, with the three planes' table gradients laid out contiguously
  // (xy levels, yz levels, xz levels).
  void encode_backward_flat(const double* x3, const double* d_out,
                            Mat* d_tables, double* dx3) const;

 private:
  HashGrid xy_, yz_, xz_;
};

// Point/field feature encoder with a selectable backbone. Table storage is
// exposed as one flat list so optimizers and checkpoints treat both kinds
// uniformly (tri-plane order: xy levels, yz levels, xz levels).
class GridEncoder {
 public:
  enum class Kind { Hash3D, TriPlane };

  GridEncoder() = default;
  GridEncoder(Kind kind, int levels, int feat, double n_min, double growth,
              int table_log2, const std::array<double, 3>& box_min,
              const std::array<double, 3>& box_max);

  Kind kind() const { return kind_; }
  int out_dim() const;
  int table_count() const;
  Mat& table(int i);
  const Mat& table(int i) const;
  std::vector<Mat> make_table_grads() const;

  void init_tables(Rng& rng);
  void encode(const double* x3, double* out) const;
  // d_tables: table_count() mats; dx3 may be null when the query is fixed.
  void encode_backward(const double* x3, const double* d_out, Mat* d_tables,
                       double* dx3) const;

 private:
  Kind kind_ = Kind::Hash3D;
  HashGrid hash_;
  TriPlaneEncoder tri_;
};

}  // namespace splat
