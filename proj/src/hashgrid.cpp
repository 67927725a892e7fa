#include "splat/hashgrid.hpp"

#include <cmath>

namespace splat {

namespace {
constexpr uint32_t kPrimes[3] = {1u, 2654435761u, 805459861u};
}

HashGrid::HashGrid(int dim, int levels, int feat, double n_min, double growth,
                   int table_log2, const std::array<double, 3>& box_min,
                   const std::array<double, 3>& box_max)
    : dim_(dim),
      levels_(levels),
      feat_(feat),
      n_min_(n_min),
      growth_(growth),
      table_log2_(table_log2),
      box_min_(box_min),
      box_max_(box_max) {
  if (dim != 2 && dim != 3) throw ShapeError("HashGrid: dim must be 2 or 3");
  if (levels < 1 || feat < 1) throw ShapeError("HashGrid: L and D must be >= 1");
  for (int a = 0; a < dim_; ++a)
    if (!(box_max_[a] > box_min_[a]))
      throw std::invalid_argument("HashGrid: empty bounding box");
  res_.resize(levels_);
  direct_.resize(levels_);
  int64_t entries = table_entries();
  int prev = 0;
  for (int l = 0; l < levels_; ++l) {
    int n = static_cast<int>(std::floor(n_min_ * std::pow(growth_, l)));
    if (n < 1) n = 1;
    if (n < prev) n = prev;  // resolutions nondecreasing
    prev = n;
    res_[l] = n;
    int64_t verts = 1;
    for (int a = 0; a < dim_; ++a) verts *= n + 1;
    direct_[l] = verts <= entries;
  }
  tables_.assign(levels_, Mat(entries, feat_));
}

void HashGrid::init_tables(Rng& rng) {
  for (auto& t : tables_)
    for (auto& x : t.v) x = rng.uniform(-1e-4, 1e-4);
}

uint32_t HashGrid::slot(int level, const int* vertex) const {
  if (direct_[level]) {
    int64_t stride = res_[level] + 1;
    int64_t idx = vertex[0];
    for (int a = 1; a < dim_; ++a) idx = idx * stride + vertex[a];
    return static_cast<uint32_t>(idx);
  }
  uint32_t h = 0;
  for (int a = 0; a < dim_; ++a)
    h ^= static_cast<uint32_t>(vertex[a]) * kPrimes[a];
  return h & ((uint32_t(1) << table_log2_) - 1u);
}

void HashGrid::encode(const double* q, double* out) const {
  double u[3];
  for (int a = 0; a < dim_; ++a) {
    if (!std::isfinite(q[a]))
      throw std::invalid_argument("HashGrid::encode: non-finite query");
    double c = q[a];
    if (c < box_min_[a]) c = box_min_[a];
    if (c > box_max_[a]) c = box_max_[a];
    u[a] = (c - box_min_[a]) / (box_max_[a] - box_min_[a]);
  }
  const int corners = 1 << dim_;
  for (int l = 0; l < levels_; ++l) {
    const Mat& tab = tables_[l];
    int n = res_[l];
    int cell[3];
    double frac[3];
    for (int a = 0; a < dim_; ++a) {
      double g = u[a] * n;
      int c = static_cast<int>(std::floor(g));
      if (c > n - 1) c = n - 1;
      if (c < 0) c = 0;
      cell[a] = c;
      frac[a] = g - c;
    }
    double* dst = out + l * feat_;
    for (int f = 0; f < feat_; ++f) dst[f] = 0;
    for (int m = 0; m < corners; ++m) {
      int v[3];
      double w = 1;
      for (int a = 0; a < dim_; ++a) {
        int bit = (m >> a) & 1;
        v[a] = cell[a] + bit;
        w *= bit ? frac[a] : 1.0 - frac[a];
      }
      const double* src = tab.row(slot(l, v));
      for (int f = 0; f < feat_; ++f) dst[f] += w * src[f];
    }
  }
}

void HashGrid::encode_backward(const double* q, const double* d_out,
                               Mat* d_tables, double* dq) const {
  double u[3];
  bool clamped[3];
  for (int a = 0; a < dim_; ++a) {
    if (!std::isfinite(q[a]))
      throw std::invalid_argument("HashGrid::encode_backward: non-finite query");
    double c = q[a];
    clamped[a] = c < box_min_[a] || c > box_max_[a];
    if (c < box_min_[a]) c = box_min_[a];
    if (c > box_max_[a]) c = box_max_[a];
    u[a] = (c - box_min_[a]) / (box_max_[a] - box_min_[a]);
  }
  const int corners = 1 << dim_;
  for (int l = 0; l < levels_; ++l) {
    Mat& dtab = d_tables[l];
    const Mat& tab = tables_[l];
    int n = res_[l];
    int cell[3];
    double frac[3];
    for (int a = 0; a < dim_; ++a) {
      double g = u[a] * n;
      int c = static_cast<int>(std::floor(g));
      if (c > n - 1) c = n - 1;
      if (c < 0) c = 0;
      cell[a] = c;
      frac[a] = g - c;
    }
    const double* up = d_out + l * feat_;
    for (int m = 0; m < corners; ++m) {
      int v[3];
      double w = 1;
      for (int a = 0; a < dim_; ++a) {
        int bit = (m >> a) & 1;
        v[a] = cell[a] + bit;
        w *= bit ? frac[a] : 1.0 - frac[a];
      }
      double* drow = dtab.row(slot(l, v));
      const double* srow = tab.row(slot(l, v));
      double gdot = 0;
      for (int f = 0; f < feat_; ++f) {
        drow[f] += w * up[f];
        gdot += up[f] * srow[f];
      }
      // d w / d u_a = (sign) * product of the other axes' factors
      for (int a = 0; a < dim_; ++a) {
        if (clamped[a]) continue;
        int bit = (m >> a) & 1;
        double others = 1;
        for (int b2 = 0; b2 < dim_; ++b2) {
          if (b2 == a) continue;
          int bb = (m >> b2) & 1;
          others *= bb ? frac[b2] : 1.0 - frac[b2];
        }
        double dw_du = (bit ? 1.0 : -1.0) * others * n;
        dq[a] += gdot * dw_du / (box_max_[a] - box_min_[a]);
      }
    }
  }
}

TriPlaneEncoder::TriPlaneEncoder(int levels, int feat, double n_min, double growth,
                                 int table_log2,
                                 const std::array<double, 3>& box_min,
                                 const std::array<double, 3>& box_max)
    : xy_(2, levels, feat, n_min, growth, table_log2,
          {box_min[0], box_min[1], 0}, {box_max[0], box_max[1], 1}),
      yz_(2, levels, feat, n_min, growth, table_log2,
          {box_min[1], box_min[2], 0}, {box_max[1], box_max[2], 1}),
      xz_(2, levels, feat, n_min, growth, table_log2,
          {box_min[0], box_min[2], 0}, {box_max[0], box_max[2], 1}) {}

void TriPlaneEncoder::init_tables(Rng& rng) {
  xy_.init_tables(rng);
  yz_.init_tables(rng);
  xz_.init_tables(rng);
}

HashGrid& TriPlaneEncoder::plane(int i) {
  return i == 0 ? xy_ : (i == 1 ? yz_ : xz_);
}
const HashGrid& TriPlaneEncoder::plane(int i) const {
  return i == 0 ? xy_ : (i == 1 ? yz_ : xz_);
}

void TriPlaneEncoder::encode(const double* x3, double* out) const {
  int d = xy_.out_dim();
  double qxy[2] = {x3[0], x3[1]};
  double qyz[2] = {x3[1], x3[2]};
  double qxz[2] = {x3[0], x3[2]};
  xy_.encode(qxy, out);
  yz_.encode(qyz, out + d);
  xz_.encode(qxz, out + 2 * d);
}

void TriPlaneEncoder::encode_backward(const double* x3, const double* d_out,
                                      std::vector<Mat>& d_xy,
                                      std::vector<Mat>& d_yz,
                                      std::vector<Mat>& d_xz, double* dx3) const {
  int d = xy_.out_dim();
  double qxy[2] = {x3[0], x3[1]};
  double qyz[2] = {x3[1], x3[2]};
  double qxz[2] = {x3[0], x3[2]};
  double g[2];
  g[0] = g[1] = 0;
  xy_.encode_backward(qxy, d_out, d_xy, g);
  dx3[0] += g[0];
  dx3[1] += g[1];
  g[0] = g[1] = 0;
  yz_.encode_backward(qyz, d_out + d, d_yz, g);
  dx3[1] += g[0];
  dx3[2] += g[1];
  g[0] = g[1] = 0;
  xz_.encode_backward(qxz, d_out + 2 * d, d_xz, g);
  dx3[0] += g[0];
  dx3[2] += g[1];
}

void TriPlaneEncoder::encode_backward_flat(const double* x3, const double* d_out,
                                           Mat* d_tables, double* dx3) const {
  const int d = xy_.out_dim();
  const int lv = xy_.levels();
  double qxy[2] = {x3[0], x3[1]};
  double qyz[2] = {x3[1], x3[2]};
  double qxz[2] = {x3[0], x3[2]};
  double g[2];
  g[0] = g[1] = 0;
  xy_.encode_backward(qxy, d_out, d_tables, g);
  if (dx3) {
    dx3[0] += g[0];
    dx3[1] += g[1];
  }
  g[0] = g[1] = 0;
  yz_.encode_backward(qyz, d_out + d, d_tables + lv, g);
  if (dx3) {
    dx3[1] += g[0];
    dx3[2] += g[1];
  }
  g[0] = g[1] = 0;
  xz_.encode_backward(qxz, d_out + 2 * d, d_tables + 2 * lv, g);
  if (dx3) {
    dx3[0] += g[0];
    dx3[2] += g[1];
  }
}

GridEncoder::GridEncoder(Kind kind, int levels, int feat, double n_min,
                         double growth, int table_log2,
                         const std::array<double, 3>& box_min,
                         const std::array<double, 3>& box_max)
    : kind_(kind) {
  if (kind_ == Kind::Hash3D)
    hash_ = HashGrid(3, levels, feat, n_min, growth, table_log2, box_min, box_max);
  else
    tri_ = TriPlaneEncoder(levels, feat, n_min, growth, table_log2, box_min, box_max);
}

int GridEncoder::out_dim() const {
  return kind_ == Kind::Hash3D ? hash_.out_dim() : tri_.out_dim();
}

int GridEncoder::table_count() const {
  return kind_ == Kind::Hash3D ? hash_.levels() : 3 * tri_.plane(0).levels();
}

Mat& GridEncoder::table(int i) {
  if (kind_ == Kind::Hash3D) return hash_.tables()[i];
  const int lv = tri_.plane(0).levels();
  return tri_.plane(i / lv).tables()[i % lv];
}

const Mat& GridEncoder::table(int i) const {
  return const_cast<GridEncoder*>(this)->table(i);
}

std::vector<Mat> GridEncoder::make_table_grads() const {
  std::vector<Mat> g;
  for (int i = 0; i < table_count(); ++i) {
    const Mat& t = table(i);
    g.emplace_back(t.rows, t.cols);
  }
  return g;
}

void GridEncoder::init_tables(Rng& rng) {
  if (kind_ == Kind::Hash3D)
    hash_.init_tables(rng);
  else
    tri_.init_tables(rng);
}

void GridEncoder::encode(const double* x3, double* out) const {
  if (kind_ == Kind::Hash3D)
    hash_.encode(x3, out);
  else
    tri_.encode(x3, out);
}

void GridEncoder::encode_backward(const double* x3, const double* d_out,
                                  Mat* d_tables, double* dx3) const {
  if (kind_ == Kind::Hash3D) {
    double g[3] = {0, 0, 0};
    hash_.encode_backward(x3, d_out, d_tables, g);
    if (dx3)
      for (int a = 0; a < 3; ++a) dx3[a] += g[a];
  } else {
    tri_.encode_backward_flat(x3, d_out, d_tables, dx3);
  }
}

}  // namespace splat
