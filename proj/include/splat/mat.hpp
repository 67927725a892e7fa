#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "splat/errors.hpp"

namespace splat {

// Dense row-major double matrix. The workhorse container for batched
// features, network weights and gradients.
struct Mat {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int64_t r, int64_t c) : rows(r), cols(c), v(static_cast<size_t>(r * c), 0.0) {}

  static Mat zeros(int64_t r, int64_t c) { return Mat(r, c); }

  double& operator()(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols + c)]; }
  double operator()(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols + c)]; }

  double* row(int64_t r) { return v.data() + r * cols; }
  const double* row(int64_t r) const { return v.data() + r * cols; }

  int64_t size() const { return rows * cols; }
  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

void require_shape(const Mat& m, int64_t rows, int64_t cols, const char* what);

// C = A * B. Parallel over rows of C; the inner loop order is fixed, so the
// result does not depend on the thread count.
Mat matmul(const Mat& a, const Mat& b);
// C = A^T * B  (a: k x m, b: k x n -> m x n)
Mat matmul_tn(const Mat& a, const Mat& b);
// C = A * B^T  (a: m x k, b: n x k -> m x n)
Mat matmul_nt(const Mat& a, const Mat& b);

// y += x (elementwise), shapes must match
void add_inplace(Mat& y, const Mat& x);
// out[r] = m[r] + bias for every row
void add_row_inplace(Mat& m, const std::vector<double>& bias);
// column sums (length cols)
std::vector<double> col_sum(const Mat& m);

Mat hadamard(const Mat& a, const Mat& b);

// [a | b] along columns
Mat hconcat(const Mat& a, const Mat& b);

}  // namespace splat
