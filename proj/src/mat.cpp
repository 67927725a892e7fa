#include "splat/mat.hpp"

#include <string>

#include "splat/parallel.hpp"

namespace splat {

void require_shape(const Mat& m, int64_t rows, int64_t cols, const char* what) {
  if (m.rows != rows || m.cols != cols) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) +
                     "x" + std::to_string(cols) + ", got " +
                     std::to_string(m.rows) + "x" + std::to_string(m.cols));
  }
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) throw ShapeError("matmul: inner dimensions disagree");
  Mat c(a.rows, b.cols);
  const int64_t K = a.cols, N = b.cols;
  parallel_for(a.rows, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      const double* ai = a.row(i);
      double* ci = c.row(i);
      for (int64_t k = 0; k < K; ++k) {
        double aik = ai[k];
        if (aik == 0.0) continue;
        const double* bk = b.row(k);
        for (int64_t j = 0; j < N; ++j) ci[j] += aik * bk[j];
      }
    }
  });
  return c;
}

Mat matmul_tn(const Mat& a, const Mat& b) {
  if (a.rows != b.rows) throw ShapeError("matmul_tn: leading dimensions disagree");
  Mat c(a.cols, b.cols);
  const int64_t K = a.rows, N = b.cols;
  parallel_for(a.cols, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      double* ci = c.row(i);
      for (int64_t k = 0; k < K; ++k) {
        double aki = a(k, i);
        if (aki == 0.0) continue;
        const double* bk = b.row(k);
        for (int64_t j = 0; j < N; ++j) ci[j] += aki * bk[j];
      }
    }
  });
  return c;
}

Mat matmul_nt(const Mat& a, const Mat& b) {
  if (a.cols != b.cols) throw ShapeError("matmul_nt: trailing dimensions disagree");
  Mat c(a.rows, b.rows);
  const int64_t K = a.cols, N = b.rows;
  parallel_for(a.rows, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      const double* ai = a.row(i);
      double* ci = c.row(i);
      for (int64_t j = 0; j < N; ++j) {
        const double* bj = b.row(j);
        double s = 0.0;
        for (int64_t k = 0; k < K; ++k) s += ai[k] * bj[k];
        ci[j] = s;
      }
    }
  });
  return c;
}

void add_inplace(Mat& y, const Mat& x) {
  if (!y.same_shape(x)) throw ShapeError("add_inplace: shape mismatch");
  for (int64_t i = 0; i < y.size(); ++i) y.v[i] += x.v[i];
}

void add_row_inplace(Mat& m, const std::vector<double>& bias) {
  if (static_cast<int64_t>(bias.size()) != m.cols)
    throw ShapeError("add_row_inplace: bias width mismatch");
  for (int64_t i = 0; i < m.rows; ++i) {
    double* r = m.row(i);
    for (int64_t j = 0; j < m.cols; ++j) r[j] += bias[j];
  }
}

std::vector<double> col_sum(const Mat& m) {
  std::vector<double> s(m.cols, 0.0);
  for (int64_t i = 0; i < m.rows; ++i) {
    const double* r = m.row(i);
    for (int64_t j = 0; j < m.cols; ++j) s[j] += r[j];
  }
  return s;
}

Mat hadamard(const Mat& a, const Mat& b) {
  if (!a.same_shape(b)) throw ShapeError("hadamard: shape mismatch");
  Mat c(a.rows, a.cols);
  for (int64_t i = 0; i < a.size(); ++i) c.v[i] = a.v[i] * b.v[i];
  return c;
}

Mat hconcat(const Mat& a, const Mat& b) {
  if (a.rows != b.rows) throw ShapeError("hconcat: row counts disagree");
  Mat c(a.rows, a.cols + b.cols);
  for (int64_t i = 0; i < a.rows; ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    const double* bi = b.row(i);
    for (int64_t j = 0; j < a.cols; ++j) ci[j] = ai[j];
    for (int64_t j = 0; j < b.cols; ++j) ci[a.cols + j] = bi[j];
  }
  return c;
}

}  // namespace splat
