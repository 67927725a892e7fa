#include "doctest.h"
#include "splat/mat.hpp"
#include "splat/parallel.hpp"
#include "splat/rng.hpp"

using namespace splat;

namespace {

// Triple-loop oracle.
Mat matmul_naive(const Mat& a, const Mat& b) {
  Mat c(a.rows, b.cols);
  for (int64_t i = 0; i < a.rows; ++i)
    for (int64_t j = 0; j < b.cols; ++j) {
      double s = 0;
      for (int64_t k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

Mat random_mat(int64_t r, int64_t c, Rng& rng) {
  Mat m(r, c);
  for (auto& x : m.v) x = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("matmul matches the triple-loop oracle") {
  Rng rng(21);
  for (auto [r, k, c] : {std::tuple{1, 1, 1}, {3, 4, 5}, {7, 2, 9}, {16, 16, 16}}) {
    Mat a = random_mat(r, k, rng);
    Mat b = random_mat(k, c, rng);
    Mat got = matmul(a, b);
    Mat want = matmul_naive(a, b);
    REQUIRE(got.same_shape(want));
    for (int64_t i = 0; i < got.size(); ++i)
      CHECK(got.v[i] == doctest::Approx(want.v[i]).epsilon(1e-13));
  }
}

TEST_CASE("matmul is bitwise independent of the thread count") {
  Rng rng(22);
  Mat a = random_mat(13, 7, rng);
  Mat b = random_mat(7, 11, rng);
  set_num_threads(1);
  Mat t1 = matmul(a, b);
  set_num_threads(4);
  Mat t4 = matmul(a, b);
  set_num_threads(1);
  for (int64_t i = 0; i < t1.size(); ++i) CHECK(t1.v[i] == t4.v[i]);
}

TEST_CASE("transposed variants agree with explicit transposition") {
  Rng rng(23);
  Mat a = random_mat(6, 4, rng);
  Mat b = random_mat(6, 5, rng);
  Mat at(4, 6);
  for (int64_t i = 0; i < 6; ++i)
    for (int64_t j = 0; j < 4; ++j) at(j, i) = a(i, j);
  Mat want = matmul_naive(at, b);
  Mat got = matmul_tn(a, b);
  REQUIRE(got.same_shape(want));
  for (int64_t i = 0; i < got.size(); ++i)
    CHECK(got.v[i] == doctest::Approx(want.v[i]).epsilon(1e-13));

  Mat c = random_mat(3, 4, rng);
  Mat d = random_mat(5, 4, rng);
  Mat dt(4, 5);
  for (int64_t i = 0; i < 5; ++i)
    for (int64_t j = 0; j < 4; ++j) dt(j, i) = d(i, j);
  Mat want2 = matmul_naive(c, dt);
  Mat got2 = matmul_nt(c, d);
  REQUIRE(got2.same_shape(want2));
  for (int64_t i = 0; i < got2.size(); ++i)
    CHECK(got2.v[i] == doctest::Approx(want2.v[i]).epsilon(1e-13));
}

TEST_CASE("matmul rejects mismatched shapes") {
  CHECK_THROWS_AS(matmul(Mat(2, 3), Mat(4, 2)), ShapeError);
  CHECK_THROWS_AS(matmul_tn(Mat(2, 3), Mat(3, 2)), ShapeError);
  CHECK_THROWS_AS(matmul_nt(Mat(2, 3), Mat(2, 2)), ShapeError);
}

TEST_CASE("elementwise helpers") {
  Mat a(2, 2);
  a.v = {1, 2, 3, 4};
  Mat b(2, 2);
  b.v = {10, 20, 30, 40};
  add_inplace(a, b);
  CHECK(a.v == std::vector<double>{11, 22, 33, 44});

  add_row_inplace(a, {1, -1});
  CHECK(a.v == std::vector<double>{12, 21, 34, 43});

  auto cs = col_sum(a);
  CHECK(cs == std::vector<double>{46, 64});

  Mat h = hadamard(a, b);
  CHECK(h.v == std::vector<double>{120, 420, 1020, 1720});

  Mat cat = hconcat(a, b);
  REQUIRE(cat.rows == 2);
  REQUIRE(cat.cols == 4);
  CHECK(cat.v == std::vector<double>{12, 21, 10, 20, 34, 43, 30, 40});
}
