#include <cmath>

#include "doctest.h"
#include "splat/nn.hpp"
#include "support/fd.hpp"

using namespace splat;
using testsup::rel_err;

namespace {

Mat random_mat(int64_t r, int64_t c, Rng& rng) {
  Mat m(r, c);
  for (auto& x : m.v) x = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("zero net maps everything to zero") {
  DenseNet net({3, 4}, {Act::Identity});
  Mat x(2, 3);
  x.v = {1, -2, 3, 0.5, 0.25, -1};
  Mat y = net.forward(x);
  for (double v : y.v) CHECK(v == 0.0);
}

TEST_CASE("single identity layer is an exact affine map") {
  Rng rng(51);
  DenseNet net({3, 2}, {Act::Identity});
  net.init_glorot(rng);
  net.biases()[0].v = {0.5, -0.25};
  Mat x = random_mat(4, 3, rng);
  Mat y = net.forward(x);
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 2; ++j) {
      double want = net.biases()[0].v[j];
      for (int64_t k = 0; k < 3; ++k) want += x(i, k) * net.weights()[0](k, j);
      CHECK(y(i, j) == doctest::Approx(want).epsilon(1e-14));
    }
}

TEST_CASE("ReLU zeroes all-negative pre-activations") {
  DenseNet net({2, 3}, {Act::ReLU});
  net.weights()[0].fill(0.0);
  net.biases()[0].v = {-1, -0.5, -2};
  Mat x(1, 2);
  x.v = {3, 4};
  Mat y = net.forward(x);
  for (double v : y.v) CHECK(v == 0.0);
}

TEST_CASE("identity-map net passes the upstream gradient through") {
  DenseNet net({3, 3}, {Act::Identity});
  for (int i = 0; i < 3; ++i) net.weights()[0](i, i) = 1.0;
  Mat x(2, 3);
  x.v = {1, 2, 3, 4, 5, 6};
  DenseCache cache;
  net.forward_cached(x, cache);
  Mat up(2, 3);
  up.v = {0.1, -0.2, 0.3, 0.4, -0.5, 0.6};
  DenseGrads g;
  Mat dx = net.backward(cache, up, g);
  for (int64_t i = 0; i < up.size(); ++i) CHECK(dx.v[i] == up.v[i]);
}

TEST_CASE("dense backward matches finite differences on a random 2-layer net") {
  Rng rng(52);
  DenseNet net({4, 6, 3}, {Act::Tanh, Act::Identity});
  net.init_glorot(rng);
  Mat x = random_mat(5, 4, rng);
  Mat up = random_mat(5, 3, rng);
  auto loss = [&]() {
    Mat y = net.forward(x);
    double s = 0;
    for (int64_t i = 0; i < y.size(); ++i) s += up.v[i] * y.v[i];
    return s;
  };
  DenseCache cache;
  net.forward_cached(x, cache);
  DenseGrads g;
  Mat dx = net.backward(cache, up, g);
  std::vector<GradCheckTarget> targets;
  for (int l = 0; l < net.layer_count(); ++l) {
    targets.push_back({"w" + std::to_string(l), &net.weights()[l], &g.dW[l]});
    targets.push_back({"b" + std::to_string(l), &net.biases()[l], &g.db[l]});
  }
  targets.push_back({"x", &x, &dx});
  auto rep = gradcheck(loss, targets, 1e-5, 256);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("every activation kind differentiates correctly") {
  Rng rng(53);
  for (Act a : {Act::Identity, Act::ReLU, Act::Sigmoid, Act::Tanh, Act::Exp}) {
    DenseNet net({3, 3}, {a});
    net.init_glorot(rng);
    // keep pre-activations away from the ReLU kink
    net.biases()[0].v = {0.3, 0.4, 0.5};
    Mat x = random_mat(2, 3, rng);
    Mat up = random_mat(2, 3, rng);
    auto loss = [&]() {
      Mat y = net.forward(x);
      double s = 0;
      for (int64_t i = 0; i < y.size(); ++i) s += up.v[i] * y.v[i];
      return s;
    };
    DenseCache cache;
    net.forward_cached(x, cache);
    DenseGrads g;
    Mat dx = net.backward(cache, up, g);
    std::vector<GradCheckTarget> targets{{"w", &net.weights()[0], &g.dW[0]},
                                         {"x", &x, &dx}};
    auto rep = gradcheck(loss, targets, 1e-6, 64);
    CHECK(rep.max_rel_err < 1e-6);
  }
}

TEST_CASE("zero upstream yields zero gradients") {
  Rng rng(54);
  DenseNet net({3, 5, 2}, {Act::Sigmoid, Act::Identity});
  net.init_glorot(rng);
  Mat x = random_mat(3, 3, rng);
  DenseCache cache;
  net.forward_cached(x, cache);
  DenseGrads g;
  Mat dx = net.backward(cache, Mat(3, 2), g);
  for (double v : dx.v) CHECK(v == 0.0);
  for (auto& m : g.dW)
    for (double v : m.v) CHECK(v == 0.0);
}

TEST_CASE("backward without forward cache is a state error") {
  DenseNet net({2, 2}, {Act::Identity});
  DenseCache cache;
  DenseGrads g;
  CHECK_THROWS_AS(net.backward(cache, Mat(1, 2), g), StateError);
}

TEST_CASE("shape mismatches are rejected") {
  DenseNet net({3, 2}, {Act::Identity});
  CHECK_THROWS_AS(net.forward(Mat(1, 4)), ShapeError);
  CHECK_THROWS_AS(DenseNet({3}, {}), ShapeError);
  CHECK_THROWS_AS(DenseNet({3, 2}, {Act::Identity, Act::Identity}), ShapeError);
}

TEST_CASE("adam leaves parameters unchanged on zero gradient") {
  ParamStore store;
  int g = store.add_group("net", 1e-2);
  Mat p(2, 2);
  p.v = {1, 2, 3, 4};
  store.reg("p", &p, g);
  store.zero_grads();
  store.adam_step();
  CHECK(p.v == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("single adam step from zero state moves by about -lr*sign(g)") {
  ParamStore store;
  int g = store.add_group("net", 1e-3);
  Mat p(1, 2);
  p.v = {0.5, -0.5};
  store.reg("p", &p, g);
  store.zero_grads();
  store.grad("p").v = {0.3, -40.0};
  store.adam_step();
  // hand oracle: mhat = g, vhat = g^2, update = -lr * g/(|g|+eps) = -lr sign(g)
  CHECK(p.v[0] == doctest::Approx(0.5 - 1e-3).epsilon(1e-9));
  CHECK(p.v[1] == doctest::Approx(-0.5 + 1e-3).epsilon(1e-9));
}

TEST_CASE("constant gradient drives parameters at the asymptotic rate") {
  ParamStore store;
  int g = store.add_group("net", 1e-2);
  Mat p(1, 1);
  p.v = {0.0};
  store.reg("p", &p, g);
  double prev = 0;
  for (int i = 0; i < 200; ++i) {
    store.zero_grads();
    store.grad("p").v[0] = 2.5;
    store.adam_step();
    if (i >= 150) CHECK((prev - p.v[0]) == doctest::Approx(1e-2).epsilon(1e-3));
    prev = p.v[0];
  }
}

TEST_CASE("adam is bitwise deterministic") {
  auto run = []() {
    ParamStore store;
    int g = store.add_group("net", 3e-3);
    Mat p(2, 3);
    Rng rng(55);
    for (auto& x : p.v) x = rng.normal();
    store.reg("p", &p, g);
    for (int i = 0; i < 50; ++i) {
      store.zero_grads();
      for (auto& x : store.grad("p").v) x = rng.normal();
      store.adam_step();
    }
    return p.v;
  };
  CHECK(run() == run());
}

TEST_CASE("NaN gradient aborts naming the parameter") {
  ParamStore store;
  int g = store.add_group("net", 1e-3);
  Mat p(1, 2);
  store.reg("offender", &p, g);
  store.zero_grads();
  store.grad("offender").v[1] = std::nan("");
  try {
    store.adam_step();
    FAIL("expected TrainAbortError");
  } catch (const TrainAbortError& e) {
    CHECK(std::string(e.what()).find("offender") != std::string::npos);
  }
}

TEST_CASE("duplicate registration is rejected") {
  ParamStore store;
  int g = store.add_group("net", 1e-3);
  Mat p(1, 1);
  store.reg("p", &p, g);
  CHECK_THROWS_AS(store.reg("p", &p, g), StateError);
}

TEST_CASE("rebind_rows moves moments with rows and zeroes fresh ones") {
  ParamStore store;
  int g = store.add_group("pos", 1e-2);
  Mat p(2, 2);
  p.v = {1, 1, 2, 2};
  store.reg("p", &p, g);
  store.zero_grads();
  store.grad("p").v = {1, 2, 3, 4};
  store.adam_step();
  auto m_before = store.entry("p").m;
  // grow to 3 rows: row0 <- old row1, row1 <- old row1, row2 fresh
  p = Mat(3, 2);
  store.rebind_rows("p", {1, 1, -1});
  auto& e = store.entry("p");
  CHECK(e.m(0, 0) == m_before(1, 0));
  CHECK(e.m(1, 1) == m_before(1, 1));
  CHECK(e.m(2, 0) == 0.0);
  CHECK(e.v(2, 1) == 0.0);
  CHECK(e.grad.rows == 3);
}

TEST_CASE("gradcheck on a linear function reports near-zero error") {
  Mat p(1, 4);
  p.v = {1, -2, 3, 0.5};
  Mat coef(1, 4);
  coef.v = {2, 0.5, -1, 4};
  auto loss = [&]() {
    double s = 0;
    for (int i = 0; i < 4; ++i) s += coef.v[i] * p.v[i];
    return s;
  };
  auto rep = gradcheck(loss, {{"p", &p, &coef}}, 1e-5, 64);
  CHECK(rep.max_rel_err < 1e-9);
}

TEST_CASE("gradcheck on a quadratic meets the truncation-error bound") {
  Mat p(1, 3);
  p.v = {0.7, -1.2, 2.1};
  Mat grad(1, 3);
  for (int i = 0; i < 3; ++i) grad.v[i] = 2 * p.v[i];
  auto loss = [&]() {
    double s = 0;
    for (int i = 0; i < 3; ++i) s += p.v[i] * p.v[i];
    return s;
  };
  auto rep = gradcheck(loss, {{"p", &p, &grad}}, 1e-5, 64);
  CHECK(rep.max_rel_err < 1e-7);
}

TEST_CASE("gradcheck flags a corrupted gradient") {
  Mat p(1, 2);
  p.v = {1.0, 2.0};
  Mat grad(1, 2);
  grad.v = {2.0, 4.5};  // second entry corrupted (true value 4.0)
  auto loss = [&]() { return p.v[0] * p.v[0] + p.v[1] * p.v[1]; };
  auto rep = gradcheck(loss, {{"p", &p, &grad}}, 1e-5, 64);
  CHECK(rep.max_rel_err > 0.05);
  CHECK(rep.worst_param == "p");
  CHECK(rep.worst_index == 1);
}
