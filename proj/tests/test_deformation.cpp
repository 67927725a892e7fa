#include <cmath>

#include "doctest.h"
#include "splat/deformation.hpp"
#include "splat/rasterizer.hpp"
#include "support/fd.hpp"

using namespace splat;
using testsup::rel_err;

namespace {

Mat random_mat(int64_t r, int64_t c, uint64_t seed, double lo = -1, double hi = 1) {
  Mat m(r, c);
  Rng rng(seed);
  for (int64_t i = 0; i < m.size(); ++i) m.v[i] = rng.uniform(lo, hi);
  return m;
}

void zero_net(DenseNet& net) {
  for (auto& w : net.weights()) w.fill(0.0);
  for (auto& b : net.biases()) b.fill(0.0);
}

GaussianSet small_scene(int64_t n, uint64_t seed) {
  Rng rng(seed);
  GaussianSet s;
  s.pos = Mat(n, 3);
  s.rot = Mat(n, 4);
  s.log_scale = Mat(n, 3);
  s.opacity_raw = Mat(n, 1);
  s.color = Mat(n, 3);
  s.landmark.assign(n, 0);
  s.box_min = {-2, -2, -2};
  s.box_max = {2, 2, 2};
  for (int64_t i = 0; i < n; ++i) {
    s.pos(i, 0) = rng.uniform(-0.9, 0.9);
    s.pos(i, 1) = rng.uniform(-0.6, 0.6);
    s.pos(i, 2) = rng.uniform(-0.5, 0.5);
    for (int c = 0; c < 4; ++c) s.rot(i, c) = rng.normal();
    for (int c = 0; c < 3; ++c) s.log_scale(i, c) = std::log(rng.uniform(0.1, 0.4));
    s.opacity_raw(i, 0) = logit(rng.uniform(0.3, 0.8));
    for (int c = 0; c < 3; ++c) s.color(i, c) = rng.uniform(0.1, 0.9);
  }
  return s;
}

}  // namespace

TEST_CASE("adain fuse with zero nets is the identity") {
  DeformationDecoder dec(4, 6, 8, 2.0);
  Rng rng(7001);
  dec.init(rng);
  zero_net(dec.scale_net);
  zero_net(dec.shift_net);
  Mat f_c = random_mat(5, 6, 7002);
  Mat fa = random_mat(5, 4, 7003), fp = random_mat(5, 4, 7004);
  Mat fused = adain_fuse(dec, f_c, fa, fp);
  for (int64_t i = 0; i < f_c.size(); ++i) CHECK(fused.v[i] == f_c.v[i]);
}

TEST_CASE("adain fuse with scale forced to minus one keeps only the shift") {
  DeformationDecoder dec(3, 5, 6, 2.0);
  Rng rng(7101);
  dec.init(rng);
  zero_net(dec.scale_net);
  dec.scale_net.biases()[1].fill(-1.0);
  Mat f_c = random_mat(4, 5, 7102);
  Mat fa = random_mat(4, 3, 7103), fp = random_mat(4, 3, 7104);
  Mat fused = adain_fuse(dec, f_c, fa, fp);
  Mat shift = dec.shift_net.forward(hconcat(fa, fp));
  for (int64_t i = 0; i < fused.size(); ++i) CHECK(fused.v[i] == shift.v[i]);
}

TEST_CASE("adain fuse matches a rowwise scalar oracle") {
  DeformationDecoder dec(4, 7, 9, 2.0);
  Rng rng(7201);
  dec.init(rng);
  Mat f_c = random_mat(6, 7, 7202);
  Mat fa = random_mat(6, 4, 7203), fp = random_mat(6, 4, 7204);
  Mat fused = adain_fuse(dec, f_c, fa, fp);
  for (int64_t i = 0; i < 6; ++i) {
    Mat cond(1, 8);
    for (int64_t j = 0; j < 4; ++j) {
      cond(0, j) = fa(i, j);
      cond(0, 4 + j) = fp(i, j);
    }
    Mat sc = dec.scale_net.forward(cond), sh = dec.shift_net.forward(cond);
    for (int64_t j = 0; j < 7; ++j)
      CHECK(fused(i, j) == (1.0 + sc(0, j)) * f_c(i, j) + sh(0, j));
  }
}

TEST_CASE("adain fuse rejects mismatched shapes") {
  DeformationDecoder dec(3, 5, 6, 2.0);
  Rng rng(7301);
  dec.init(rng);
  Mat f_c = random_mat(4, 5, 7302);
  Mat fa = random_mat(4, 3, 7303), fp = random_mat(3, 3, 7304);
  CHECK_THROWS_AS(adain_fuse(dec, f_c, fa, fp), ShapeError);
  Mat wide = random_mat(4, 4, 7305);
  CHECK_THROWS_AS(adain_fuse(dec, f_c, wide, wide), ShapeError);
}

TEST_CASE("adain fuse backward matches finite differences") {
  DeformationDecoder dec(3, 5, 6, 2.0);
  Rng rng(7401);
  dec.init(rng);
  Mat f_c = random_mat(4, 5, 7402);
  Mat fa = random_mat(4, 3, 7403), fp = random_mat(4, 3, 7404);
  Mat coef = random_mat(4, 5, 7405);
  auto loss = [&] {
    Mat fused = adain_fuse(dec, f_c, fa, fp);
    double acc = 0;
    for (int64_t i = 0; i < fused.size(); ++i) acc += coef.v[i] * fused.v[i];
    return acc;
  };
  AdainCache cache;
  adain_fuse(dec, f_c, fa, fp, &cache);
  DenseGrads gs = dec.scale_net.make_grads(), gh = dec.shift_net.make_grads();
  Mat d_fa(4, 3), d_fp(4, 3);
  Mat d_fc = adain_fuse_backward(dec, cache, coef, gs, gh, d_fa, d_fp);
  auto probe = [&](Mat& param, const Mat& grad, int64_t stride) {
    for (int64_t i = 0; i < param.size(); i += stride) {
      double num = testsup::central_diff(loss, param.v[i]);
      CHECK(rel_err(grad.v[i], num) < 1e-6);
    }
  };
  probe(dec.scale_net.weights()[0], gs.dW[0], 3);
  probe(dec.scale_net.weights()[1], gs.dW[1], 4);
  probe(dec.shift_net.weights()[0], gh.dW[0], 3);
  probe(f_c, d_fc, 2);
  probe(fa, d_fa, 1);
  probe(fp, d_fp, 1);
}

TEST_CASE("zero-initialized decoder emits exactly zero deformations") {
  DeformationDecoder dec(4, 6, 8, 3.0);
  Rng rng(7501);
  dec.init(rng);
  Mat f_prime = random_mat(9, 6, 7502, -5, 5);
  Deformation d = decode_deformation(dec, f_prime);
  for (int64_t i = 0; i < d.dx.size(); ++i) CHECK(d.dx.v[i] == 0.0);
  for (int64_t i = 0; i < d.drot.size(); ++i) CHECK(d.drot.v[i] == 0.0);
  for (int64_t i = 0; i < d.dls.size(); ++i) CHECK(d.dls.v[i] == 0.0);
}

TEST_CASE("zero deformation renders bitwise identical to the static scene") {
  GaussianSet set = small_scene(12, 7601);
  Camera cam = look_at_camera(Vec3{0, 0, -3}, Vec3{0, 0, 0}, Vec3{0, 1, 0}, 40,
                              40, 32, 24, 0.01);
  RenderOptions opt;
  FrameBuffer ref = rasterize(set, DeformDelta{}, cam, opt);
  Mat zx(12, 3), zr(12, 4), zs(12, 3);
  DeformDelta delta{&zx, &zr, &zs};
  FrameBuffer got = rasterize(set, delta, cam, opt);
  REQUIRE(got.color.px.size() == ref.color.px.size());
  for (size_t i = 0; i < ref.color.px.size(); ++i)
    CHECK(got.color.px[i] == ref.color.px[i]);
}

TEST_CASE("position deltas are bounded by one percent of scene extent") {
  const double extent = 3.7;
  DeformationDecoder dec(3, 5, 6, extent);
  Rng rng(7701);
  dec.init(rng);
  // huge last-layer bias saturates tanh
  dec.adaptive.biases()[1].fill(1000.0);
  Mat f_prime = random_mat(8, 5, 7702, -10, 10);
  Deformation d = decode_deformation(dec, f_prime);
  const double bound = 0.01 * extent;
  for (int64_t i = 0; i < d.dx.size(); ++i) {
    CHECK(std::fabs(d.dx.v[i]) <= bound);
    CHECK(d.dx.v[i] == bound);  // saturated
  }
}

TEST_CASE("deformed scales stay positive for arbitrary decoder output") {
  DeformationDecoder dec(3, 5, 6, 2.0);
  Rng rng(7801);
  dec.init(rng);
  for (auto& w : dec.adaptive.weights())
    for (int64_t i = 0; i < w.size(); ++i) w.v[i] = rng.uniform(-20, 20);
  Mat f_prime = random_mat(10, 5, 7802, -4, 4);
  Deformation d = decode_deformation(dec, f_prime);
  Mat ls = random_mat(10, 3, 7803, std::log(0.01), std::log(0.5));
  for (int64_t i = 0; i < 10; ++i)
    for (int64_t j = 0; j < 3; ++j)
      CHECK(std::exp(ls(i, j) + d.dls(i, j)) > 0.0);
}

TEST_CASE("decode backward matches finite differences") {
  DeformationDecoder dec(3, 5, 6, 2.0);
  Rng rng(7901);
  dec.init(rng);
  // repopulate the zero-initialized last layer so gradients flow
  for (int64_t i = 0; i < dec.adaptive.weights()[1].size(); ++i)
    dec.adaptive.weights()[1].v[i] = rng.normal() * 0.3;
  for (int64_t i = 0; i < dec.adaptive.biases()[1].size(); ++i)
    dec.adaptive.biases()[1].v[i] = rng.normal() * 0.1;
  Mat f_prime = random_mat(4, 5, 7902);
  Mat cx = random_mat(4, 3, 7903), cr = random_mat(4, 4, 7904),
      cs = random_mat(4, 3, 7905);
  auto loss = [&] {
    Deformation d = decode_deformation(dec, f_prime);
    double acc = 0;
    for (int64_t i = 0; i < d.dx.size(); ++i) acc += cx.v[i] * d.dx.v[i];
    for (int64_t i = 0; i < d.drot.size(); ++i) acc += cr.v[i] * d.drot.v[i];
    for (int64_t i = 0; i < d.dls.size(); ++i) acc += cs.v[i] * d.dls.v[i];
    return acc;
  };
  DecodeCache cache;
  decode_deformation(dec, f_prime, &cache);
  DenseGrads ga = dec.adaptive.make_grads();
  Mat d_fp = decode_deformation_backward(dec, cache, Deformation{cx, cr, cs}, ga);
  for (int64_t i = 0; i < dec.adaptive.weights()[0].size(); i += 3) {
    double num = testsup::central_diff(loss, dec.adaptive.weights()[0].v[i]);
    CHECK(rel_err(ga.dW[0].v[i], num) < 1e-6);
  }
  for (int64_t i = 0; i < dec.adaptive.weights()[1].size(); i += 4) {
    double num = testsup::central_diff(loss, dec.adaptive.weights()[1].v[i]);
    CHECK(rel_err(ga.dW[1].v[i], num) < 1e-6);
  }
  for (int64_t i = 0; i < f_prime.size(); i += 2) {
    double num = testsup::central_diff(loss, f_prime.v[i]);
    CHECK(rel_err(d_fp.v[i], num) < 1e-6);
  }
}

TEST_CASE("rendered-image gradients pass finite differences end to end") {
  const int64_t n = 5;
  GaussianSet set = small_scene(n, 8001);
  Camera cam = look_at_camera(Vec3{0, 0, -3}, Vec3{0, 0, 0}, Vec3{0, 1, 0}, 24,
                              24, 20, 16, 0.01);
  RenderOptions opt;
  DeformationDecoder dec(3, 6, 8, set.extent());
  Rng rng(8002);
  dec.init(rng);
  for (int64_t i = 0; i < dec.adaptive.weights()[1].size(); ++i)
    dec.adaptive.weights()[1].v[i] = rng.normal() * 0.5;
  Mat f_c = random_mat(n, 6, 8003);
  Mat fa = random_mat(n, 3, 8004), fp = random_mat(n, 3, 8005);
  Mat coef = random_mat(int64_t(cam.height), int64_t(cam.width) * 3, 8006);

  auto loss = [&] {
    Mat fused = adain_fuse(dec, f_c, fa, fp);
    Deformation d = decode_deformation(dec, fused);
    DeformDelta delta{&d.dx, &d.drot, &d.dls};
    FrameBuffer fb = rasterize(set, delta, cam, opt);
    double acc = 0;
    for (size_t i = 0; i < fb.color.px.size(); ++i)
      acc += coef.v[int64_t(i)] * fb.color.px[i];
    return acc;
  };

  AdainCache ac;
  DecodeCache dc;
  RasterCache rc;
  Mat fused = adain_fuse(dec, f_c, fa, fp, &ac);
  Deformation d = decode_deformation(dec, fused, &dc);
  DeformDelta delta{&d.dx, &d.drot, &d.dls};
  rasterize(set, delta, cam, opt, &rc);
  RasterGrads rg;
  rg.init(n);
  rasterize_backward(rc, coef.v, rg);
  DenseGrads ga = dec.adaptive.make_grads();
  Deformation d_delta{rg.pos, rg.rot, rg.log_scale};
  Mat d_fused = decode_deformation_backward(dec, dc, d_delta, ga);
  DenseGrads gs = dec.scale_net.make_grads(), gh = dec.shift_net.make_grads();
  Mat d_fa(n, 3), d_fp(n, 3);
  Mat d_fc = adain_fuse_backward(dec, ac, d_fused, gs, gh, d_fa, d_fp);

  auto probe = [&](Mat& param, const Mat& grad, int64_t stride) {
    for (int64_t i = 0; i < param.size(); i += stride) {
      double num = testsup::central_diff(loss, param.v[i], 1e-5);
      if (grad.v[i] == 0.0 && std::fabs(num) < 1e-9) continue;
      CHECK(rel_err(grad.v[i], num) < 1e-3);
    }
  };
  probe(dec.adaptive.weights()[1], ga.dW[1], 7);
  probe(dec.scale_net.weights()[0], gs.dW[0], 11);
  probe(dec.shift_net.weights()[0], gh.dW[0], 11);
  probe(f_c, d_fc, 5);
  probe(fa, d_fa, 3);
  probe(fp, d_fp, 3);
}
