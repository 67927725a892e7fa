#include <cmath>

#include "doctest.h"
#include "splat/parallel.hpp"
#include "splat/pipeline.hpp"
#include "support/fd.hpp"

using namespace splat;
using testsup::rel_err;

namespace {

PipelineConfig tiny_config() {
  PipelineConfig cfg;
  cfg.spatial_levels = 2;
  cfg.spatial_feat = 2;
  cfg.spatial_n_min = 2;
  cfg.spatial_growth = 1.5;
  cfg.spatial_log2 = 8;
  cfg.point_levels = 2;
  cfg.point_feat = 2;
  cfg.point_n_min = 2;
  cfg.point_growth = 1.5;
  cfg.point_log2 = 8;
  cfg.f_cond = 6;
  cfg.hidden = 8;
  cfg.window = 2;
  cfg.a2p.f_audio = 10;
  cfg.a2p.tcn_channels = 8;
  cfg.a2p.dilations = {1, 2};
  cfg.a2p.latent = 6;
  cfg.a2p.embed = 4;
  cfg.a2p.hidden = 8;
  return cfg;
}

Mat lip_disc(int64_t m, uint64_t seed) {
  Mat pts(m, 3);
  Rng rng(seed);
  for (int64_t i = 0; i < m; ++i) {
    pts(i, 0) = rng.uniform(-0.15, 0.15);
    pts(i, 1) = rng.uniform(-0.15, 0.15);
    pts(i, 2) = rng.uniform(-0.05, 0.05);
  }
  return pts;
}

DeformModel tiny_model(uint64_t seed) {
  PipelineConfig cfg = tiny_config();
  Mat tmpl = lip_disc(12, seed);
  std::vector<int64_t> idx;
  for (int64_t i = 0; i < 12; ++i) idx.push_back(i);
  DeformModel m(cfg, {-1.5, -1.5, -1.5}, {1.5, 1.5, 1.5}, 3.0, tmpl, idx,
                {-0.25, -0.25, -0.25}, {0.25, 0.25, 0.25});
  Rng rng(seed + 1);
  m.init(rng);
  return m;
}

GaussianSet tiny_scene(int64_t n, uint64_t seed) {
  Rng rng(seed);
  GaussianSet s;
  s.pos = Mat(n, 3);
  s.rot = Mat(n, 4);
  s.log_scale = Mat(n, 3);
  s.opacity_raw = Mat(n, 1);
  s.color = Mat(n, 3);
  s.landmark.assign(n, 0);
  s.box_min = {-1.5, -1.5, -1.5};
  s.box_max = {1.5, 1.5, 1.5};
  for (int64_t i = 0; i < n; ++i) {
    s.pos(i, 0) = rng.uniform(-0.8, 0.8);
    s.pos(i, 1) = rng.uniform(-0.6, 0.6);
    s.pos(i, 2) = rng.uniform(-0.5, 0.5);
    for (int c = 0; c < 4; ++c) s.rot(i, c) = rng.normal();
    for (int c = 0; c < 3; ++c) s.log_scale(i, c) = std::log(rng.uniform(0.1, 0.35));
    s.opacity_raw(i, 0) = logit(rng.uniform(0.3, 0.8));
    for (int c = 0; c < 3; ++c) s.color(i, c) = rng.uniform(0.1, 0.9);
  }
  return s;
}

Camera tiny_cam(int w = 20, int h = 16) {
  return look_at_camera(Vec3{0, 0, -3}, Vec3{0, 0, 0}, Vec3{0, 1, 0}, 24, 24, w,
                        h, 0.01);
}

}  // namespace

TEST_CASE("point row mapping clamps to the difference-row range") {
  CHECK(DeformModel::point_row_for_frame(0, 6) == 0);
  CHECK(DeformModel::point_row_for_frame(1, 6) == 0);
  CHECK(DeformModel::point_row_for_frame(2, 6) == 1);
  CHECK(DeformModel::point_row_for_frame(5, 6) == 4);
}

TEST_CASE("freshly initialized model renders bitwise identical to the static head") {
  DeformModel model = tiny_model(9001);
  GaussianSet set = tiny_scene(10, 9002);
  SynthesizedAudio synth = synthesize_benchmark_audio({9, 10, 25.0, 1.0}, 9003);
  ConditionRun run = model.run_conditions(synth.audio, false);
  Mat f_c = model.spatial_features(set);
  Camera cam = tiny_cam();
  RenderOptions opt;
  FrameBuffer ref = rasterize(set, DeformDelta{}, cam, opt);
  for (int64_t t : {0, 3, 8}) {
    FrameBuffer fb = model.render_frame(set, f_c, run, t, cam, opt);
    REQUIRE(fb.color.px.size() == ref.color.px.size());
    for (size_t i = 0; i < ref.color.px.size(); ++i)
      CHECK(fb.color.px[i] == ref.color.px[i]);
  }
}

TEST_CASE("deform_at validates run state and frame range") {
  DeformModel model = tiny_model(9101);
  GaussianSet set = tiny_scene(4, 9102);
  Mat f_c = model.spatial_features(set);
  ConditionRun empty;
  CHECK_THROWS_AS(model.deform_at(f_c, empty, 0), StateError);
  SynthesizedAudio synth = synthesize_benchmark_audio({5, 10, 25.0, 1.0}, 9103);
  ConditionRun run = model.run_conditions(synth.audio, false);
  CHECK_THROWS_AS(model.deform_at(f_c, run, 5), ShapeError);
  CHECK_THROWS_AS(model.deform_at(f_c, run, -1), ShapeError);
}

TEST_CASE("render and conditions are invariant to the thread count") {
  DeformModel model = tiny_model(9201);
  // nonzero decoder output so the deformation path is exercised
  Rng rng(9202);
  for (int64_t i = 0; i < model.decoder.adaptive.weights()[1].size(); ++i)
    model.decoder.adaptive.weights()[1].v[i] = rng.normal() * 0.4;
  GaussianSet set = tiny_scene(12, 9203);
  SynthesizedAudio synth = synthesize_benchmark_audio({7, 10, 25.0, 1.0}, 9204);
  Camera cam = tiny_cam(26, 18);
  RenderOptions opt;

  set_num_threads(1);
  ConditionRun run1 = model.run_conditions(synth.audio, false);
  Mat f1 = model.spatial_features(set);
  FrameBuffer fb1 = model.render_frame(set, f1, run1, 4, cam, opt);

  set_num_threads(4);
  ConditionRun run4 = model.run_conditions(synth.audio, false);
  Mat f4 = model.spatial_features(set);
  FrameBuffer fb4 = model.render_frame(set, f4, run4, 4, cam, opt);
  set_num_threads(1);

  for (int64_t i = 0; i < run1.a_rows.size(); ++i)
    CHECK(run1.a_rows.v[i] == run4.a_rows.v[i]);
  for (int64_t i = 0; i < run1.p_rows.size(); ++i)
    CHECK(run1.p_rows.v[i] == run4.p_rows.v[i]);
  for (size_t i = 0; i < fb1.color.px.size(); ++i)
    CHECK(fb1.color.px[i] == fb4.color.px[i]);
}

TEST_CASE("full model gradients pass finite differences end to end") {
  DeformModel model = tiny_model(9301);
  GaussianSet set = tiny_scene(4, 9302);
  SynthesizedAudio synth = synthesize_benchmark_audio({6, 10, 25.0, 1.0}, 9303);
  const AudioFeatureSequence& audio = synth.audio;
  Camera cam = tiny_cam(16, 12);
  RenderOptions opt;
  const int64_t frame = 3;
  const double lambda_cl = 0.01;

  Rng rng(9304);
  // break the identity init so gradients flow through the decoder
  for (int64_t i = 0; i < model.decoder.adaptive.weights()[1].size(); ++i)
    model.decoder.adaptive.weights()[1].v[i] = rng.normal() * 0.5;
  for (int64_t i = 0; i < model.decoder.adaptive.biases()[1].size(); ++i)
    model.decoder.adaptive.biases()[1].v[i] = rng.normal() * 0.2;
  // grid tables initialize near zero; rescale so FD probes resolve
  for (int i = 0; i < model.spatial.table_count(); ++i)
    for (int64_t j = 0; j < model.spatial.table(i).size(); ++j)
      model.spatial.table(i).v[j] *= 1e4;
  for (int i = 0; i < model.point_enc.table_count(); ++i)
    for (int64_t j = 0; j < model.point_enc.table(i).size(); ++j)
      model.point_enc.table(i).v[j] *= 1e4;

  Mat coef(int64_t(cam.height), int64_t(cam.width) * 3);
  Rng crng(9305);
  for (int64_t i = 0; i < coef.size(); ++i) coef.v[i] = crng.uniform(-1, 1);

  auto loss = [&] {
    ConditionRun run = model.run_conditions(audio, false);
    Mat f_c = model.spatial_features(set);
    FrameBuffer fb = model.render_frame(set, f_c, run, frame, cam, opt);
    double acc = lambda_cl * model.contrastive(run, nullptr);
    for (size_t i = 0; i < fb.color.px.size(); ++i)
      acc += coef.v[int64_t(i)] * fb.color.px[i];
    return acc;
  };

  ConditionRun run = model.run_conditions(audio, true);
  Mat f_c = model.spatial_features(set);
  FrameCache fcache;
  model.render_frame(set, f_c, run, frame, cam, opt, &fcache);
  ModelGrads g = model.make_grads(audio.features.rows, true);
  Mat d_f_c(f_c.rows, f_c.cols);
  model.backward_frame(fcache, coef.v, run, frame, g, d_f_c);
  model.contrastive(run, &g, lambda_cl);
  model.backward_conditions(run, g);
  model.backward_spatial(set, d_f_c, g);

  ParamStore ps;
  const int gt = ps.add_group("tables", 1e-2);
  const int gn = ps.add_group("nets", 1e-3);
  model.register_params(ps, true, gt, gn);
  ps.zero_grads();
  model.add_grads(ps, g);

  int probed = 0;
  for (auto& e : ps.entries()) {
    const int64_t stride = std::max<int64_t>(1, e.p->size() / 4);
    for (int64_t i = 0; i < e.p->size(); i += stride) {
      const double analytic = e.grad.v[i];
      const double num = testsup::central_diff(loss, e.p->v[i], 1e-4);
      if (std::fabs(analytic) < 1e-8 && std::fabs(num) < 1e-6) continue;
      INFO(e.name, " [", i, "] analytic=", analytic, " numeric=", num);
      CHECK(rel_err(analytic, num) < 2e-3);
      ++probed;
    }
  }
  CHECK(probed > 30);
}
