#include <cmath>
#include <cstdio>
#include <vector>

#include "doctest.h"
#include "splat/conditions.hpp"
#include "splat/serial.hpp"
#include "support/fd.hpp"

using namespace splat;

namespace {

Mat random_mat(int64_t r, int64_t c, uint64_t seed, double lo = -1, double hi = 1) {
  Mat m(r, c);
  Rng rng(seed);
  for (int64_t i = 0; i < m.size(); ++i) m.v[i] = rng.uniform(lo, hi);
  return m;
}

std::string temp_path(const char* name) {
  return std::string("/tmp/splat_test_") + name;
}

GridEncoder small_grid(uint64_t seed, GridEncoder::Kind kind = GridEncoder::Kind::Hash3D) {
  GridEncoder g(kind, 3, 2, 2.0, 1.6, 10, {-1, -1, -1}, {1, 1, 1});
  Rng rng(seed);
  g.init_tables(rng);
  return g;
}

}  // namespace

TEST_CASE("feature file round-trips through f32") {
  AudioFeatureSequence seq;
  seq.fps = 25.0;
  seq.features = random_mat(7, 5, 3001);
  const std::string path = temp_path("feat.bin");
  write_feature_file(path, seq);
  AudioFeatureSequence back = read_feature_file(path);
  CHECK(back.features.rows == 7);
  CHECK(back.features.cols == 5);
  CHECK(back.fps == 25.0);
  for (int64_t i = 0; i < seq.features.size(); ++i)
    CHECK(back.features.v[i] == double(float(seq.features.v[i])));
  std::remove(path.c_str());
}

TEST_CASE("truncated and mis-tagged feature files raise parse errors") {
  AudioFeatureSequence seq;
  seq.features = random_mat(4, 3, 3002);
  const std::string path = temp_path("feat_trunc.bin");
  write_feature_file(path, seq);
  std::vector<uint8_t> bytes = read_file_bytes(path);
  bytes.resize(bytes.size() - 5);
  write_file_bytes(path, bytes);
  CHECK_THROWS_AS(read_feature_file(path), ParseError);
  bytes[0] = 'X';
  write_file_bytes(path, bytes);
  CHECK_THROWS_AS(read_feature_file(path), ParseError);
  std::remove(path.c_str());
}

TEST_CASE("synthesized audio loads back with configured shape") {
  AudioSynthConfig cfg;
  cfg.t_frames = 12;
  cfg.f_a = 10;
  cfg.fps = 30.0;
  SynthesizedAudio synth = synthesize_benchmark_audio(cfg, 77);
  const std::string path = temp_path("feat_synth.bin");
  write_feature_file(path, synth.audio);
  AudioFeatureSequence back = read_feature_file(path);
  CHECK(back.features.rows == 12);
  CHECK(back.features.cols == 10);
  CHECK(back.fps == 30.0);
  std::remove(path.c_str());
}

TEST_CASE("lip file round-trips and rejects damage") {
  std::vector<Mat> frames{random_mat(5, 3, 3003), random_mat(5, 3, 3004)};
  const std::string path = temp_path("lip.bin");
  write_lip_file(path, frames);
  std::vector<Mat> back = read_lip_file(path);
  REQUIRE(back.size() == 2);
  for (int t = 0; t < 2; ++t)
    for (int64_t i = 0; i < frames[t].size(); ++i)
      CHECK(back[t].v[i] == double(float(frames[t].v[i])));
  std::vector<uint8_t> bytes = read_file_bytes(path);
  bytes.resize(bytes.size() - 2);
  write_file_bytes(path, bytes);
  CHECK_THROWS_AS(read_lip_file(path), ParseError);
  std::remove(path.c_str());
}

TEST_CASE("tcn receptive field and causality") {
  Tcn tcn(3, 4, {1, 2, 4, 8});
  CHECK(tcn.receptive_field() == 31);
  Rng rng(3100);
  tcn.init_glorot(rng);
  Mat a = random_mat(40, 3, 3101);
  Mat out_a = tcn.forward(a);
  Mat b = a;
  for (int64_t j = 0; j < 3; ++j) b(25, j) += 0.5;
  Mat out_b = tcn.forward(b);
  for (int64_t t = 0; t < 25; ++t)
    for (int64_t c = 0; c < 4; ++c) CHECK(out_a(t, c) == out_b(t, c));
  bool differs = false;
  for (int64_t c = 0; c < 4; ++c) differs |= out_a(25, c) != out_b(25, c);
  CHECK(differs);
}

TEST_CASE("tcn on a constant sequence is constant beyond warmup") {
  Tcn tcn(2, 3, {1, 2, 4, 8});
  Rng rng(3200);
  tcn.init_glorot(rng);
  Mat x(45, 2);
  for (int64_t t = 0; t < 45; ++t) {
    x(t, 0) = 0.37;
    x(t, 1) = -0.21;
  }
  Mat y = tcn.forward(x);
  const int64_t warm = tcn.receptive_field() - 1;
  for (int64_t t = warm; t < 45; ++t)
    for (int64_t c = 0; c < 3; ++c) CHECK(y(t, c) == y(warm, c));
}

TEST_CASE("tcn backward matches finite differences") {
  Tcn tcn(2, 3, {1, 2});
  Rng rng(3300);
  tcn.init_glorot(rng);
  Mat x = random_mat(9, 2, 3301);
  Mat coef = random_mat(9, 3, 3302);
  auto loss = [&] {
    Mat y = tcn.forward(x);
    double acc = 0;
    for (int64_t i = 0; i < y.size(); ++i) acc += coef.v[i] * y.v[i];
    return acc;
  };
  Tcn::Cache cache;
  tcn.forward(x, &cache);
  std::vector<Mat> dw, db;
  for (const Mat& w : tcn.weights()) dw.emplace_back(w.rows, w.cols);
  for (const Mat& b : tcn.biases()) db.emplace_back(b.rows, b.cols);
  Mat dx = tcn.backward(cache, coef, dw, db);
  for (int l = 0; l < 2; ++l) {
    for (int64_t i = 0; i < tcn.weights()[l].size(); i += 5) {
      double num = testsup::central_diff(loss, tcn.weights()[l].v[i]);
      CHECK(testsup::rel_err(dw[l].v[i], num) < 1e-6);
    }
    for (int64_t i = 0; i < tcn.biases()[l].size(); ++i) {
      double num = testsup::central_diff(loss, tcn.biases()[l].v[i]);
      CHECK(testsup::rel_err(db[l].v[i], num) < 1e-6);
    }
  }
  for (int64_t i = 0; i < x.size(); i += 3) {
    double num = testsup::central_diff(loss, x.v[i]);
    CHECK(testsup::rel_err(dx.v[i], num) < 1e-6);
  }
}

TEST_CASE("audio2point with zero-initialized decoder reproduces the template") {
  Audio2PointConfig cfg;
  cfg.f_audio = 6;
  cfg.tcn_channels = 8;
  cfg.latent = 8;
  cfg.embed = 4;
  cfg.hidden = 12;
  Mat tmpl = random_mat(10, 3, 3400);
  std::vector<int64_t> idx{0, 2, 3, 5, 9};
  Audio2PointNet net(cfg, tmpl, idx);
  Rng rng(3401);
  net.init(rng);
  Mat audio = random_mat(8, 6, 3402);
  std::vector<Mat> frames = net.forward(audio);
  REQUIRE(frames.size() == 8);
  for (const Mat& fr : frames) {
    REQUIRE(fr.rows == 5);
    for (size_t j = 0; j < idx.size(); ++j)
      for (int k = 0; k < 3; ++k)
        CHECK(fr(int64_t(j), k) == tmpl(idx[j], k));
  }
  Mat bad = random_mat(8, 7, 3403);
  CHECK_THROWS_AS(net.forward(bad), ShapeError);
}

TEST_CASE("audio2point backward matches finite differences") {
  Audio2PointConfig cfg;
  cfg.f_audio = 4;
  cfg.tcn_channels = 6;
  cfg.dilations = {1, 2};
  cfg.latent = 5;
  cfg.embed = 3;
  cfg.hidden = 7;
  Mat tmpl = random_mat(6, 3, 3500);
  std::vector<int64_t> idx{0, 1, 3, 4};
  Audio2PointNet net(cfg, tmpl, idx);
  Rng rng(3501);
  net.init(rng);
  // zero-initialized last layer blocks gradient flow probes; fill it in
  Mat& last_w = net.decoder().weights().back();
  Mat& last_b = net.decoder().biases().back();
  Rng fill(3502);
  for (int64_t i = 0; i < last_w.size(); ++i) last_w.v[i] = 0.2 * fill.normal();
  for (int64_t i = 0; i < last_b.size(); ++i) last_b.v[i] = 0.1 * fill.normal();

  Mat audio = random_mat(7, 4, 3503);
  std::vector<Mat> coef;
  for (int t = 0; t < 7; ++t) coef.push_back(random_mat(4, 3, 3504 + t));
  auto loss = [&] {
    std::vector<Mat> frames = net.forward(audio);
    double acc = 0;
    for (size_t t = 0; t < frames.size(); ++t)
      for (int64_t i = 0; i < frames[t].size(); ++i)
        acc += coef[t].v[i] * frames[t].v[i];
    return acc;
  };
  Audio2PointNet::Cache cache;
  net.forward(audio, &cache);
  Audio2PointNet::Grads g = net.make_grads();
  net.backward(cache, coef, g);

  auto probe = [&](Mat& param, const Mat& grad, int64_t stride) {
    for (int64_t i = 0; i < param.size(); i += stride) {
      double num = testsup::central_diff(loss, param.v[i]);
      CHECK(testsup::rel_err(grad.v[i], num) < 1e-6);
    }
  };
  probe(net.tcn().weights()[0], g.tcn_w[0], 7);
  probe(net.tcn().weights()[1], g.tcn_w[1], 11);
  probe(net.encoder().weights()[0], g.enc.dW[0], 5);
  probe(net.decoder().weights()[0], g.dec.dW[0], 5);
  probe(net.decoder().weights()[1], g.dec.dW[1], 13);
  probe(net.embedding(), g.embed, 1);
}

TEST_CASE("frame point feature: repeated point makes mean equal max") {
  GridEncoder grid = small_grid(3600);
  DenseNet proj({2 * grid.out_dim(), 5}, {Act::Identity});
  Rng rng(3601);
  proj.init_glorot(rng);
  Mat pts(4, 3);
  for (int64_t i = 0; i < 4; ++i) {
    pts(i, 0) = 0.31;
    pts(i, 1) = -0.12;
    pts(i, 2) = 0.55;
  }
  PointFeatureCache cache;
  frame_point_feature(grid, proj, pts, &cache);
  const int d = grid.out_dim();
  std::vector<double> enc(static_cast<size_t>(d), 0.0);
  grid.encode(pts.row(0), enc.data());
  for (int j = 0; j < d; ++j) {
    CHECK(cache.pooled(0, j) == doctest::Approx(enc[size_t(j)]).epsilon(1e-15));
    CHECK(cache.pooled(0, d + j) == enc[size_t(j)]);
  }
}

TEST_CASE("frame point feature is exactly permutation invariant") {
  GridEncoder grid = small_grid(3700);
  DenseNet proj({2 * grid.out_dim(), 6}, {Act::Identity});
  Rng rng(3701);
  proj.init_glorot(rng);
  Mat pts = random_mat(17, 3, 3702, -0.9, 0.9);
  Mat perm(17, 3);
  std::vector<int> order(17);
  for (int i = 0; i < 17; ++i) order[i] = (i * 5 + 3) % 17;
  for (int i = 0; i < 17; ++i)
    for (int k = 0; k < 3; ++k) perm(i, k) = pts(order[i], k);
  Mat a = frame_point_feature(grid, proj, pts);
  Mat b = frame_point_feature(grid, proj, perm);
  for (int64_t j = 0; j < a.cols; ++j) CHECK(a(0, j) == b(0, j));
}

TEST_CASE("frame point feature matches an unpooled loop reference") {
  GridEncoder grid = small_grid(3800);
  DenseNet proj({2 * grid.out_dim(), 4}, {Act::Identity});
  Rng rng(3801);
  proj.init_glorot(rng);
  Mat pts = random_mat(9, 3, 3802, -0.8, 0.8);
  const int d = grid.out_dim();
  Mat enc(9, d);
  for (int64_t i = 0; i < 9; ++i) grid.encode(pts.row(i), enc.row(i));
  Mat pooled(1, 2 * d);
  for (int j = 0; j < d; ++j) {
    double mean = 0, best = enc(0, j);
    for (int64_t i = 0; i < 9; ++i) {
      mean += enc(i, j);
      best = std::max(best, enc(i, j));
    }
    pooled(0, j) = mean / 9.0;
    pooled(0, d + j) = best;
  }
  Mat expect = proj.forward(pooled);
  Mat got = frame_point_feature(grid, proj, pts);
  for (int64_t j = 0; j < got.cols; ++j)
    CHECK(got(0, j) == doctest::Approx(expect(0, j)).epsilon(1e-13));
}

TEST_CASE("frame point feature backward matches finite differences") {
  GridEncoder grid = small_grid(3900);
  DenseNet proj({2 * grid.out_dim(), 4}, {Act::Identity});
  Rng rng(3901);
  proj.init_glorot(rng);
  // larger table magnitudes so central differences dominate rounding noise
  for (int i = 0; i < grid.table_count(); ++i)
    for (int64_t k = 0; k < grid.table(i).size(); ++k) grid.table(i).v[k] *= 1e4;
  Mat pts = random_mat(5, 3, 3902, -0.7, 0.7);
  Mat coef = random_mat(1, 4, 3903);
  auto loss = [&] {
    Mat r = frame_point_feature(grid, proj, pts);
    double acc = 0;
    for (int64_t j = 0; j < 4; ++j) acc += coef(0, j) * r(0, j);
    return acc;
  };
  PointFeatureCache cache;
  frame_point_feature(grid, proj, pts, &cache);
  std::vector<Mat> d_tables = grid.make_table_grads();
  DenseGrads d_proj = proj.make_grads();
  Mat d_points(5, 3);
  frame_point_feature_backward(grid, proj, pts, cache, coef, d_tables, d_proj, &d_points);
  int probed = 0;
  for (int tb = 0; tb < grid.table_count() && probed < 24; ++tb)
    for (int64_t k = 0; k < d_tables[tb].size() && probed < 24; ++k)
      if (d_tables[tb].v[k] != 0.0) {
        double num = testsup::central_diff(loss, grid.table(tb).v[k], 1e-3);
        CHECK(testsup::rel_err(d_tables[tb].v[k], num) < 1e-6);
        ++probed;
      }
  CHECK(probed > 0);
  for (int64_t i = 0; i < d_points.size(); i += 2) {
    double num = testsup::central_diff(loss, pts.v[i], 1e-6);
    CHECK(testsup::rel_err(d_points.v[i], num) < 2e-5);
  }
  for (int64_t i = 0; i < proj.weights()[0].size(); i += 7) {
    double num = testsup::central_diff(loss, proj.weights()[0].v[i], 1e-3);
    CHECK(testsup::rel_err(d_proj.dW[0].v[i], num) < 1e-6);
  }
}

TEST_CASE("difference encode requires two frames and encodes statics to equal rows") {
  GridEncoder grid = small_grid(4000);
  DenseNet proj({2 * grid.out_dim(), 5}, {Act::Identity});
  DenseNet mlp({5, 8, 5}, {Act::ReLU, Act::Identity});
  Rng rng(4001);
  proj.init_glorot(rng);
  mlp.init_glorot(rng);
  std::vector<Mat> one{random_mat(6, 3, 4002)};
  CHECK_THROWS_AS(dynamic_difference_encode(grid, proj, mlp, one), std::invalid_argument);
  Mat frame = random_mat(6, 3, 4003, -0.8, 0.8);
  std::vector<Mat> still{frame, frame, frame, frame};
  Mat rows = dynamic_difference_encode(grid, proj, mlp, still);
  CHECK(rows.rows == 3);
  Mat zero(1, 5);
  Mat expect = mlp.forward(zero);
  for (int64_t t = 0; t < rows.rows; ++t)
    for (int64_t j = 0; j < rows.cols; ++j) CHECK(rows(t, j) == expect(0, j));
}

TEST_CASE("time reversal negates the pre-mlp differences") {
  GridEncoder grid = small_grid(4100);
  DenseNet proj({2 * grid.out_dim(), 5}, {Act::Identity});
  DenseNet mlp({5, 6, 5}, {Act::ReLU, Act::Identity});
  Rng rng(4101);
  proj.init_glorot(rng);
  mlp.init_glorot(rng);
  std::vector<Mat> frames;
  for (int t = 0; t < 5; ++t) frames.push_back(random_mat(7, 3, 4102 + t, -0.8, 0.8));
  std::vector<Mat> rev(frames.rbegin(), frames.rend());
  Mat d_fwd, d_rev;
  dynamic_difference_encode(grid, proj, mlp, frames, &d_fwd);
  dynamic_difference_encode(grid, proj, mlp, rev, &d_rev);
  REQUIRE(d_fwd.rows == 4);
  for (int64_t t = 0; t < 4; ++t)
    for (int64_t j = 0; j < d_fwd.cols; ++j)
      CHECK(d_fwd(t, j) == -d_rev(3 - t, j));
}

TEST_CASE("dynamic difference encode matches independent composition and commutes with cropping") {
  GridEncoder grid = small_grid(4200);
  DenseNet proj({2 * grid.out_dim(), 5}, {Act::Identity});
  DenseNet mlp({5, 9, 5}, {Act::ReLU, Act::Identity});
  Rng rng(4201);
  proj.init_glorot(rng);
  mlp.init_glorot(rng);
  std::vector<Mat> frames;
  for (int t = 0; t < 7; ++t) frames.push_back(random_mat(8, 3, 4202 + t, -0.8, 0.8));
  Mat full = dynamic_difference_encode(grid, proj, mlp, frames);

  // suboperations composed independently
  Mat rows = point_feature_rows(grid, proj, frames);
  Mat diffs(6, 5);
  for (int64_t t = 0; t < 6; ++t)
    for (int64_t j = 0; j < 5; ++j) diffs(t, j) = rows(t + 1, j) - rows(t, j);
  Mat expect = mlp.forward(diffs);
  for (int64_t i = 0; i < full.size(); ++i) CHECK(full.v[i] == expect.v[i]);

  // cropping commutation: frames [2..5] give rows [2..4] of the full encoding
  std::vector<Mat> crop(frames.begin() + 2, frames.begin() + 6);
  Mat part = dynamic_difference_encode(grid, proj, mlp, crop);
  REQUIRE(part.rows == 3);
  for (int64_t t = 0; t < 3; ++t)
    for (int64_t j = 0; j < 5; ++j) CHECK(part(t, j) == full(t + 2, j));
}

TEST_CASE("difference encode backward matches finite differences") {
  DenseNet mlp({4, 6, 4}, {Act::Tanh, Act::Identity});
  Rng rng(4300);
  mlp.init_glorot(rng);
  Mat rows = random_mat(5, 4, 4301);
  Mat coef = random_mat(4, 4, 4302);
  auto loss = [&] {
    Mat out = difference_encode(mlp, rows);
    double acc = 0;
    for (int64_t i = 0; i < out.size(); ++i) acc += coef.v[i] * out.v[i];
    return acc;
  };
  DenseCache cache;
  difference_encode(mlp, rows, &cache);
  DenseGrads g = mlp.make_grads();
  Mat d_rows = difference_encode_backward(mlp, cache, coef, g);
  for (int64_t i = 0; i < rows.size(); ++i) {
    double num = testsup::central_diff(loss, rows.v[i]);
    CHECK(testsup::rel_err(d_rows.v[i], num) < 1e-7);
  }
  for (int64_t i = 0; i < mlp.weights()[0].size(); i += 3) {
    double num = testsup::central_diff(loss, mlp.weights()[0].v[i]);
    CHECK(testsup::rel_err(g.dW[0].v[i], num) < 1e-7);
  }
}

TEST_CASE("synthesized audio is deterministic and honors zero amplitude") {
  AudioSynthConfig cfg;
  cfg.t_frames = 20;
  cfg.f_a = 12;
  SynthesizedAudio a = synthesize_benchmark_audio(cfg, 99);
  SynthesizedAudio b = synthesize_benchmark_audio(cfg, 99);
  for (int64_t i = 0; i < a.audio.features.size(); ++i)
    CHECK(a.audio.features.v[i] == b.audio.features.v[i]);
  for (size_t t = 0; t < a.opening.size(); ++t) {
    CHECK(a.opening[t] == b.opening[t]);
    CHECK(a.sway[t] == b.sway[t]);
  }
  cfg.amplitude = 0.0;
  SynthesizedAudio z = synthesize_benchmark_audio(cfg, 99);
  for (int64_t i = 0; i < z.audio.features.size(); ++i) CHECK(z.audio.features.v[i] == 0.0);
  for (size_t t = 0; t < z.opening.size(); ++t) {
    CHECK(z.opening[t] == 0.0);
    CHECK(z.sway[t] == 0.0);
  }
}

TEST_CASE("opening track equals the analytic function of the first band") {
  AudioSynthConfig cfg;
  cfg.t_frames = 30;
  cfg.f_a = 16;
  cfg.amplitude = 0.8;
  SynthesizedAudio s = synthesize_benchmark_audio(cfg, 123);
  for (int64_t t = 0; t < cfg.t_frames; ++t) {
    const double a0 = s.audio.features(t, 0);
    const double o = cfg.amplitude * 0.5 * (a0 / cfg.amplitude + 1.0);
    CHECK(s.opening[size_t(t)] == doctest::Approx(o).epsilon(1e-12));
    CHECK(s.opening[size_t(t)] >= 0.0);
    CHECK(s.opening[size_t(t)] <= cfg.amplitude);
  }
}
