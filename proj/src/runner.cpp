#include "splat/runner.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "splat/benchmark.hpp"
#include "splat/deformation.hpp"
#include "splat/parallel.hpp"
#include "splat/rasterizer.hpp"
#include "splat/training.hpp"

namespace splat {

namespace {

constexpr double kStrictTol = 1e-5;
constexpr double kChainTol = 1e-3;

GradCheckRow make_row(const std::string& module, const GradCheckReport& rep,
                      double tol) {
  GradCheckRow row;
  row.module = module;
  row.max_rel_err = rep.max_rel_err;
  row.tolerance = tol;
  row.probes = rep.probes;
  row.worst_param = rep.worst_param;
  row.pass = rep.max_rel_err < tol && rep.probes > 0;
  return row;
}

Mat random_mat(Rng& rng, int64_t r, int64_t c, double scale) {
  Mat m(r, c);
  for (auto& v : m.v) v = scale * rng.normal();
  return m;
}

double weighted_sum(const Mat& m, const Mat& coef) {
  double s = 0;
  for (int64_t i = 0; i < m.size(); ++i) s += m.v[i] * coef.v[i];
  return s;
}

void randomize_net(DenseNet& net, Rng& rng, double scale) {
  for (auto& w : net.weights())
    for (auto& v : w.v) v = scale * rng.normal();
  for (auto& b : net.biases())
    for (auto& v : b.v) v = scale * rng.normal();
}

void add_net_targets(std::vector<GradCheckTarget>& targets,
                     const std::string& prefix, DenseNet& net,
                     const DenseGrads& g) {
  for (size_t i = 0; i < net.weights().size(); ++i) {
    targets.push_back({prefix + ".w" + std::to_string(i), &net.weights()[i],
                       &g.dW[i]});
    targets.push_back({prefix + ".b" + std::to_string(i), &net.biases()[i],
                       &g.db[i]});
  }
}

GradCheckRow check_dense_net(Rng rng) {
  DenseNet net({5, 7, 6, 4}, {Act::ReLU, Act::Tanh, Act::Identity});
  net.init_glorot(rng);
  Mat x = random_mat(rng, 3, 5, 1.0);
  Mat coef = random_mat(rng, 3, 4, 1.0);

  DenseCache cache;
  DenseGrads g = net.make_grads();
  net.forward_cached(x, cache);
  Mat d_out = coef;
  Mat d_x = net.backward(cache, d_out, g);

  std::vector<GradCheckTarget> targets;
  add_net_targets(targets, "dense", net, g);
  targets.push_back({"input", &x, &d_x});
  auto loss = [&] { return weighted_sum(net.forward(x), coef); };
  return make_row("dense_net", gradcheck(loss, targets), kStrictTol);
}

GradCheckRow check_grid(GridEncoder::Kind kind, const std::string& name,
                        Rng rng) {
  GridEncoder enc(kind, 3, 2, 2.0, 1.7, 6, {-1, -1, -1}, {1, 1, 1});
  enc.init_tables(rng);
  for (int i = 0; i < enc.table_count(); ++i)
    for (auto& v : enc.table(i).v) v = rng.normal();

  const int64_t q = 10;
  Mat pts = random_mat(rng, q, 3, 0.6);
  Mat coef = random_mat(rng, q, enc.out_dim(), 1.0);

  std::vector<Mat> d_tables = enc.make_table_grads();
  Mat d_pts(q, 3);
  auto forward_all = [&] {
    Mat out(q, enc.out_dim());
    std::vector<double> row(size_t(enc.out_dim()));
    for (int64_t i = 0; i < q; ++i) {
      enc.encode(&pts(i, 0), row.data());
      for (int c = 0; c < enc.out_dim(); ++c) out(i, c) = row[size_t(c)];
    }
    return out;
  };
  for (int64_t i = 0; i < q; ++i)
    enc.encode_backward(&pts(i, 0), &coef(i, 0), d_tables.data(), &d_pts(i, 0));

  std::vector<GradCheckTarget> targets;
  for (int i = 0; i < enc.table_count(); ++i)
    targets.push_back({"table" + std::to_string(i), &enc.table(i),
                       &d_tables[size_t(i)]});
  targets.push_back({"queries", &pts, &d_pts});
  auto loss = [&] { return weighted_sum(forward_all(), coef); };
  return make_row(name, gradcheck(loss, targets), kStrictTol);
}

GradCheckRow check_point_feature(Rng rng) {
  GridEncoder enc(GridEncoder::Kind::Hash3D, 2, 2, 2.0, 1.6, 6, {-1, -1, -1},
                  {1, 1, 1});
  for (int i = 0; i < enc.table_count(); ++i)
    for (auto& v : enc.table(i).v) v = rng.normal();
  DenseNet proj({2 * enc.out_dim(), 5}, {Act::Identity});
  proj.init_glorot(rng);
  Mat pts = random_mat(rng, 9, 3, 0.5);
  Mat coef = random_mat(rng, 1, 5, 1.0);

  PointFeatureCache cache;
  frame_point_feature(enc, proj, pts, &cache);
  std::vector<Mat> d_tables = enc.make_table_grads();
  DenseGrads d_proj = proj.make_grads();
  Mat d_pts(pts.rows, 3);
  frame_point_feature_backward(enc, proj, pts, cache, coef, d_tables, d_proj,
                               &d_pts);

  std::vector<GradCheckTarget> targets;
  for (int i = 0; i < enc.table_count(); ++i)
    targets.push_back({"table" + std::to_string(i), &enc.table(i),
                       &d_tables[size_t(i)]});
  add_net_targets(targets, "proj", proj, d_proj);
  targets.push_back({"points", &pts, &d_pts});
  auto loss = [&] { return weighted_sum(frame_point_feature(enc, proj, pts), coef); };
  return make_row("point_feature", gradcheck(loss, targets), kStrictTol);
}

GradCheckRow check_difference_encoder(Rng rng) {
  DenseNet mlp({4, 6, 4}, {Act::ReLU, Act::Identity});
  mlp.init_glorot(rng);
  Mat rows = random_mat(rng, 6, 4, 1.0);
  Mat coef = random_mat(rng, 5, 4, 1.0);

  DenseCache cache;
  difference_encode(mlp, rows, &cache);
  DenseGrads g = mlp.make_grads();
  Mat d_rows = difference_encode_backward(mlp, cache, coef, g);

  std::vector<GradCheckTarget> targets;
  add_net_targets(targets, "mlp", mlp, g);
  targets.push_back({"rows", &rows, &d_rows});
  auto loss = [&] { return weighted_sum(difference_encode(mlp, rows), coef); };
  return make_row("difference_encoder", gradcheck(loss, targets), kStrictTol);
}

GradCheckRow check_temporal_compressor(Rng rng) {
  TemporalCompressor tc(4, 5, 2);
  tc.init(rng);
  Mat feats = random_mat(rng, 7, 4, 1.0);
  Mat coef = random_mat(rng, 7, 5, 1.0);

  TemporalCompressCache cache;
  temporal_compress(tc, feats, &cache);
  DenseGrads g_proj = tc.proj.make_grads(), g_scorer = tc.scorer.make_grads();
  Mat d_feats = temporal_compress_backward(tc, cache, coef, g_proj, g_scorer);

  std::vector<GradCheckTarget> targets;
  add_net_targets(targets, "proj", tc.proj, g_proj);
  add_net_targets(targets, "scorer", tc.scorer, g_scorer);
  targets.push_back({"feats", &feats, &d_feats});
  auto loss = [&] { return weighted_sum(temporal_compress(tc, feats), coef); };
  return make_row("temporal_compressor", gradcheck(loss, targets), kStrictTol);
}

GradCheckRow check_audio_to_point(Rng rng) {
  Audio2PointConfig cfg;
  cfg.f_audio = 6;
  cfg.tcn_channels = 6;
  cfg.dilations = {1, 2};
  cfg.latent = 5;
  cfg.embed = 3;
  cfg.hidden = 7;
  Mat tpl = random_mat(rng, 8, 3, 0.3);
  std::vector<int64_t> idx(8);
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = int64_t(i);
  Audio2PointNet net(cfg, tpl, idx);
  net.init(rng);
  net.decoder().init_glorot(rng);  // replace the quiescent zero last layer

  Mat audio = random_mat(rng, 6, cfg.f_audio, 1.0);
  Mat coef = random_mat(rng, 6, 8 * 3, 1.0);

  Audio2PointNet::Cache cache;
  net.offsets(audio, &cache);
  Audio2PointNet::Grads g = net.make_grads();
  net.backward_offsets(cache, coef, g);

  std::vector<GradCheckTarget> targets;
  for (size_t i = 0; i < net.tcn().weights().size(); ++i) {
    targets.push_back({"tcn.w" + std::to_string(i), &net.tcn().weights()[i],
                       &g.tcn_w[i]});
    targets.push_back({"tcn.b" + std::to_string(i), &net.tcn().biases()[i],
                       &g.tcn_b[i]});
  }
  add_net_targets(targets, "enc", net.encoder(), g.enc);
  add_net_targets(targets, "dec", net.decoder(), g.dec);
  targets.push_back({"embed", &net.embedding(), &g.embed});
  auto loss = [&] { return weighted_sum(net.offsets(audio), coef); };
  return make_row("audio_to_point", gradcheck(loss, targets), kStrictTol);
}

GradCheckRow check_enhancement(Rng rng) {
  const int f_cdim = 5, f_cond = 4, n = 6;
  EnhanceNet net(f_cdim, f_cond, 7);
  net.init(rng);
  Mat f_c = random_mat(rng, n, f_cdim, 1.0);
  Mat a_t = random_mat(rng, 1, f_cond, 1.0);
  Mat p_t = random_mat(rng, 1, f_cond, 1.0);
  Mat coef_a = random_mat(rng, n, f_cond, 1.0);
  Mat coef_p = random_mat(rng, n, f_cond, 1.0);

  EnhanceCache cache;
  Mat fa, fp;
  enhance(net, f_c, &a_t(0, 0), &p_t(0, 0), f_cond, fa, fp, &cache);
  DenseGrads ga = net.mlp_a.make_grads(), gp = net.mlp_p.make_grads(),
             gap = net.mlp_ap.make_grads();
  Mat d_a(1, f_cond), d_p(1, f_cond);
  Mat d_fc = enhance_backward(net, cache, coef_a, coef_p, ga, gp, gap,
                              &d_a(0, 0), &d_p(0, 0));

  std::vector<GradCheckTarget> targets;
  add_net_targets(targets, "mlp_a", net.mlp_a, ga);
  add_net_targets(targets, "mlp_p", net.mlp_p, gp);
  add_net_targets(targets, "mlp_ap", net.mlp_ap, gap);
  targets.push_back({"f_c", &f_c, &d_fc});
  targets.push_back({"a_t", &a_t, &d_a});
  targets.push_back({"p_t", &p_t, &d_p});
  auto loss = [&] {
    Mat la, lp;
    enhance(net, f_c, &a_t(0, 0), &p_t(0, 0), f_cond, la, lp);
    return weighted_sum(la, coef_a) + weighted_sum(lp, coef_p);
  };
  return make_row("enhancement", gradcheck(loss, targets), kStrictTol);
}

GradCheckRow check_contrastive(Rng rng) {
  Mat a = random_mat(rng, 6, 5, 1.0);
  Mat p = random_mat(rng, 6, 5, 1.0);
  ContrastiveOpts opts;
  Mat d_a(6, 5), d_p(6, 5);
  contrastive_loss(a, p, opts, &d_a, &d_p);
  std::vector<GradCheckTarget> targets{{"a_rows", &a, &d_a},
                                       {"p_rows", &p, &d_p}};
  auto loss = [&] { return contrastive_loss(a, p, opts); };
  return make_row("contrastive", gradcheck(loss, targets), kStrictTol);
}

GradCheckRow check_adain_decoder(Rng rng) {
  const int f_cond = 4, f_cdim = 5, n = 6;
  DeformationDecoder dec(f_cond, f_cdim, 7, 2.0);
  dec.init(rng);
  randomize_net(dec.adaptive, rng, 0.4);  // break the quiescent init
  Mat f_c = random_mat(rng, n, f_cdim, 1.0);
  Mat fa = random_mat(rng, n, f_cond, 1.0);
  Mat fp = random_mat(rng, n, f_cond, 1.0);
  Mat cx = random_mat(rng, n, 3, 1.0);
  Mat cr = random_mat(rng, n, 4, 1.0);
  Mat cs = random_mat(rng, n, 3, 1.0);

  auto forward = [&] {
    Mat fused = adain_fuse(dec, f_c, fa, fp);
    Deformation d = decode_deformation(dec, fused);
    return weighted_sum(d.dx, cx) + weighted_sum(d.drot, cr) +
           weighted_sum(d.dls, cs);
  };

  AdainCache ac;
  DecodeCache dc;
  Mat fused = adain_fuse(dec, f_c, fa, fp, &ac);
  decode_deformation(dec, fused, &dc);
  DenseGrads g_scale = dec.scale_net.make_grads(),
             g_shift = dec.shift_net.make_grads(),
             g_adapt = dec.adaptive.make_grads();
  Deformation d_delta{cx, cr, cs};
  Mat d_fused = decode_deformation_backward(dec, dc, d_delta, g_adapt);
  Mat d_fa(n, f_cond), d_fp(n, f_cond);
  Mat d_fc = adain_fuse_backward(dec, ac, d_fused, g_scale, g_shift, d_fa, d_fp);

  std::vector<GradCheckTarget> targets;
  add_net_targets(targets, "scale", dec.scale_net, g_scale);
  add_net_targets(targets, "shift", dec.shift_net, g_shift);
  add_net_targets(targets, "adaptive", dec.adaptive, g_adapt);
  targets.push_back({"f_c", &f_c, &d_fc});
  targets.push_back({"fa_hat", &fa, &d_fa});
  targets.push_back({"fp_hat", &fp, &d_fp});
  return make_row("adain_decoder", gradcheck(forward, targets), kStrictTol);
}

GradCheckRow check_rasterizer_chain(Rng rng) {
  const int64_t n = 8;
  GaussianSet set = init_random(n, {-1, -1, -1}, {1, 1, 1}, rng.next_u64());
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t c = 0; c < 3; ++c) {
      set.pos(i, c) = 0.5 * rng.normal();
      set.log_scale(i, c) = std::log(0.25) + 0.3 * rng.normal();
      set.color(i, c) = 0.2 + 0.6 * rng.uniform();
    }
    for (int64_t c = 0; c < 4; ++c) set.rot(i, c) = rng.normal();
    set.opacity_raw(i, 0) = rng.normal();
  }
  Mat dx = random_mat(rng, n, 3, 0.05);
  Mat drot = random_mat(rng, n, 4, 0.05);
  Mat dls = random_mat(rng, n, 3, 0.05);
  DeformDelta delta{&dx, &drot, &dls};

  Camera cam = look_at_camera({0, 0, -2.5}, {0, 0, 0}, {0, 1, 0}, 18.0, 18.0,
                              16, 12, 0.1);
  RenderOptions opt;
  Mat coef = random_mat(rng, 12, 16 * 3, 1.0);

  RasterCache cache;
  FrameBuffer fb = rasterize(set, delta, cam, opt, &cache);
  RasterGrads g;
  g.init(n);
  rasterize_backward(cache, coef.v, g);

  std::vector<GradCheckTarget> targets{
      {"pos", &set.pos, &g.pos},           {"rot", &set.rot, &g.rot},
      {"log_scale", &set.log_scale, &g.log_scale},
      {"opacity_raw", &set.opacity_raw, &g.opacity_raw},
      {"color", &set.color, &g.color}};
  auto loss = [&] {
    FrameBuffer f = rasterize(set, delta, cam, opt);
    return weighted_sum(Mat{}, Mat{}) + [&] {
      double s = 0;
      for (size_t i = 0; i < f.color.px.size(); ++i) s += f.color.px[i] * coef.v[i];
      return s;
    }();
  };
  return make_row("rasterizer_chain", gradcheck(loss, targets, 1e-5, 48),
                  kChainTol);
}

}  // namespace

std::vector<GradCheckRow> run_gradcheck(uint64_t seed) {
  Rng root(seed, 77);
  std::vector<GradCheckRow> rows;
  rows.push_back(check_dense_net(root.fork(1)));
  rows.push_back(check_grid(GridEncoder::Kind::Hash3D, "hash_grid", root.fork(2)));
  rows.push_back(
      check_grid(GridEncoder::Kind::TriPlane, "triplane_grid", root.fork(3)));
  rows.push_back(check_point_feature(root.fork(4)));
  rows.push_back(check_difference_encoder(root.fork(5)));
  rows.push_back(check_temporal_compressor(root.fork(6)));
  rows.push_back(check_audio_to_point(root.fork(7)));
  rows.push_back(check_enhancement(root.fork(8)));
  rows.push_back(check_contrastive(root.fork(9)));
  rows.push_back(check_adain_decoder(root.fork(10)));
  rows.push_back(check_rasterizer_chain(root.fork(11)));
  return rows;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct CliOpts {
  std::string config, data, out, checkpoint, static_checkpoint, features,
      stage;
  uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  int64_t stop_iteration = -1;
};

RunConfig load_run_config(const CliOpts& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : parse_config(o.config);
  if (o.seed_set) cfg.seed = o.seed;
  return cfg;
}

void apply_threads(const CliOpts& o) {
  if (o.threads > 0) set_num_threads(o.threads);
}

void check_stage(const CliOpts& o, const std::string& expected) {
  if (!o.stage.empty() && o.stage != expected)
    throw StateError("--stage " + o.stage + " does not apply here (expected " +
                     expected + ")");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path + ": cannot open for writing");
  out << text;
  if (!out) throw ParseError(path + ": write failed");
}

// Reproducibility record: config echo location, seed, thread count and the
// files produced. Deliberately no wall-clock content.
void write_run_record(const std::string& dir, const std::string& command,
                      const CliOpts& o, uint64_t seed,
                      const std::vector<std::string>& outputs) {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = o.config.empty() ? "builtin-defaults" : o.config;
  if (!o.data.empty()) j["data"] = o.data;
  j["seed"] = seed;
  j["threads"] = num_threads();
  j["outputs"] = outputs;
  write_text(dir + "/run.json", j.dump(2) + "\n");
}

void write_train_log(const std::string& path,
                     const std::vector<TrainLogRow>& rows) {
  std::string text = train_log_header() + "\n";
  for (const auto& r : rows) text += format_log_row(r) + "\n";
  write_text(path, text);
}

int cmd_gen_data(const CliOpts& o) {
  RunConfig cfg = load_run_config(o);
  apply_threads(o);
  uint64_t seed = o.seed_set ? o.seed : cfg.seed;
  generate_scene(cfg.bench, seed, o.out);
  write_run_record(o.out, "gen-data", o, seed, {"manifest.json"});
  std::cout << "dataset written to " << o.out << "\n";
  return 0;
}

int cmd_train_static(const CliOpts& o) {
  check_stage(o, "static");
  RunConfig cfg = load_run_config(o);
  apply_threads(o);
  TrainDataset data = load_dataset(o.data);
  CheckpointState resume;
  bool has_resume = !o.checkpoint.empty();
  if (has_resume) resume = load_checkpoint(o.checkpoint);
  std::filesystem::create_directories(o.out);

  TrainResult res =
      train_static(data, cfg, has_resume ? &resume : nullptr,
                   [](const TrainLogRow& row) {
                     std::cout << format_log_row(row) << "\n";
                   },
                   o.stop_iteration);
  save_checkpoint(o.out + "/static.ckpt", res.state);
  write_train_log(o.out + "/static_log.csv", res.log);
  write_run_record(o.out, "train-static", o, cfg.seed,
                   {"static.ckpt", "static_log.csv"});
  if (res.aborted) {
    std::cerr << "error: training aborted: " << res.abort_reason
              << " (last good state saved)\n";
    return 3;
  }
  std::cout << "static stage complete at iteration " << res.state.iteration
            << " with " << res.state.set.count() << " gaussians\n";
  return 0;
}

int cmd_train_deform(const CliOpts& o) {
  check_stage(o, "deform");
  RunConfig cfg = load_run_config(o);
  apply_threads(o);
  TrainDataset data = load_dataset(o.data);
  CheckpointState base = load_checkpoint(o.static_checkpoint);
  CheckpointState resume;
  bool has_resume = !o.checkpoint.empty();
  if (has_resume) resume = load_checkpoint(o.checkpoint);
  std::filesystem::create_directories(o.out);

  TrainResult res =
      train_deform(data, cfg, base, has_resume ? &resume : nullptr,
                   [](const TrainLogRow& row) {
                     std::cout << format_log_row(row) << "\n";
                   },
                   o.stop_iteration);
  save_checkpoint(o.out + "/deform.ckpt", res.state);
  write_train_log(o.out + "/deform_log.csv", res.log);
  std::string a2p_text = a2p_log_header() + "\n";
  for (const auto& r : res.a2p_log) a2p_text += format_a2p_log_row(r) + "\n";
  write_text(o.out + "/a2p_log.csv", a2p_text);
  write_run_record(o.out, "train-deform", o, cfg.seed,
                   {"a2p_log.csv", "deform.ckpt", "deform_log.csv"});
  if (res.aborted) {
    std::cerr << "error: training aborted: " << res.abort_reason
              << " (last good state saved)\n";
    return 3;
  }
  std::cout << "deform stage complete at iteration " << res.state.iteration
            << "\n";
  return 0;
}

std::string frame_name(int64_t t, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05" PRId64 "%s", t, ext);
  return buf;
}

int cmd_render(const CliOpts& o) {
  RunConfig cfg = load_run_config(o);
  apply_threads(o);
  BenchmarkScene scene = load_scene(o.data);
  CheckpointState state = load_checkpoint(o.checkpoint);
  AudioFeatureSequence audio =
      o.features.empty() ? scene.audio : read_feature_file(o.features);
  int64_t t_frames = audio.features.rows;
  std::filesystem::create_directories(o.out);
  RenderOptions ropt;

  std::vector<std::string> outputs;
  if (state.stage == 0) {
    check_stage(o, "static");
    FrameBuffer fb = rasterize(state.set, {}, scene.anim_cam, ropt);
    for (int64_t t = 0; t < t_frames; ++t) {
      write_png(o.out + "/" + frame_name(t, ".png"), fb.color);
      write_image_dump(o.out + "/" + frame_name(t, ".f32"), fb.color);
      outputs.push_back(frame_name(t, ".png"));
    }
  } else {
    check_stage(o, "deform");
    RestoredDeform restored = restore_deform(cfg, scene, state);
    ConditionRun run = restored.model.run_conditions(audio, false);
    Mat f_c = restored.model.spatial_features(restored.set);
    for (int64_t t = 0; t < t_frames; ++t) {
      FrameBuffer fb = restored.model.render_frame(restored.set, f_c, run, t,
                                                   scene.anim_cam, ropt);
      write_png(o.out + "/" + frame_name(t, ".png"), fb.color);
      write_image_dump(o.out + "/" + frame_name(t, ".f32"), fb.color);
      outputs.push_back(frame_name(t, ".png"));
    }
  }
  write_run_record(o.out, "render", o, cfg.seed, outputs);
  std::cout << "rendered " << t_frames << " frames to " << o.out << "\n";
  return 0;
}

int cmd_metrics(const CliOpts& o) {
  RunConfig cfg = load_run_config(o);
  apply_threads(o);
  TrainDataset data = load_dataset(o.data);
  std::filesystem::create_directories(o.out);

  std::vector<MetricsRow> rows;
  if (o.checkpoint.empty()) {
    // Dataset against itself: exercises the infinity sentinel and the zero
    // landmark distance.
    int64_t t_frames = data.scene.cfg.t_frames;
    int64_t k = int64_t(data.scene.markers.size());
    for (int64_t t = 0; t < t_frames; ++t) {
      Mat gt(k, 2);
      for (int64_t i = 0; i < k; ++i) {
        gt(i, 0) = data.scene.landmarks_px(t, 2 * i);
        gt(i, 1) = data.scene.landmarks_px(t, 2 * i + 1);
      }
      MetricsRow row;
      row.frame = t;
      row.holdout = t >= t_frames - cfg.holdout_frames;
      row.psnr = metric_psnr(data.anim_images[size_t(t)],
                             data.anim_images[size_t(t)]);
      row.ssim = metric_ssim(data.anim_images[size_t(t)],
                             data.anim_images[size_t(t)]);
      row.lmd = metric_lmd(gt, gt);
      row.lmd_static = row.lmd;
      rows.push_back(row);
    }
  } else {
    CheckpointState state = load_checkpoint(o.checkpoint);
    check_stage(o, state.stage == 1 ? "deform" : "static");
    rows = evaluate_deform(data, cfg, state);
  }

  std::string text = metrics_header() + "\n";
  for (const auto& r : rows) text += format_metrics_row(r) + "\n";
  write_text(o.out + "/metrics.csv", text);

  MetricsSummary all = summarize_metrics(rows, false);
  MetricsSummary hold = summarize_metrics(rows, true);
  std::string summary = "scope,frames,psnr,ssim,lmd,lmd_static\n";
  auto srow = [](const std::string& scope, const MetricsSummary& s) {
    char head[32];
    std::snprintf(head, sizeof(head), ",%" PRId64 ",", s.frames);
    return scope + head + fmt17(s.psnr) + "," + fmt17(s.ssim) + "," +
           fmt17(s.lmd) + "," + fmt17(s.lmd_static) + "\n";
  };
  summary += srow("all", all);
  summary += srow("holdout", hold);
  write_text(o.out + "/metrics_summary.csv", summary);
  write_run_record(o.out, "metrics", o, cfg.seed,
                   {"metrics.csv", "metrics_summary.csv"});
  std::cout << summary;
  return 0;
}

int cmd_gradcheck(const CliOpts& o) {
  apply_threads(o);
  uint64_t seed = o.seed_set ? o.seed : 7;
  auto rows = run_gradcheck(seed);
  bool ok = true;
  std::string text = "module,max_rel_err,tolerance,probes,worst,status\n";
  for (const auto& r : rows) {
    ok = ok && r.pass;
    char line[256];
    std::snprintf(line, sizeof(line), "%-20s max_rel_err=%-12.3e tol=%-8.0e probes=%-5" PRId64 " %s\n",
                  r.module.c_str(), r.max_rel_err, r.tolerance, r.probes,
                  r.pass ? "PASS" : ("FAIL worst=" + r.worst_param).c_str());
    std::cout << line;
    text += r.module + "," + fmt17(r.max_rel_err) + "," + fmt17(r.tolerance) +
            "," + std::to_string(r.probes) + "," + r.worst_param + "," +
            (r.pass ? "pass" : "fail") + "\n";
  }
  if (!o.out.empty()) {
    std::filesystem::create_directories(o.out);
    write_text(o.out + "/gradcheck.csv", text);
    write_run_record(o.out, "gradcheck", o, seed, {"gradcheck.csv"});
  }
  std::cout << (ok ? "gradcheck: all modules PASS\n"
                   : "gradcheck: FAILURES above\n");
  return ok ? 0 : 1;
}

int cmd_ablate_encoder(const CliOpts& o) {
  RunConfig cfg = load_run_config(o);
  apply_threads(o);
  TrainDataset data = load_dataset(o.data);
  CheckpointState base = load_checkpoint(o.static_checkpoint);
  std::filesystem::create_directories(o.out);

  struct Arm {
    std::string name;
    GridEncoder::Kind kind;
    MetricsSummary all, hold;
  };
  std::vector<Arm> arms{{"hash", GridEncoder::Kind::Hash3D, {}, {}},
                        {"triplane", GridEncoder::Kind::TriPlane, {}, {}}};
  for (auto& arm : arms) {
    RunConfig variant = cfg;
    variant.pipe.point_kind = arm.kind;
    std::string sub = o.out + "/" + arm.name;
    std::filesystem::create_directories(sub);
    TrainResult res = train_deform(data, variant, base);
    if (res.aborted)
      throw StateError("ablation arm '" + arm.name +
                       "' aborted: " + res.abort_reason);
    save_checkpoint(sub + "/deform.ckpt", res.state);
    write_train_log(sub + "/deform_log.csv", res.log);
    auto rows = evaluate_deform(data, variant, res.state);
    std::string text = metrics_header() + "\n";
    for (const auto& r : rows) text += format_metrics_row(r) + "\n";
    write_text(sub + "/metrics.csv", text);
    arm.all = summarize_metrics(rows, false);
    arm.hold = summarize_metrics(rows, true);
  }

  std::string csv = "encoder,scope,frames,psnr,ssim,lmd,lmd_static\n";
  for (const auto& arm : arms) {
    auto line = [&](const std::string& scope, const MetricsSummary& s) {
      char head[32];
      std::snprintf(head, sizeof(head), ",%" PRId64 ",", s.frames);
      return arm.name + "," + scope + head + fmt17(s.psnr) + "," +
             fmt17(s.ssim) + "," + fmt17(s.lmd) + "," + fmt17(s.lmd_static) +
             "\n";
    };
    csv += line("all", arm.all);
    csv += line("holdout", arm.hold);
  }
  write_text(o.out + "/ablation.csv", csv);
  write_run_record(o.out, "ablate-encoder", o, cfg.seed, {"ablation.csv"});
  std::cout << csv;
  std::cout << (arms[0].hold.lmd <= arms[1].hold.lmd
                    ? "hash-grid point encoder matches or beats tri-plane on "
                      "held-out landmark error\n"
                    : "tri-plane point encoder wins on held-out landmark "
                      "error\n");
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"audio-driven Gaussian-splatting talking-head toolkit"};
  app.require_subcommand(1);
  CliOpts o;

  auto add_common = [&](CLI::App* cmd, bool with_out) {
    cmd->add_option("--config", o.config, "key = value config file");
    cmd->add_option("--seed", o.seed, "seed override")
        ->each([&](const std::string&) { o.seed_set = true; });
    cmd->add_option("--threads", o.threads, "worker thread count");
    cmd->add_option("--stage", o.stage, "stage name guard (static|deform)");
    if (with_out)
      cmd->add_option("--out", o.out, "output directory")->required();
  };

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic benchmark dataset");
  add_common(gen, true);

  auto* tstat = app.add_subcommand("train-static", "fit the canonical Gaussian head");
  add_common(tstat, true);
  tstat->add_option("--data", o.data, "dataset directory")->required();
  tstat->add_option("--resume", o.checkpoint, "checkpoint to continue from");
  tstat->add_option("--stop-iteration", o.stop_iteration,
                    "interrupt after this iteration (schedules unchanged)");

  auto* tdef = app.add_subcommand("train-deform", "fit the audio-driven deformation");
  add_common(tdef, true);
  tdef->add_option("--data", o.data, "dataset directory")->required();
  tdef->add_option("--static-checkpoint", o.static_checkpoint,
                   "completed static-stage checkpoint")
      ->required();
  tdef->add_option("--resume", o.checkpoint, "checkpoint to continue from");
  tdef->add_option("--stop-iteration", o.stop_iteration,
                   "interrupt after this iteration (schedules unchanged)");

  auto* rend = app.add_subcommand("render", "render frames from a checkpoint");
  add_common(rend, true);
  rend->add_option("--data", o.data, "dataset directory")->required();
  rend->add_option("--checkpoint", o.checkpoint, "checkpoint to render")
      ->required();
  rend->add_option("--features", o.features,
                   "audio feature file overriding the dataset sequence");

  auto* metr = app.add_subcommand("metrics", "evaluate against ground truth");
  add_common(metr, true);
  metr->add_option("--data", o.data, "dataset directory")->required();
  metr->add_option("--checkpoint", o.checkpoint,
                   "deform checkpoint (omit to compare the dataset to itself)");

  auto* grad = app.add_subcommand("gradcheck",
                                  "finite-difference report for every module");
  grad->add_option("--seed", o.seed, "seed override")
      ->each([&](const std::string&) { o.seed_set = true; });
  grad->add_option("--threads", o.threads, "worker thread count");
  grad->add_option("--out", o.out, "optional report directory");

  auto* abl = app.add_subcommand("ablate-encoder",
                                 "compare hash vs tri-plane point encoders");
  add_common(abl, true);
  abl->add_option("--data", o.data, "dataset directory")->required();
  abl->add_option("--static-checkpoint", o.static_checkpoint,
                  "completed static-stage checkpoint")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) return cmd_gen_data(o);
    if (tstat->parsed()) return cmd_train_static(o);
    if (tdef->parsed()) return cmd_train_deform(o);
    if (rend->parsed()) return cmd_render(o);
    if (metr->parsed()) return cmd_metrics(o);
    if (grad->parsed()) return cmd_gradcheck(o);
    if (abl->parsed()) return cmd_ablate_encoder(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::cerr << "error: no command\n";
  return 2;
}

}  // namespace splat
