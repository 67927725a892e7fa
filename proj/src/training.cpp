#include "splat/training.hpp"

#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <limits>

#include "splat/rasterizer.hpp"

namespace splat {

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(
             clock::now().time_since_epoch())
      .count();
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CheckpointState capture(uint32_t stage, int64_t iteration, uint64_t seed,
                        const Rng& rng, const GaussianSet& set,
                        const DensifyStats& densify, const ParamStore& ps) {
  CheckpointState st;
  st.stage = stage;
  st.iteration = iteration;
  st.seed = seed;
  capture_rng(rng, st);
  st.set = set;
  st.densify = densify;
  capture_params(ps, st);
  return st;
}

void register_head(ParamStore& ps, GaussianSet& set, const RunConfig& cfg) {
  int g_pos = ps.add_group("pos", cfg.lr_pos * set.extent());
  int g_rot = ps.add_group("rot", cfg.lr_rot);
  int g_scale = ps.add_group("scale", cfg.lr_scale);
  int g_opacity = ps.add_group("opacity", cfg.lr_opacity);
  int g_color = ps.add_group("color", cfg.lr_color);
  ps.reg("set.pos", &set.pos, g_pos);
  ps.reg("set.rot", &set.rot, g_rot);
  ps.reg("set.log_scale", &set.log_scale, g_scale);
  ps.reg("set.opacity_raw", &set.opacity_raw, g_opacity);
  ps.reg("set.color", &set.color, g_color);
}

void add_head_grads(ParamStore& ps, const RasterGrads& rg) {
  auto add = [&ps](const std::string& name, const Mat& m) {
    Mat& dst = ps.grad(name);
    for (int64_t i = 0; i < m.size(); ++i) dst.v[i] += m.v[i];
  };
  add("set.pos", rg.pos);
  add("set.rot", rg.rot);
  add("set.log_scale", rg.log_scale);
  add("set.opacity_raw", rg.opacity_raw);
  add("set.color", rg.color);
}

void register_a2p(ParamStore& ps, Audio2PointNet& net, int group) {
  for (size_t i = 0; i < net.tcn().weights().size(); ++i) {
    ps.reg("a2p.tcn.w" + std::to_string(i), &net.tcn().weights()[i], group);
    ps.reg("a2p.tcn.b" + std::to_string(i), &net.tcn().biases()[i], group);
  }
  ps.reg_dense("a2p.enc", net.encoder(), group);
  ps.reg_dense("a2p.dec", net.decoder(), group);
  ps.reg("a2p.embed", &net.embedding(), group);
}

void add_a2p_grads(ParamStore& ps, const Audio2PointNet& net,
                   const Audio2PointNet::Grads& g) {
  auto add = [&ps](const std::string& name, const Mat& m) {
    Mat& dst = ps.grad(name);
    for (int64_t i = 0; i < m.size(); ++i) dst.v[i] += m.v[i];
  };
  for (size_t i = 0; i < g.tcn_w.size(); ++i) {
    add("a2p.tcn.w" + std::to_string(i), g.tcn_w[i]);
    add("a2p.tcn.b" + std::to_string(i), g.tcn_b[i]);
  }
  ps.add_dense_grads("a2p.enc", net.encoder(), g.enc);
  ps.add_dense_grads("a2p.dec", net.decoder(), g.dec);
  add("a2p.embed", g.embed);
}

GaussianSet extract_rows(const GaussianSet& set,
                         const std::vector<int64_t>& rows) {
  GaussianSet out;
  int64_t k = static_cast<int64_t>(rows.size());
  out.pos = Mat(k, 3);
  out.rot = Mat(k, 4);
  out.log_scale = Mat(k, 3);
  out.opacity_raw = Mat(k, 1);
  out.color = Mat(k, 3);
  out.landmark.assign(size_t(k), 1);
  out.box_min = set.box_min;
  out.box_max = set.box_max;
  for (int64_t i = 0; i < k; ++i) {
    int64_t s = rows[size_t(i)];
    for (int64_t c = 0; c < 3; ++c) {
      out.pos(i, c) = set.pos(s, c);
      out.log_scale(i, c) = set.log_scale(s, c);
      out.color(i, c) = set.color(s, c);
    }
    for (int64_t c = 0; c < 4; ++c) out.rot(i, c) = set.rot(s, c);
    out.opacity_raw(i, 0) = set.opacity_raw(s, 0);
  }
  return out;
}

}  // namespace

TrainDataset load_dataset(const std::string& dir) {
  TrainDataset data;
  data.scene = load_scene(dir);
  int views = data.scene.cfg.static_views;
  data.static_images.reserve(size_t(views));
  for (int i = 0; i < views; ++i)
    data.static_images.push_back(read_image_dump(static_image_path(dir, i, false)));
  int64_t t = data.scene.cfg.t_frames;
  data.anim_images.reserve(size_t(t));
  for (int64_t i = 0; i < t; ++i)
    data.anim_images.push_back(read_image_dump(anim_image_path(dir, i, false)));
  return data;
}

std::string train_log_header() {
  return "iteration,loss,l1,dssim,proxy,lcl,psnr,gaussians,wall_ms";
}

std::string format_log_row(const TrainLogRow& row) {
  char head[32];
  std::snprintf(head, sizeof(head), "%" PRId64, row.iteration);
  std::string s = head;
  s += "," + fmt17(row.loss) + "," + fmt17(row.l1) + "," + fmt17(row.dssim);
  s += "," + fmt17(row.proxy) + "," + fmt17(row.lcl) + "," + fmt17(row.psnr);
  std::snprintf(head, sizeof(head), ",%" PRId64, row.gaussians);
  s += head;
  s += "," + fmt17(row.wall_ms);
  return s;
}

std::string a2p_log_header() { return "iteration,train_mse,holdout_mse,wall_ms"; }

std::string format_a2p_log_row(const A2pLogRow& row) {
  char head[32];
  std::snprintf(head, sizeof(head), "%" PRId64, row.iteration);
  return std::string(head) + "," + fmt17(row.train_mse) + "," +
         fmt17(row.holdout_mse) + "," + fmt17(row.wall_ms);
}

std::vector<Patch> sample_patches(Rng& rng, int width, int height, int count,
                                  int size) {
  if (size <= 0 || size > width || size > height)
    throw ShapeError("sample_patches: patch size does not fit the image");
  std::vector<Patch> patches(static_cast<size_t>(count));
  for (auto& p : patches) {
    p.x = int(rng.uniform_index(uint64_t(width - size + 1)));
    p.y = int(rng.uniform_index(uint64_t(height - size + 1)));
    p.size = size;
  }
  return patches;
}

TrainResult train_static(const TrainDataset& data, const RunConfig& cfg,
                         const CheckpointState* resume,
                         const std::function<void(const TrainLogRow&)>& sink,
                         int64_t stop_iteration) {
  const auto& scene = data.scene;
  int views = int(scene.static_cams.size());
  if (views == 0 || data.static_images.size() != size_t(views))
    throw StateError("train_static: dataset has no usable static views");
  if (resume && resume->stage != 0)
    throw StateError("train_static: resume checkpoint is not a static-stage state");

  double t0 = now_ms();
  Rng rng(cfg.seed, 11);
  GaussianSet set;
  DensifyStats stats;
  int64_t start = 0;
  if (resume) {
    set = resume->set;
    stats = resume->densify;
    start = resume->iteration;
  } else {
    set = init_random(cfg.bench.gaussians, scene.set.box_min, scene.set.box_max,
                      rng.next_u64());
    stats.grad_ema.assign(size_t(set.count()), 0.0);
    stats.world_grad_sum = Mat(set.count(), 3);
  }

  ParamStore ps;
  register_head(ps, set, cfg);
  if (resume) {
    restore_params(*resume, ps);
    restore_rng(*resume, rng);
  }

  DensifyOptions dopt;
  dopt.grad_threshold = cfg.grad_threshold;
  dopt.prune_alpha = cfg.prune_alpha;
  RenderOptions ropt;
  int g_pos = ps.group_id("pos");

  TrainResult result;
  result.state = capture(0, start, cfg.seed, rng, set, stats, ps);
  auto emit = [&](const TrainLogRow& row) {
    result.log.push_back(row);
    if (sink) sink(row);
  };

  int64_t end = cfg.static_iters;
  if (stop_iteration >= 0) end = std::min(end, stop_iteration);
  for (int64_t it = start; it < end; ++it) {
    ps.set_group_lr_mult(
        g_pos, std::pow(0.01, double(it) / double(std::max<int64_t>(1, cfg.static_iters))));
    int view = int(rng.uniform_index(uint64_t(views)));
    const Camera& cam = scene.static_cams[size_t(view)];
    const Image& ref = data.static_images[size_t(view)];

    RasterCache rc;
    FrameBuffer fb = rasterize(set, {}, cam, ropt, &rc);
    double l1 = loss_l1(fb.color, ref);
    double dssim = loss_dssim(fb.color, ref);
    double loss = l1 + cfg.lambda_dssim * dssim;
    if (!std::isfinite(loss)) {
      result.aborted = true;
      result.abort_reason =
          "non-finite loss at iteration " + std::to_string(it);
      return result;
    }

    std::vector<double> d_image(fb.color.px.size(), 0.0);
    loss_l1_backward(fb.color, ref, 1.0, d_image);
    loss_dssim_backward(fb.color, ref, cfg.lambda_dssim, d_image);
    RasterGrads rg;
    rg.init(set.count());
    Mat screen_norm(set.count(), 1);
    rasterize_backward(rc, d_image, rg, &screen_norm);

    double to_ndc = 2.0 / double(cam.width);
    for (int64_t i = 0; i < set.count(); ++i) {
      stats.grad_ema[size_t(i)] =
          0.95 * stats.grad_ema[size_t(i)] + 0.05 * screen_norm(i, 0) * to_ndc;
      for (int64_t c = 0; c < 3; ++c) stats.world_grad_sum(i, c) += rg.pos(i, c);
    }
    stats.updates++;

    ps.zero_grads();
    add_head_grads(ps, rg);
    try {
      ps.adam_step();
    } catch (const TrainAbortError& e) {
      result.aborted = true;
      result.abort_reason = std::string(e.what()) + " at iteration " +
                            std::to_string(it);
      return result;
    }

    bool densify_due = it + 1 >= cfg.densify_from && it + 1 <= cfg.densify_until &&
                       cfg.densify_interval > 0 &&
                       (it + 1 - cfg.densify_from) % cfg.densify_interval == 0;
    if (densify_due) {
      DensifyResult dr = densify_and_prune(set, stats, dopt);
      ps.rebind_rows("set.pos", dr.row_map);
      ps.rebind_rows("set.rot", dr.row_map);
      ps.rebind_rows("set.log_scale", dr.row_map);
      ps.rebind_rows("set.opacity_raw", dr.row_map);
      ps.rebind_rows("set.color", dr.row_map);
      stats.grad_ema.assign(size_t(set.count()), 0.0);
      stats.world_grad_sum = Mat(set.count(), 3);
      stats.updates = 0;
    }

    if (cfg.log_interval > 0 && it % cfg.log_interval == 0) {
      TrainLogRow row;
      row.iteration = it;
      row.loss = loss;
      row.l1 = l1;
      row.dssim = dssim;
      row.psnr = metric_psnr(fb.color, ref);
      row.gaussians = set.count();
      row.wall_ms = now_ms() - t0;
      emit(row);
    }
    result.state = capture(0, it + 1, cfg.seed, rng, set, stats, ps);
  }
  return result;
}

DeformModel build_deform_model(const RunConfig& cfg, const BenchmarkScene& scene,
                               const GaussianSet& head) {
  const Mat& tpl = scene.lip_template;
  if (tpl.rows < 1 || tpl.cols != 3)
    throw ShapeError("build_deform_model: lip template must be M x 3");
  std::array<double, 3> mn{}, mx{};
  for (int64_t c = 0; c < 3; ++c) {
    double lo = tpl(0, c), hi = tpl(0, c);
    for (int64_t i = 1; i < tpl.rows; ++i) {
      lo = std::min(lo, tpl(i, c));
      hi = std::max(hi, tpl(i, c));
    }
    mn[size_t(c)] = lo;
    mx[size_t(c)] = hi;
  }
  double dx = mx[0] - mn[0], dy = mx[1] - mn[1], dz = mx[2] - mn[2];
  double pad = 0.25 * std::max(std::sqrt(dx * dx + dy * dy + dz * dz), 1e-6);
  for (size_t c = 0; c < 3; ++c) {
    mn[c] -= pad;
    mx[c] += pad;
  }
  std::vector<int64_t> lip_index(size_t(tpl.rows));
  for (size_t i = 0; i < lip_index.size(); ++i) lip_index[i] = int64_t(i);
  return DeformModel(cfg.pipe, head.box_min, head.box_max, head.extent(), tpl,
                     lip_index, mn, mx);
}

TrainResult train_deform(const TrainDataset& data, const RunConfig& cfg,
                         const CheckpointState& static_state,
                         const CheckpointState* resume,
                         const std::function<void(const TrainLogRow&)>& sink,
                         int64_t stop_iteration) {
  const auto& scene = data.scene;
  int64_t t_frames = scene.audio.features.rows;
  if (t_frames < 2 || data.anim_images.size() != size_t(t_frames))
    throw StateError("train_deform: dataset has no usable animation frames");
  int64_t t_train = t_frames - cfg.holdout_frames;
  if (t_train < 1)
    throw StateError("train_deform: holdout_frames leaves no training frames");
  if (static_state.stage != 0)
    throw StateError("train_deform: base checkpoint is not a static-stage state");
  if (resume && resume->stage != 1)
    throw StateError("train_deform: resume checkpoint is not a deform-stage state");

  double t0 = now_ms();
  Rng rng(cfg.seed, 22);
  GaussianSet set = resume ? resume->set : static_state.set;
  DeformModel model = build_deform_model(cfg, scene, set);
  model.init(rng);

  TrainResult result;

  if (!resume) {
    // Audio-to-point pretraining against the dataset lip tracks; the tail
    // frames validate without contributing gradients.
    ParamStore aps;
    int ga = aps.add_group("a2p", cfg.lr_a2p);
    register_a2p(aps, model.a2p, ga);
    int64_t m = model.a2p.point_count();
    double train_denom = double(t_train) * double(m) * 3.0;
    double hold_denom = double(t_frames - t_train) * double(m) * 3.0;
    for (int64_t it = 0; it < cfg.a2p_iters; ++it) {
      Audio2PointNet::Cache cache;
      std::vector<Mat> pred = model.a2p.forward(scene.audio.features, &cache);
      double train_mse = 0.0, hold_mse = 0.0;
      std::vector<Mat> d_frames(static_cast<size_t>(t_frames));
      for (int64_t t = 0; t < t_frames; ++t) {
        const Mat& gt = scene.lip_frames[size_t(t)];
        const Mat& p = pred[size_t(t)];
        if (p.rows != gt.rows || p.cols != gt.cols)
          throw ShapeError("train_deform: lip track shape mismatch");
        double sq = 0.0;
        Mat d(p.rows, p.cols);
        for (int64_t i = 0; i < p.size(); ++i) {
          double diff = p.v[size_t(i)] - gt.v[size_t(i)];
          sq += diff * diff;
          d.v[size_t(i)] = 2.0 * diff / train_denom;
        }
        if (t < t_train) {
          train_mse += sq / train_denom;
          d_frames[size_t(t)] = d;
        } else {
          hold_mse += sq / hold_denom;
          d_frames[size_t(t)] = Mat(p.rows, p.cols);
        }
      }
      if (!std::isfinite(train_mse)) {
        result.aborted = true;
        result.abort_reason =
            "non-finite audio-to-point loss at iteration " + std::to_string(it);
        result.state = capture(1, 0, cfg.seed, rng, set, {}, aps);
        return result;
      }
      Audio2PointNet::Grads g = model.a2p.make_grads();
      model.a2p.backward(cache, d_frames, g);
      aps.zero_grads();
      add_a2p_grads(aps, model.a2p, g);
      try {
        aps.adam_step();
      } catch (const TrainAbortError& e) {
        result.aborted = true;
        result.abort_reason = std::string(e.what()) +
                              " during audio-to-point pretraining at iteration " +
                              std::to_string(it);
        result.state = capture(1, 0, cfg.seed, rng, set, {}, aps);
        return result;
      }
      if (cfg.log_interval > 0 &&
          (it % cfg.log_interval == 0 || it + 1 == cfg.a2p_iters)) {
        A2pLogRow row;
        row.iteration = it;
        row.train_mse = train_mse;
        row.holdout_mse = hold_denom > 0 ? hold_mse : 0.0;
        row.wall_ms = now_ms() - t0;
        result.a2p_log.push_back(row);
      }
    }
  }

  ParamStore ps;
  int g_tables = ps.add_group("tables", cfg.lr_tables);
  int g_nets = ps.add_group("nets", cfg.lr_nets);
  model.register_params(ps, true, g_tables, g_nets);
  if (cfg.unfreeze_canonical) register_head(ps, set, cfg);
  if (resume) {
    restore_params(*resume, ps);
    restore_rng(*resume, rng);
  }
  int64_t start = resume ? resume->iteration : 0;

  RenderOptions ropt;
  const Camera& cam = scene.anim_cam;
  int width = data.anim_images[0].width, height = data.anim_images[0].height;

  result.state = capture(1, start, cfg.seed, rng, set, {}, ps);
  auto emit = [&](const TrainLogRow& row) {
    result.log.push_back(row);
    if (sink) sink(row);
  };

  int64_t end = cfg.deform_iters;
  if (stop_iteration >= 0) end = std::min(end, stop_iteration);
  for (int64_t it = start; it < end; ++it) {
    int64_t frame = int64_t(rng.uniform_index(uint64_t(t_train)));
    std::vector<Patch> patches =
        sample_patches(rng, width, height, cfg.patch_count, cfg.patch_size);

    ConditionRun run = model.run_conditions(scene.audio, true);
    Mat f_c = model.spatial_features(set);
    FrameCache fc;
    FrameBuffer fb = model.render_frame(set, f_c, run, frame, cam, ropt, &fc);
    const Image& ref = data.anim_images[size_t(frame)];

    double l1 = loss_l1(fb.color, ref);
    double dssim = loss_dssim(fb.color, ref);
    double proxy = loss_perceptual_proxy(fb.color, ref, patches);
    ModelGrads g = model.make_grads(t_frames, cfg.joint_a2p);
    double lcl = model.contrastive(run, &g, cfg.lambda_cl);
    double loss = l1 + cfg.lambda_dssim * dssim + cfg.lambda_proxy * proxy +
                  cfg.lambda_cl * lcl;
    if (!std::isfinite(loss)) {
      result.aborted = true;
      result.abort_reason =
          "non-finite loss at iteration " + std::to_string(it);
      return result;
    }

    std::vector<double> d_image(fb.color.px.size(), 0.0);
    loss_l1_backward(fb.color, ref, 1.0, d_image);
    loss_dssim_backward(fb.color, ref, cfg.lambda_dssim, d_image);
    loss_perceptual_proxy_backward(fb.color, ref, patches, cfg.lambda_proxy,
                                   d_image);

    Mat d_f_c(set.count(), model.f_cdim());
    RasterGrads rg;
    if (cfg.unfreeze_canonical) rg.init(set.count());
    model.backward_frame(fc, d_image, run, frame, g, d_f_c,
                         cfg.unfreeze_canonical ? &rg : nullptr);
    model.backward_conditions(run, g);
    model.backward_spatial(set, d_f_c, g);

    ps.zero_grads();
    model.add_grads(ps, g);
    if (cfg.unfreeze_canonical) add_head_grads(ps, rg);
    try {
      ps.adam_step();
    } catch (const TrainAbortError& e) {
      result.aborted = true;
      result.abort_reason = std::string(e.what()) + " at iteration " +
                            std::to_string(it);
      return result;
    }

    if (cfg.log_interval > 0 && it % cfg.log_interval == 0) {
      TrainLogRow row;
      row.iteration = it;
      row.loss = loss;
      row.l1 = l1;
      row.dssim = dssim;
      row.proxy = proxy;
      row.lcl = lcl;
      row.psnr = metric_psnr(fb.color, ref);
      row.gaussians = set.count();
      row.wall_ms = now_ms() - t0;
      emit(row);
    }
    result.state = capture(1, it + 1, cfg.seed, rng, set, {}, ps);
  }
  return result;
}

std::string metrics_header() {
  return "frame,holdout,psnr,ssim,lmd,lmd_static";
}

std::string format_metrics_row(const MetricsRow& row) {
  char head[32];
  std::snprintf(head, sizeof(head), "%" PRId64, row.frame);
  return std::string(head) + "," + (row.holdout ? "1" : "0") + "," +
         fmt17(row.psnr) + "," + fmt17(row.ssim) + "," + fmt17(row.lmd) + "," +
         fmt17(row.lmd_static);
}

RestoredDeform restore_deform(const RunConfig& cfg, const BenchmarkScene& scene,
                              const CheckpointState& state) {
  if (state.stage != 1)
    throw StateError("restore_deform: checkpoint is not a deform-stage state");
  RestoredDeform r;
  r.set = state.set;
  r.model = build_deform_model(cfg, scene, r.set);
  ParamStore ps;
  int g_tables = ps.add_group("tables", cfg.lr_tables);
  int g_nets = ps.add_group("nets", cfg.lr_nets);
  r.model.register_params(ps, true, g_tables, g_nets);
  if (cfg.unfreeze_canonical) register_head(ps, r.set, cfg);
  restore_params(state, ps);
  return r;
}

std::vector<MetricsRow> evaluate_deform(const TrainDataset& data,
                                        const RunConfig& cfg,
                                        const CheckpointState& deform_state) {
  const auto& scene = data.scene;
  int64_t t_frames = scene.audio.features.rows;
  RestoredDeform restored = restore_deform(cfg, scene, deform_state);
  GaussianSet& set = restored.set;
  DeformModel& model = restored.model;

  ConditionRun run = model.run_conditions(scene.audio, false);
  Mat f_c = model.spatial_features(set);

  GaussianSet probe = extract_rows(scene.set, scene.markers);
  Mat f_c_probe = model.spatial_features(probe);
  std::vector<int64_t> probe_index(probe.landmark.size());
  for (size_t i = 0; i < probe_index.size(); ++i) probe_index[i] = int64_t(i);
  Mat static_px = project_markers(probe, probe_index, nullptr, scene.anim_cam);

  int64_t k = int64_t(probe_index.size());
  RenderOptions ropt;
  std::vector<MetricsRow> rows;
  rows.reserve(size_t(t_frames));
  for (int64_t t = 0; t < t_frames; ++t) {
    FrameBuffer fb =
        model.render_frame(set, f_c, run, t, scene.anim_cam, ropt, nullptr);
    const Image& ref = data.anim_images[size_t(t)];
    Deformation delta = model.deform_at(f_c_probe, run, t, nullptr);
    Mat pred = project_markers(probe, probe_index, &delta.dx, scene.anim_cam);
    Mat gt(k, 2);
    for (int64_t i = 0; i < k; ++i) {
      gt(i, 0) = scene.landmarks_px(t, 2 * i);
      gt(i, 1) = scene.landmarks_px(t, 2 * i + 1);
    }
    MetricsRow row;
    row.frame = t;
    row.holdout = t >= t_frames - cfg.holdout_frames;
    row.psnr = metric_psnr(fb.color, ref);
    row.ssim = metric_ssim(fb.color, ref);
    row.lmd = metric_lmd(pred, gt);
    row.lmd_static = metric_lmd(static_px, gt);
    rows.push_back(row);
  }
  return rows;
}

MetricsSummary summarize_metrics(const std::vector<MetricsRow>& rows,
                                 bool holdout_only) {
  MetricsSummary s;
  for (const auto& r : rows) {
    if (holdout_only && !r.holdout) continue;
    s.psnr += r.psnr;
    s.ssim += r.ssim;
    s.lmd += r.lmd;
    s.lmd_static += r.lmd_static;
    s.frames++;
  }
  if (s.frames > 0) {
    s.psnr /= double(s.frames);
    s.ssim /= double(s.frames);
    s.lmd /= double(s.frames);
    s.lmd_static /= double(s.frames);
  }
  return s;
}

}  // namespace splat
