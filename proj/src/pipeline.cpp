#include "splat/pipeline.hpp"

#include <algorithm>

namespace splat {

DeformModel::DeformModel(const PipelineConfig& config,
                         const std::array<double, 3>& box_min,
                         const std::array<double, 3>& box_max, double extent,
                         const Mat& lip_template,
                         const std::vector<int64_t>& lip_index,
                         const std::array<double, 3>& lip_box_min,
                         const std::array<double, 3>& lip_box_max)
    : cfg(config),
      spatial(config.spatial_kind, config.spatial_levels, config.spatial_feat,
              config.spatial_n_min, config.spatial_growth, config.spatial_log2,
              box_min, box_max),
      point_enc(config.point_kind, config.point_levels, config.point_feat,
                config.point_n_min, config.point_growth, config.point_log2,
                lip_box_min, lip_box_max),
      point_proj({2 * point_enc.out_dim(), config.f_cond}, {Act::Identity}),
      diff_mlp({config.f_cond, config.hidden, config.f_cond},
               {Act::ReLU, Act::Identity}),
      comp_audio(config.a2p.f_audio, config.f_cond, config.window),
      comp_point(config.f_cond, config.f_cond, config.window),
      enh(spatial.out_dim(), config.f_cond, config.hidden),
      decoder(config.f_cond, spatial.out_dim(), config.hidden, extent),
      a2p(config.a2p, lip_template, lip_index) {}

void DeformModel::init(Rng& rng) {
  spatial.init_tables(rng);
  point_enc.init_tables(rng);
  point_proj.init_glorot(rng);
  diff_mlp.init_glorot(rng);
  comp_audio.init(rng);
  comp_point.init(rng);
  enh.init(rng);
  decoder.init(rng);
  a2p.init(rng);
}

int64_t DeformModel::point_row_for_frame(int64_t frame, int64_t t_frames) {
  const int64_t rows = t_frames - 1;
  return std::clamp<int64_t>(frame - 1, 0, rows - 1);
}

ConditionRun DeformModel::run_conditions(const AudioFeatureSequence& audio,
                                         bool with_caches) const {
  ConditionRun run;
  run.t_frames = audio.features.rows;
  run.lip_frames =
      a2p.forward(audio.features, with_caches ? &run.a2p_cache : nullptr);
  run.point_rows = point_feature_rows(point_enc, point_proj, run.lip_frames,
                                      with_caches ? &run.pf_caches : nullptr);
  run.diff_rows = difference_encode(
      diff_mlp, run.point_rows, with_caches ? &run.diff_cache : nullptr,
      &run.diff_pre);
  run.a_rows = temporal_compress(comp_audio, audio.features,
                                 with_caches ? &run.comp_a_cache : nullptr);
  run.p_rows = temporal_compress(comp_point, run.diff_rows,
                                 with_caches ? &run.comp_p_cache : nullptr);
  run.valid = true;
  return run;
}

double DeformModel::contrastive(const ConditionRun& run, ModelGrads* g,
                                double weight) const {
  ContrastiveOpts opts;
  opts.tau = cfg.tau;
  if (!g) return contrastive_loss(run.a_rows, run.point_rows, opts);
  Mat d_a(run.a_rows.rows, run.a_rows.cols);
  Mat d_p(run.point_rows.rows, run.point_rows.cols);
  const double l = contrastive_loss(run.a_rows, run.point_rows, opts, &d_a, &d_p);
  for (int64_t i = 0; i < d_a.size(); ++i) g->d_a_rows.v[i] += weight * d_a.v[i];
  for (int64_t i = 0; i < d_p.size(); ++i)
    g->d_point_rows.v[i] += weight * d_p.v[i];
  return l;
}

Mat DeformModel::spatial_features(const GaussianSet& set) const {
  Mat out(set.count(), spatial.out_dim());
  for (int64_t i = 0; i < set.count(); ++i) {
    const double x[3] = {set.pos(i, 0), set.pos(i, 1), set.pos(i, 2)};
    spatial.encode(x, out.v.data() + i * out.cols);
  }
  return out;
}

Deformation DeformModel::deform_at(const Mat& f_c, const ConditionRun& run,
                                   int64_t frame, FrameCache* cache) const {
  if (!run.valid) throw StateError("deform_at: conditions not run");
  if (frame < 0 || frame >= run.t_frames)
    throw ShapeError("deform_at: frame index out of range");
  const double* a_t = run.a_rows.v.data() + frame * run.a_rows.cols;
  const int64_t j = point_row_for_frame(frame, run.t_frames);
  const double* p_t = run.p_rows.v.data() + j * run.p_rows.cols;

  Mat fa_hat, fp_hat;
  enhance(enh, f_c, a_t, p_t, cfg.f_cond, fa_hat, fp_hat,
          cache ? &cache->enh : nullptr);
  Mat fused = adain_fuse(decoder, f_c, fa_hat, fp_hat,
                         cache ? &cache->adain : nullptr);
  Deformation d =
      decode_deformation(decoder, fused, cache ? &cache->decode : nullptr);
  if (cache) {
    cache->frame = frame;
    cache->delta = d;
  }
  return d;
}

FrameBuffer DeformModel::render_frame(const GaussianSet& set, const Mat& f_c,
                                      const ConditionRun& run, int64_t frame,
                                      const Camera& cam,
                                      const RenderOptions& opt,
                                      FrameCache* cache) const {
  FrameCache local;
  FrameCache& c = cache ? *cache : local;
  Deformation d = deform_at(f_c, run, frame, &c);
  DeformDelta delta{&c.delta.dx, &c.delta.drot, &c.delta.dls};
  FrameBuffer fb = rasterize(set, delta, cam, opt, &c.raster);
  if (cache) cache->valid = true;
  (void)d;
  return fb;
}

ModelGrads DeformModel::make_grads(int64_t t_frames, bool with_a2p) const {
  ModelGrads g;
  g.spatial_tables = spatial.make_table_grads();
  g.point_tables = point_enc.make_table_grads();
  g.point_proj = point_proj.make_grads();
  g.diff_mlp = diff_mlp.make_grads();
  g.comp_a_proj = comp_audio.proj.make_grads();
  g.comp_a_scorer = comp_audio.scorer.make_grads();
  g.comp_p_proj = comp_point.proj.make_grads();
  g.comp_p_scorer = comp_point.scorer.make_grads();
  g.enh_a = enh.mlp_a.make_grads();
  g.enh_p = enh.mlp_p.make_grads();
  g.enh_ap = enh.mlp_ap.make_grads();
  g.dec_scale = decoder.scale_net.make_grads();
  g.dec_shift = decoder.shift_net.make_grads();
  g.dec_adaptive = decoder.adaptive.make_grads();
  g.with_a2p = with_a2p;
  if (with_a2p) g.a2p = a2p.make_grads();
  g.d_a_rows = Mat(t_frames, cfg.f_cond);
  g.d_p_rows = Mat(t_frames - 1, cfg.f_cond);
  g.d_point_rows = Mat(t_frames, cfg.f_cond);
  return g;
}

void DeformModel::backward_frame(const FrameCache& cache,
                                 const std::vector<double>& d_image,
                                 const ConditionRun& run, int64_t frame,
                                 ModelGrads& g, Mat& d_f_c,
                                 RasterGrads* raster_grads,
                                 Mat* screen_grad_norm) const {
  if (!cache.valid || cache.frame != frame)
    throw StateError("backward_frame: cache does not match frame");
  const int64_t n = cache.delta.dx.rows;

  RasterGrads rg;
  rg.init(n);
  rasterize_backward(cache.raster, d_image, rg, screen_grad_norm);

  Deformation d_delta{rg.pos, rg.rot, rg.log_scale};
  Mat d_fused =
      decode_deformation_backward(decoder, cache.decode, d_delta, g.dec_adaptive);
  Mat d_fa(n, cfg.f_cond), d_fp(n, cfg.f_cond);
  Mat d_fc = adain_fuse_backward(decoder, cache.adain, d_fused, g.dec_scale,
                                 g.dec_shift, d_fa, d_fp);
  std::vector<double> d_a(size_t(cfg.f_cond), 0.0), d_p(size_t(cfg.f_cond), 0.0);
  Mat d_fc2 = enhance_backward(enh, cache.enh, d_fa, d_fp, g.enh_a, g.enh_p,
                               g.enh_ap, d_a.data(), d_p.data());
  for (int64_t i = 0; i < d_f_c.size(); ++i)
    d_f_c.v[i] += d_fc.v[i] + d_fc2.v[i];

  for (int j = 0; j < cfg.f_cond; ++j)
    g.d_a_rows(frame, j) += d_a[size_t(j)];
  const int64_t pr = point_row_for_frame(frame, run.t_frames);
  for (int j = 0; j < cfg.f_cond; ++j)
    g.d_p_rows(pr, j) += d_p[size_t(j)];

  if (raster_grads) {
    for (int64_t i = 0; i < rg.pos.size(); ++i) raster_grads->pos.v[i] += rg.pos.v[i];
    for (int64_t i = 0; i < rg.rot.size(); ++i) raster_grads->rot.v[i] += rg.rot.v[i];
    for (int64_t i = 0; i < rg.log_scale.size(); ++i)
      raster_grads->log_scale.v[i] += rg.log_scale.v[i];
    for (int64_t i = 0; i < rg.opacity_raw.size(); ++i)
      raster_grads->opacity_raw.v[i] += rg.opacity_raw.v[i];
    for (int64_t i = 0; i < rg.color.size(); ++i)
      raster_grads->color.v[i] += rg.color.v[i];
  }
}

void DeformModel::backward_conditions(const ConditionRun& run,
                                      ModelGrads& g) const {
  temporal_compress_backward(comp_audio, run.comp_a_cache, g.d_a_rows,
                             g.comp_a_proj, g.comp_a_scorer);
  Mat d_diff = temporal_compress_backward(comp_point, run.comp_p_cache,
                                          g.d_p_rows, g.comp_p_proj,
                                          g.comp_p_scorer);
  Mat d_rows =
      difference_encode_backward(diff_mlp, run.diff_cache, d_diff, g.diff_mlp);
  for (int64_t i = 0; i < d_rows.size(); ++i)
    d_rows.v[i] += g.d_point_rows.v[i];

  std::vector<Mat> d_frames;
  if (g.with_a2p) d_frames.resize(run.lip_frames.size());
  for (int64_t t = 0; t < run.t_frames; ++t) {
    Mat d_row(1, cfg.f_cond);
    for (int j = 0; j < cfg.f_cond; ++j) d_row(0, j) = d_rows(t, j);
    Mat* dp = nullptr;
    if (g.with_a2p) {
      d_frames[size_t(t)] = Mat(run.lip_frames[size_t(t)].rows, 3);
      dp = &d_frames[size_t(t)];
    }
    frame_point_feature_backward(point_enc, point_proj,
                                 run.lip_frames[size_t(t)],
                                 run.pf_caches[size_t(t)], d_row,
                                 g.point_tables, g.point_proj, dp);
  }
  if (g.with_a2p) a2p.backward(run.a2p_cache, d_frames, g.a2p);
}

void DeformModel::backward_spatial(const GaussianSet& set, const Mat& d_f_c,
                                   ModelGrads& g) const {
  for (int64_t i = 0; i < set.count(); ++i) {
    const double x[3] = {set.pos(i, 0), set.pos(i, 1), set.pos(i, 2)};
    spatial.encode_backward(x, d_f_c.v.data() + i * d_f_c.cols,
                            g.spatial_tables.data(), nullptr);
  }
}

void DeformModel::register_params(ParamStore& ps, bool include_a2p,
                                  int group_tables, int group_nets) {
  for (int i = 0; i < spatial.table_count(); ++i)
    ps.reg("spatial.t" + std::to_string(i), &spatial.table(i), group_tables);
  for (int i = 0; i < point_enc.table_count(); ++i)
    ps.reg("point.t" + std::to_string(i), &point_enc.table(i), group_tables);
  ps.reg_dense("point_proj", point_proj, group_nets);
  ps.reg_dense("diff_mlp", diff_mlp, group_nets);
  ps.reg_dense("comp_a.proj", comp_audio.proj, group_nets);
  ps.reg_dense("comp_a.scorer", comp_audio.scorer, group_nets);
  ps.reg_dense("comp_p.proj", comp_point.proj, group_nets);
  ps.reg_dense("comp_p.scorer", comp_point.scorer, group_nets);
  ps.reg_dense("enh.a", enh.mlp_a, group_nets);
  ps.reg_dense("enh.p", enh.mlp_p, group_nets);
  ps.reg_dense("enh.ap", enh.mlp_ap, group_nets);
  ps.reg_dense("dec.scale", decoder.scale_net, group_nets);
  ps.reg_dense("dec.shift", decoder.shift_net, group_nets);
  ps.reg_dense("dec.adaptive", decoder.adaptive, group_nets);
  if (include_a2p) {
    for (size_t i = 0; i < a2p.tcn().weights().size(); ++i) {
      ps.reg("a2p.tcn.w" + std::to_string(i), &a2p.tcn().weights()[i],
             group_nets);
      ps.reg("a2p.tcn.b" + std::to_string(i), &a2p.tcn().biases()[i],
             group_nets);
    }
    ps.reg_dense("a2p.enc", a2p.encoder(), group_nets);
    ps.reg_dense("a2p.dec", a2p.decoder(), group_nets);
    ps.reg("a2p.embed", &a2p.embedding(), group_nets);
  }
}

void DeformModel::add_grads(ParamStore& ps, const ModelGrads& g) const {
  auto add_mat = [&ps](const std::string& name, const Mat& m) {
    Mat& dst = ps.grad(name);
    for (int64_t i = 0; i < m.size(); ++i) dst.v[i] += m.v[i];
  };
  for (size_t i = 0; i < g.spatial_tables.size(); ++i)
    add_mat("spatial.t" + std::to_string(i), g.spatial_tables[i]);
  for (size_t i = 0; i < g.point_tables.size(); ++i)
    add_mat("point.t" + std::to_string(i), g.point_tables[i]);
  ps.add_dense_grads("point_proj", point_proj, g.point_proj);
  ps.add_dense_grads("diff_mlp", diff_mlp, g.diff_mlp);
  ps.add_dense_grads("comp_a.proj", comp_audio.proj, g.comp_a_proj);
  ps.add_dense_grads("comp_a.scorer", comp_audio.scorer, g.comp_a_scorer);
  ps.add_dense_grads("comp_p.proj", comp_point.proj, g.comp_p_proj);
  ps.add_dense_grads("comp_p.scorer", comp_point.scorer, g.comp_p_scorer);
  ps.add_dense_grads("enh.a", enh.mlp_a, g.enh_a);
  ps.add_dense_grads("enh.p", enh.mlp_p, g.enh_p);
  ps.add_dense_grads("enh.ap", enh.mlp_ap, g.enh_ap);
  ps.add_dense_grads("dec.scale", decoder.scale_net, g.dec_scale);
  ps.add_dense_grads("dec.shift", decoder.shift_net, g.dec_shift);
  ps.add_dense_grads("dec.adaptive", decoder.adaptive, g.dec_adaptive);
  if (g.with_a2p && ps.has("a2p.embed")) {
    for (size_t i = 0; i < g.a2p.tcn_w.size(); ++i) {
      add_mat("a2p.tcn.w" + std::to_string(i), g.a2p.tcn_w[i]);
      add_mat("a2p.tcn.b" + std::to_string(i), g.a2p.tcn_b[i]);
    }
    ps.add_dense_grads("a2p.enc", a2p.encoder(), g.a2p.enc);
    ps.add_dense_grads("a2p.dec", a2p.decoder(), g.a2p.dec);
    add_mat("a2p.embed", g.a2p.embed);
  }
}

}  // namespace splat
