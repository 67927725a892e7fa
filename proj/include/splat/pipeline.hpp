#pragma once

#include <array>
#include <vector>

#include "splat/conditions.hpp"
#include "splat/deformation.hpp"
#include "splat/enhancement.hpp"
#include "splat/gaussians.hpp"
#include "splat/hashgrid.hpp"
#include "splat/rasterizer.hpp"

namespace splat {

struct PipelineConfig {
  // spatial encoder over canonical Gaussian positions
  GridEncoder::Kind spatial_kind = GridEncoder::Kind::TriPlane;
  int spatial_levels = 6;
  int spatial_feat = 2;
  int spatial_n_min = 4;
  double spatial_growth = 1.6;
  int spatial_log2 = 15;
  // point encoder over lip point clouds
  GridEncoder::Kind point_kind = GridEncoder::Kind::Hash3D;
  int point_levels = 8;
  int point_feat = 4;
  int point_n_min = 4;
  double point_growth = 1.5;
  int point_log2 = 13;

  int f_cond = 32;
  int hidden = 48;
  int window = 4;
  double tau = 0.07;
  Audio2PointConfig a2p;
};

// Forward state for the whole condition chain of one sequence.
struct ConditionRun {
  bool valid = false;
  int64_t t_frames = 0;
  std::vector<Mat> lip_frames;  // T mats, M x 3
  Audio2PointNet::Cache a2p_cache;
  std::vector<PointFeatureCache> pf_caches;
  Mat point_rows;  // T x F_cond, per-frame lip features
  Mat diff_pre;    // (T-1) x F_cond, pre-MLP differences
  DenseCache diff_cache;
  Mat diff_rows;  // (T-1) x F_cond
  TemporalCompressCache comp_a_cache, comp_p_cache;
  Mat a_rows;  // T x F_cond, compressed audio
  Mat p_rows;  // (T-1) x F_cond, compressed point dynamics
};

// Per-frame differentiable state from spatial features to the framebuffer.
struct FrameCache {
  bool valid = false;
  int64_t frame = -1;
  EnhanceCache enh;
  AdainCache adain;
  DecodeCache decode;
  Deformation delta;
  RasterCache raster;
};

// Gradient accumulators for every trainable tensor of the model.
struct ModelGrads {
  std::vector<Mat> spatial_tables, point_tables;
  DenseGrads point_proj, diff_mlp;
  DenseGrads comp_a_proj, comp_a_scorer, comp_p_proj, comp_p_scorer;
  DenseGrads enh_a, enh_p, enh_ap;
  DenseGrads dec_scale, dec_shift, dec_adaptive;
  Audio2PointNet::Grads a2p;
  bool with_a2p = false;
  // condition-row adjoints gathered across frames before backward_conditions
  Mat d_a_rows;      // T x F_cond
  Mat d_p_rows;      // (T-1) x F_cond
  Mat d_point_rows;  // T x F_cond, direct contributions (contrastive)
};

// Audio-conditioned deformation model over a static Gaussian head. The
// canonical positions feed a spatial encoder; audio and synthesized lip
// point clouds feed the condition chain; enhanced conditions modulate the
// spatial features which decode to per-Gaussian deformations.
class DeformModel {
 public:
  PipelineConfig cfg;
  GridEncoder spatial;    // world box
  GridEncoder point_enc;  // lip box
  DenseNet point_proj;    // 2*point_enc.out_dim() -> F_cond
  DenseNet diff_mlp;      // F_cond -> hidden -> F_cond
  TemporalCompressor comp_audio;  // F_a -> F_cond
  TemporalCompressor comp_point;  // F_cond -> F_cond
  EnhanceNet enh;
  DeformationDecoder decoder;
  Audio2PointNet a2p;

  DeformModel() = default;
  DeformModel(const PipelineConfig& cfg, const std::array<double, 3>& box_min,
              const std::array<double, 3>& box_max, double extent,
              const Mat& lip_template, const std::vector<int64_t>& lip_index,
              const std::array<double, 3>& lip_box_min,
              const std::array<double, 3>& lip_box_max);
  void init(Rng& rng);

  int f_cdim() const { return int(spatial.out_dim()); }
  int f_cond() const { return cfg.f_cond; }

  // Deformation of frame i is driven by the transition into it: difference
  // row i-1, clamped to the valid range (frame 0 reuses row 0).
  static int64_t point_row_for_frame(int64_t frame, int64_t t_frames);

  ConditionRun run_conditions(const AudioFeatureSequence& audio,
                              bool with_caches) const;
  // Cross-modal alignment between compressed audio rows and per-frame lip
  // feature rows. Returns the unweighted loss; weight scales the gradients
  // accumulated into g.d_a_rows / g.d_point_rows.
  double contrastive(const ConditionRun& run, ModelGrads* g,
                     double weight = 1.0) const;

  // Spatial features of the canonical positions, N x F_cdim.
  Mat spatial_features(const GaussianSet& set) const;

  Deformation deform_at(const Mat& f_c, const ConditionRun& run, int64_t frame,
                        FrameCache* cache = nullptr) const;
  FrameBuffer render_frame(const GaussianSet& set, const Mat& f_c,
                           const ConditionRun& run, int64_t frame,
                           const Camera& cam, const RenderOptions& opt,
                           FrameCache* cache = nullptr) const;

  ModelGrads make_grads(int64_t t_frames, bool with_a2p) const;
  // Pulls d_image back through raster, decode, fuse and enhance. Accumulates
  // into g (condition-row adjoints included) and d_f_c; optionally exposes
  // the raster grads (canonical-parameter training) and the screen-space
  // positional gradient norms (densification statistics).
  void backward_frame(const FrameCache& cache, const std::vector<double>& d_image,
                      const ConditionRun& run, int64_t frame, ModelGrads& g,
                      Mat& d_f_c, RasterGrads* raster_grads = nullptr,
                      Mat* screen_grad_norm = nullptr) const;
  // Spends the accumulated condition-row adjoints on the condition chain.
  void backward_conditions(const ConditionRun& run, ModelGrads& g) const;
  // Spatial-encoder backward for all Gaussians at once.
  void backward_spatial(const GaussianSet& set, const Mat& d_f_c,
                        ModelGrads& g) const;

  // Registration order defines checkpoint layout.
  void register_params(ParamStore& ps, bool include_a2p, int group_tables,
                       int group_nets);
  void add_grads(ParamStore& ps, const ModelGrads& g) const;
};

}  // namespace splat
