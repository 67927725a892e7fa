#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splat/errors.hpp"
#include "splat/hashgrid.hpp"
#include "splat/mat.hpp"
#include "splat/nn.hpp"

namespace splat {

// Per-frame audio features, one row per video frame.
struct AudioFeatureSequence {
  Mat features;  // T x F
  double fps = 25.0;
};

// Feature file: magic "PTFEAT1\0", u32 T, u32 F, f32 frame rate, then T*F
// little-endian f32, row-major.
void write_feature_file(const std::string& path, const AudioFeatureSequence& seq);
AudioFeatureSequence read_feature_file(const std::string& path);

// Point sequence file: magic "PTLIP1\0\0", u32 T, u32 N, then T*N*3 f32.
void write_lip_file(const std::string& path, const std::vector<Mat>& frames);
std::vector<Mat> read_lip_file(const std::string& path);

// Dynamic lip point cloud plus its static template.
struct LipPointSequence {
  std::vector<Mat> frames;  // T entries, each N_p x 3
  Mat template_points;      // M x 3
  std::vector<int64_t> lip_index;  // N_p rows into the template
};

// Causal dilated 1-D convolution stack over frame rows: kernel 3, taps at
// t-2d, t-d, t with zero history before frame 0. ReLU between layers,
// identity after the last.
class Tcn {
 public:
  struct Cache {
    bool valid = false;
    std::vector<Mat> x;  // input per layer
    std::vector<Mat> z;  // pre-activations per layer
  };

  Tcn() = default;
  Tcn(int c_in, int c_out, std::vector<int> dilations);

  void init_glorot(Rng& rng);
  int c_in() const { return c_in_; }
  int c_out() const { return c_out_; }
  int layer_count() const { return static_cast<int>(dil_.size()); }
  int receptive_field() const;  // frames that influence one output row

  // weights: (3*c_in_l) x c_out_l, tap-major blocks in order t-2d, t-d, t
  std::vector<Mat>& weights() { return w_; }
  std::vector<Mat>& biases() { return b_; }
  const std::vector<Mat>& weights() const { return w_; }
  const std::vector<Mat>& biases() const { return b_; }
  const std::vector<int>& dilations() const { return dil_; }

  Mat forward(const Mat& x, Cache* cache = nullptr) const;
  // Accumulates into dw/db (shaped like weights/biases); returns dx.
  Mat backward(const Cache& cache, const Mat& d_out, std::vector<Mat>& dw,
               std::vector<Mat>& db) const;

 private:
  int c_in_ = 0, c_out_ = 0;
  std::vector<int> dil_;
  std::vector<Mat> w_, b_;
};

struct Audio2PointConfig {
  int f_audio = 16;
  int tcn_channels = 32;
  std::vector<int> dilations{1, 2, 4, 8};
  int latent = 32;
  int embed = 16;
  int hidden = 48;
};

// Audio-to-lip generator: TCN, per-frame encoder MLP, a learned template
// embedding, and an offset decoder whose zero-initialized last layer makes
// the net reproduce the template exactly at initialization.
class Audio2PointNet {
 public:
  struct Cache {
    bool valid = false;
    int64_t t = 0;
    Tcn::Cache tcn;
    DenseCache enc, dec;
    Mat dec_in;
  };

  Audio2PointNet() = default;
  Audio2PointNet(const Audio2PointConfig& cfg, const Mat& template_points,
                 std::vector<int64_t> lip_index);

  void init(Rng& rng);

  const Audio2PointConfig& config() const { return cfg_; }
  const Mat& template_points() const { return template_; }
  const std::vector<int64_t>& lip_index() const { return lip_index_; }
  int64_t point_count() const { return static_cast<int64_t>(lip_index_.size()); }

  Tcn& tcn() { return tcn_; }
  const Tcn& tcn() const { return tcn_; }
  DenseNet& encoder() { return enc_; }
  const DenseNet& encoder() const { return enc_; }
  DenseNet& decoder() { return dec_; }
  const DenseNet& decoder() const { return dec_; }
  Mat& embedding() { return embed_; }
  const Mat& embedding() const { return embed_; }

  // T x (M*3) per-frame template offsets.
  Mat offsets(const Mat& audio, Cache* cache = nullptr) const;
  // Per-frame lip subset of template + offsets.
  std::vector<Mat> forward(const Mat& audio, Cache* cache = nullptr) const;

  struct Grads {
    std::vector<Mat> tcn_w, tcn_b;
    DenseGrads enc, dec;
    Mat embed;
  };
  Grads make_grads() const;
  // Backward from d(offsets); accumulates into g, returns nothing else.
  void backward_offsets(const Cache& cache, const Mat& d_offsets, Grads& g) const;
  // Backward from per-frame lip point gradients.
  void backward(const Cache& cache, const std::vector<Mat>& d_frames, Grads& g) const;

 private:
  Audio2PointConfig cfg_;
  Mat template_;
  std::vector<int64_t> lip_index_;
  Tcn tcn_;
  DenseNet enc_;
  DenseNet dec_;
  Mat embed_;  // 1 x embed
};

struct PointFeatureCache {
  bool valid = false;
  int64_t n = 0;
  Mat enc;                    // N x grid.out_dim()
  std::vector<int64_t> argmax;  // per encoding column, row of the max
  Mat pooled;                 // 1 x 2*grid.out_dim(), mean then max
  DenseCache proj;
};

// Permutation-invariant frame feature: per-point grid encodings pooled by
// mean and max over points, concatenated, then projected to F_cond.
Mat frame_point_feature(const GridEncoder& grid, const DenseNet& proj,
                        const Mat& points, PointFeatureCache* cache = nullptr);
// d_tables: grid.table_count() mats. d_points may be null.
void frame_point_feature_backward(const GridEncoder& grid, const DenseNet& proj,
                                  const Mat& points, const PointFeatureCache& cache,
                                  const Mat& d_row, std::vector<Mat>& d_tables,
                                  DenseGrads& d_proj, Mat* d_points);

// Rows of frame_point_feature for every frame, T x F_cond.
Mat point_feature_rows(const GridEncoder& grid, const DenseNet& proj,
                       const std::vector<Mat>& frames,
                       std::vector<PointFeatureCache>* caches = nullptr);

// Per-step feature differences through a shared MLP: row t (0-based) is
// mlp(rows[t+1] - rows[t]), giving T-1 output rows.
Mat difference_encode(const DenseNet& mlp, const Mat& rows,
                      DenseCache* cache = nullptr, Mat* pre_mlp = nullptr);
// Returns d_rows (T x F_cond) for the upstream per-frame features.
Mat difference_encode_backward(const DenseNet& mlp, const DenseCache& cache,
                               const Mat& d_out, DenseGrads& d_mlp);

// Composition: difference_encode over point_feature_rows. T < 2 rejected.
Mat dynamic_difference_encode(const GridEncoder& grid, const DenseNet& proj,
                              const DenseNet& mlp, const std::vector<Mat>& frames,
                              Mat* pre_mlp = nullptr);

struct AudioSynthConfig {
  int64_t t_frames = 50;
  int f_a = 16;
  double fps = 25.0;
  double amplitude = 1.0;  // scales every feature and both motion tracks
};

// Deterministic multi-band feature synthesizer. With unit tracks
//   o(t) = 0.5*(1 - cos(2*pi*1.1*t/fps)) * (0.75 + 0.25*sin(2*pi*0.35*t/fps))
//   s(t) = sin(2*pi*0.43*t/fps + 0.7)
// the emitted tracks are opening = amplitude*o and sway = amplitude*s, and
// the features are
//   col j in [0,4):  amplitude * (2*o(t) - 1) * (1 - 0.15*j)   (opening band)
//   col 4+j, j<4:    amplitude * s(t) * (1 - 0.15*j)           (sway band)
//   col c >= 8:      amplitude * 0.6 * sin(2*pi*f_c*t/fps + p_c)
// with f_c, p_c drawn once from the seed (distractor bands).
struct SynthesizedAudio {
  AudioFeatureSequence audio;
  std::vector<double> opening;  // T, in [0, amplitude]
  std::vector<double> sway;     // T, in [-amplitude, amplitude]
};

SynthesizedAudio synthesize_benchmark_audio(const AudioSynthConfig& cfg,
                                            uint64_t seed);

}  // namespace splat
