#pragma once

#include <vector>

#include "splat/errors.hpp"
#include "splat/mat.hpp"
#include "splat/nn.hpp"

namespace splat {

// Windowed soft-attention compressor: per frame, a softmax-weighted sum of
// linearly projected neighbor frames. The window [t-W, t+W] is intersected
// with the valid frame range.
struct TemporalCompressor {
  DenseNet proj;    // F_in -> F_cond, single identity layer
  DenseNet scorer;  // F_in -> 1, single identity layer
  int window = 4;

  TemporalCompressor() = default;
  TemporalCompressor(int f_in, int f_cond, int w)
      : proj({f_in, f_cond}, {Act::Identity}),
        scorer({f_in, 1}, {Act::Identity}),
        window(w) {}
  void init(Rng& rng) {
    proj.init_glorot(rng);
    scorer.init_glorot(rng);
  }
};

struct TemporalCompressCache {
  bool valid = false;
  Mat input;
  DenseCache proj, scorer;
  Mat projected;  // T x F_cond
  Mat scores;     // T x 1
};

// Returns T x F_cond. weights_out, when given, receives one row per frame
// with 2W+1 columns (out-of-range slots zero) for inspection.
Mat temporal_compress(const TemporalCompressor& tc, const Mat& feats,
                      TemporalCompressCache* cache = nullptr,
                      Mat* weights_out = nullptr);
// Accumulates parameter grads; returns d_feats.
Mat temporal_compress_backward(const TemporalCompressor& tc,
                               const TemporalCompressCache& cache,
                               const Mat& d_out, DenseGrads& g_proj,
                               DenseGrads& g_scorer);

// Gating networks, all sigmoid-headed: mlp_a and mlp_p read spatial rows
// (F_cdim wide), mlp_ap re-modulates the point gate from the enhanced audio
// feature.
struct EnhanceNet {
  DenseNet mlp_a, mlp_p, mlp_ap;

  EnhanceNet() = default;
  EnhanceNet(int f_cdim, int f_cond, int hidden)
      : mlp_a({f_cdim, hidden, f_cond}, {Act::ReLU, Act::Sigmoid}),
        mlp_p({f_cdim, hidden, f_cond}, {Act::ReLU, Act::Sigmoid}),
        mlp_ap({f_cond, hidden, f_cond}, {Act::ReLU, Act::Sigmoid}) {}
  void init(Rng& rng) {
    mlp_a.init_glorot(rng);
    mlp_p.init_glorot(rng);
    mlp_ap.init_glorot(rng);
  }
};

struct EnhanceCache {
  bool valid = false;
  int64_t n = 0;
  DenseCache a, p, ap;
  Mat gate_a, gate_p, gate_ap;  // N x F_cond
  Mat fa_hat, fp_raw;           // N x F_cond
  std::vector<double> a_t, p_t;
};

// Per-row gating:
//   Fa_hat[i] = gate_a(F_c[i]) * a_t
//   Fp_raw[i] = gate_p(F_c[i]) * p_t
//   Fp_hat[i] = gate_ap(Fa_hat[i]) * Fp_raw[i]
void enhance(const EnhanceNet& net, const Mat& f_c, const double* a_t,
             const double* p_t, int f_cond, Mat& fa_hat, Mat& fp_hat,
             EnhanceCache* cache = nullptr);
// Accumulates net grads and d_a_t/d_p_t (length F_cond, caller-zeroed);
// returns d_f_c.
Mat enhance_backward(const EnhanceNet& net, const EnhanceCache& cache,
                     const Mat& d_fa_hat, const Mat& d_fp_hat,
                     DenseGrads& g_a, DenseGrads& g_p, DenseGrads& g_ap,
                     double* d_a_t, double* d_p_t);

struct ContrastiveOpts {
  double tau = 0.07;
  bool include_positive = false;  // add the k = t term to the denominator
};

// Symmetric cross-modal InfoNCE over L2-normalized rows. The denominator
// excludes the positive pair unless opts.include_positive. d_a/d_p, when
// given, receive accumulated gradients (same shapes as the inputs).
double contrastive_loss(const Mat& a_rows, const Mat& p_rows,
                        const ContrastiveOpts& opts, Mat* d_a = nullptr,
                        Mat* d_p = nullptr);

// Top-1 retrieval accuracy matching each audio row to the point row with the
// highest cosine similarity.
double retrieval_top1(const Mat& a_rows, const Mat& p_rows);

}  // namespace splat
