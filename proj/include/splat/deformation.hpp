#pragma once

#include "splat/errors.hpp"
#include "splat/mat.hpp"
#include "splat/nn.hpp"

namespace splat {

// Condition-driven per-Gaussian deformation head. Scale/shift decoders read
// the concatenated enhanced conditions; the adaptive net maps fused spatial
// features to 10 channels split 3 (position) / 4 (rotation) / 3 (scale).
// The final adaptive layer is zero-initialized so the decoder starts as the
// exact identity.
struct DeformationDecoder {
  DenseNet scale_net, shift_net;  // 2*F_cond -> hidden -> F_cdim
  DenseNet adaptive;              // F_cdim -> hidden -> 10
  double dx_scale = 0.0;          // 0.01 * scene extent, tanh-bounded
  double dr_scale = 0.1;          // raw quaternion additive step
  double ds_scale = 0.1;          // log-scale additive step

  DeformationDecoder() = default;
  DeformationDecoder(int f_cond, int f_cdim, int hidden, double extent)
      : scale_net({2 * f_cond, hidden, f_cdim}, {Act::ReLU, Act::Identity}),
        shift_net({2 * f_cond, hidden, f_cdim}, {Act::ReLU, Act::Identity}),
        adaptive({f_cdim, hidden, 10}, {Act::ReLU, Act::Identity}),
        dx_scale(0.01 * extent) {}
  void init(Rng& rng) {
    scale_net.init_glorot(rng);
    shift_net.init_glorot(rng);
    adaptive.init_glorot(rng);
    adaptive.zero_last_layer();
  }
};

struct AdainCache {
  bool valid = false;
  Mat f_c, cond;
  DenseCache scale, shift;
  Mat scale_out, shift_out;  // N x F_cdim
};

// Rowwise F'_c[i][j] = (1 + scale[i][j]) * F_c[i][j] + shift[i][j] with
// scale/shift rows decoded from hconcat(fa_hat, fp_hat).
Mat adain_fuse(const DeformationDecoder& dec, const Mat& f_c,
               const Mat& fa_hat, const Mat& fp_hat,
               AdainCache* cache = nullptr);
// Accumulates decoder grads and d_fa_hat/d_fp_hat (same shapes as inputs,
// caller-initialized); returns d_f_c.
Mat adain_fuse_backward(const DeformationDecoder& dec, const AdainCache& cache,
                        const Mat& d_fused, DenseGrads& g_scale,
                        DenseGrads& g_shift, Mat& d_fa_hat, Mat& d_fp_hat);

struct Deformation {
  Mat dx;   // N x 3
  Mat drot; // N x 4
  Mat dls;  // N x 3
};

struct DecodeCache {
  bool valid = false;
  DenseCache adaptive;
  Mat u;  // N x 10, raw adaptive output
};

// dx = dx_scale * tanh(u[:,0:3]); drot = dr_scale * u[:,3:7];
// dls = ds_scale * u[:,7:10].
Deformation decode_deformation(const DeformationDecoder& dec,
                               const Mat& f_prime,
                               DecodeCache* cache = nullptr);
// Accumulates adaptive grads; returns d_f_prime.
Mat decode_deformation_backward(const DeformationDecoder& dec,
                                const DecodeCache& cache,
                                const Deformation& d_delta,
                                DenseGrads& g_adaptive);

}  // namespace splat
