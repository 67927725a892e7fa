#include "splat/deformation.hpp"

#include <cmath>

namespace splat {

Mat adain_fuse(const DeformationDecoder& dec, const Mat& f_c,
               const Mat& fa_hat, const Mat& fp_hat, AdainCache* cache) {
  if (fa_hat.rows != f_c.rows || fp_hat.rows != f_c.rows ||
      fa_hat.cols != fp_hat.cols)
    throw ShapeError("adain_fuse: condition rows do not match feature rows");
  if (2 * fa_hat.cols != dec.scale_net.in_dim())
    throw ShapeError("adain_fuse: condition width does not match decoder");
  if (f_c.cols != dec.scale_net.out_dim())
    throw ShapeError("adain_fuse: feature width does not match decoder");

  Mat cond = hconcat(fa_hat, fp_hat);
  AdainCache local;
  AdainCache& c = cache ? *cache : local;
  Mat scale = dec.scale_net.forward_cached(cond, c.scale);
  Mat shift = dec.shift_net.forward_cached(cond, c.shift);

  Mat fused(f_c.rows, f_c.cols);
  for (int64_t i = 0; i < f_c.size(); ++i)
    fused.v[i] = (1.0 + scale.v[i]) * f_c.v[i] + shift.v[i];

  if (cache) {
    cache->valid = true;
    cache->f_c = f_c;
    cache->cond = cond;
    cache->scale_out = scale;
    cache->shift_out = shift;
  }
  return fused;
}

Mat adain_fuse_backward(const DeformationDecoder& dec, const AdainCache& cache,
                        const Mat& d_fused, DenseGrads& g_scale,
                        DenseGrads& g_shift, Mat& d_fa_hat, Mat& d_fp_hat) {
  if (!cache.valid) throw std::logic_error("adain_fuse_backward: stale cache");
  const Mat& f_c = cache.f_c;
  if (d_fused.rows != f_c.rows || d_fused.cols != f_c.cols)
    throw ShapeError("adain_fuse_backward: gradient shape mismatch");

  Mat d_scale(f_c.rows, f_c.cols), d_fc(f_c.rows, f_c.cols);
  for (int64_t i = 0; i < f_c.size(); ++i) {
    d_scale.v[i] = d_fused.v[i] * f_c.v[i];
    d_fc.v[i] = d_fused.v[i] * (1.0 + cache.scale_out.v[i]);
  }
  Mat d_cond = dec.scale_net.backward(cache.scale, d_scale, g_scale);
  Mat d_cond_shift = dec.shift_net.backward(cache.shift, d_fused, g_shift);
  for (int64_t i = 0; i < d_cond.size(); ++i) d_cond.v[i] += d_cond_shift.v[i];

  const int64_t f_cond = d_fa_hat.cols;
  for (int64_t i = 0; i < f_c.rows; ++i)
    for (int64_t j = 0; j < f_cond; ++j) {
      d_fa_hat(i, j) += d_cond(i, j);
      d_fp_hat(i, j) += d_cond(i, f_cond + j);
    }
  return d_fc;
}

Deformation decode_deformation(const DeformationDecoder& dec,
                               const Mat& f_prime, DecodeCache* cache) {
  if (f_prime.cols != dec.adaptive.in_dim())
    throw ShapeError("decode_deformation: feature width mismatch");
  DecodeCache local;
  DecodeCache& c = cache ? *cache : local;
  Mat u = dec.adaptive.forward_cached(f_prime, c.adaptive);

  const int64_t n = f_prime.rows;
  Deformation out{Mat(n, 3), Mat(n, 4), Mat(n, 3)};
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < 3; ++j)
      out.dx(i, j) = dec.dx_scale * std::tanh(u(i, j));
    for (int64_t j = 0; j < 4; ++j)
      out.drot(i, j) = dec.dr_scale * u(i, 3 + j);
    for (int64_t j = 0; j < 3; ++j)
      out.dls(i, j) = dec.ds_scale * u(i, 7 + j);
  }
  if (cache) {
    cache->valid = true;
    cache->u = u;
  }
  return out;
}

Mat decode_deformation_backward(const DeformationDecoder& dec,
                                const DecodeCache& cache,
                                const Deformation& d_delta,
                                DenseGrads& g_adaptive) {
  if (!cache.valid)
    throw std::logic_error("decode_deformation_backward: stale cache");
  const Mat& u = cache.u;
  Mat d_u(u.rows, 10);
  for (int64_t i = 0; i < u.rows; ++i) {
    for (int64_t j = 0; j < 3; ++j) {
      const double th = std::tanh(u(i, j));
      d_u(i, j) = d_delta.dx(i, j) * dec.dx_scale * (1.0 - th * th);
    }
    for (int64_t j = 0; j < 4; ++j)
      d_u(i, 3 + j) = d_delta.drot(i, j) * dec.dr_scale;
    for (int64_t j = 0; j < 3; ++j)
      d_u(i, 7 + j) = d_delta.dls(i, j) * dec.ds_scale;
  }
  return dec.adaptive.backward(cache.adaptive, d_u, g_adaptive);
}

}  // namespace splat
