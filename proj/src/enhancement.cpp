#include "splat/enhancement.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace splat {

Mat temporal_compress(const TemporalCompressor& tc, const Mat& feats,
                      TemporalCompressCache* cache, Mat* weights_out) {
  if (tc.window < 0) throw std::invalid_argument("temporal_compress: W < 0");
  if (feats.rows < 1) throw std::invalid_argument("temporal_compress: empty input");
  TemporalCompressCache local;
  TemporalCompressCache& c = cache ? *cache : local;
  c.valid = true;
  c.input = feats;
  c.projected = tc.proj.forward_cached(feats, c.proj);
  c.scores = tc.scorer.forward_cached(feats, c.scorer);
  const int64_t t_n = feats.rows;
  const int64_t f = c.projected.cols;
  const int w = tc.window;
  Mat out(t_n, f);
  if (weights_out) *weights_out = Mat(t_n, 2 * w + 1);
  for (int64_t t = 0; t < t_n; ++t) {
    const int64_t a = std::max<int64_t>(0, t - w);
    const int64_t b = std::min<int64_t>(t_n - 1, t + w);
    double m = c.scores(a, 0);
    for (int64_t j = a + 1; j <= b; ++j) m = std::max(m, c.scores(j, 0));
    double z = 0;
    for (int64_t j = a; j <= b; ++j) z += std::exp(c.scores(j, 0) - m);
    double* o = out.row(t);
    for (int64_t j = a; j <= b; ++j) {
      const double wj = std::exp(c.scores(j, 0) - m) / z;
      if (weights_out) (*weights_out)(t, j - t + w) = wj;
      const double* pr = c.projected.row(j);
      for (int64_t k = 0; k < f; ++k) o[k] += wj * pr[k];
    }
  }
  return out;
}

Mat temporal_compress_backward(const TemporalCompressor& tc,
                               const TemporalCompressCache& cache,
                               const Mat& d_out, DenseGrads& g_proj,
                               DenseGrads& g_scorer) {
  if (!cache.valid) throw StateError("temporal_compress backward without cache");
  const int64_t t_n = cache.projected.rows;
  const int64_t f = cache.projected.cols;
  const int w = tc.window;
  Mat d_proj_rows(t_n, f);
  Mat d_scores(t_n, 1);
  std::vector<double> wj(static_cast<size_t>(2 * w + 1));
  std::vector<double> qj(static_cast<size_t>(2 * w + 1));
  for (int64_t t = 0; t < t_n; ++t) {
    const int64_t a = std::max<int64_t>(0, t - w);
    const int64_t b = std::min<int64_t>(t_n - 1, t + w);
    double m = cache.scores(a, 0);
    for (int64_t j = a + 1; j <= b; ++j) m = std::max(m, cache.scores(j, 0));
    double z = 0;
    for (int64_t j = a; j <= b; ++j) z += std::exp(cache.scores(j, 0) - m);
    const double* dr = d_out.row(t);
    double mix = 0;
    for (int64_t j = a; j <= b; ++j) {
      const size_t s = static_cast<size_t>(j - a);
      wj[s] = std::exp(cache.scores(j, 0) - m) / z;
      const double* pr = cache.projected.row(j);
      double q = 0;
      for (int64_t k = 0; k < f; ++k) q += pr[k] * dr[k];
      qj[s] = q;
      mix += wj[s] * q;
    }
    for (int64_t j = a; j <= b; ++j) {
      const size_t s = static_cast<size_t>(j - a);
      double* dpr = d_proj_rows.row(j);
      for (int64_t k = 0; k < f; ++k) dpr[k] += wj[s] * dr[k];
      d_scores(j, 0) += wj[s] * (qj[s] - mix);
    }
  }
  Mat d_feats = tc.proj.backward(cache.proj, d_proj_rows, g_proj);
  Mat d_feats2 = tc.scorer.backward(cache.scorer, d_scores, g_scorer);
  add_inplace(d_feats, d_feats2);
  return d_feats;
}

void enhance(const EnhanceNet& net, const Mat& f_c, const double* a_t,
             const double* p_t, int f_cond, Mat& fa_hat, Mat& fp_hat,
             EnhanceCache* cache) {
  if (net.mlp_a.out_dim() != f_cond || net.mlp_ap.in_dim() != f_cond)
    throw ShapeError("enhance: F_cond disagrees with the gating nets");
  if (f_c.cols != net.mlp_a.in_dim())
    throw ShapeError("enhance: spatial feature width " + std::to_string(f_c.cols) +
                     ", nets expect " + std::to_string(net.mlp_a.in_dim()));
  EnhanceCache local;
  EnhanceCache& c = cache ? *cache : local;
  c.valid = true;
  c.n = f_c.rows;
  c.a_t.assign(a_t, a_t + f_cond);
  c.p_t.assign(p_t, p_t + f_cond);
  c.gate_a = net.mlp_a.forward_cached(f_c, c.a);
  c.gate_p = net.mlp_p.forward_cached(f_c, c.p);
  fa_hat = Mat(f_c.rows, f_cond);
  c.fp_raw = Mat(f_c.rows, f_cond);
  for (int64_t i = 0; i < f_c.rows; ++i)
    for (int64_t j = 0; j < f_cond; ++j) {
      fa_hat(i, j) = c.gate_a(i, j) * a_t[j];
      c.fp_raw(i, j) = c.gate_p(i, j) * p_t[j];
    }
  c.fa_hat = fa_hat;
  c.gate_ap = net.mlp_ap.forward_cached(fa_hat, c.ap);
  fp_hat = Mat(f_c.rows, f_cond);
  for (int64_t i = 0; i < f_c.rows; ++i)
    for (int64_t j = 0; j < f_cond; ++j)
      fp_hat(i, j) = c.gate_ap(i, j) * c.fp_raw(i, j);
}

Mat enhance_backward(const EnhanceNet& net, const EnhanceCache& cache,
                     const Mat& d_fa_hat, const Mat& d_fp_hat,
                     DenseGrads& g_a, DenseGrads& g_p, DenseGrads& g_ap,
                     double* d_a_t, double* d_p_t) {
  if (!cache.valid) throw StateError("enhance backward without cache");
  const int64_t n = cache.n;
  const int64_t f = cache.gate_a.cols;
  Mat d_gate_ap(n, f), d_fp_raw(n, f);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < f; ++j) {
      d_gate_ap(i, j) = d_fp_hat(i, j) * cache.fp_raw(i, j);
      d_fp_raw(i, j) = d_fp_hat(i, j) * cache.gate_ap(i, j);
    }
  Mat d_fa_total = net.mlp_ap.backward(cache.ap, d_gate_ap, g_ap);
  add_inplace(d_fa_total, d_fa_hat);
  Mat d_gate_a(n, f), d_gate_p(n, f);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < f; ++j) {
      d_gate_a(i, j) = d_fa_total(i, j) * cache.a_t[static_cast<size_t>(j)];
      d_a_t[j] += d_fa_total(i, j) * cache.gate_a(i, j);
      d_gate_p(i, j) = d_fp_raw(i, j) * cache.p_t[static_cast<size_t>(j)];
      d_p_t[j] += d_fp_raw(i, j) * cache.gate_p(i, j);
    }
  Mat d_f_c = net.mlp_a.backward(cache.a, d_gate_a, g_a);
  Mat d_f_c2 = net.mlp_p.backward(cache.p, d_gate_p, g_p);
  add_inplace(d_f_c, d_f_c2);
  return d_f_c;
}

namespace {

// L2-normalized rows; throws naming the zero-norm frame.
Mat normalized_rows(const Mat& rows, const char* which, std::vector<double>* norms) {
  Mat u(rows.rows, rows.cols);
  norms->resize(static_cast<size_t>(rows.rows));
  for (int64_t i = 0; i < rows.rows; ++i) {
    double s = 0;
    for (int64_t j = 0; j < rows.cols; ++j) s += rows(i, j) * rows(i, j);
    const double n = std::sqrt(s);
    if (n == 0.0)
      throw DegenerateFeatureError(std::string("contrastive_loss: ") + which +
                                   " row for frame " + std::to_string(i) +
                                   " has zero norm");
    (*norms)[static_cast<size_t>(i)] = n;
    for (int64_t j = 0; j < rows.cols; ++j) u(i, j) = rows(i, j) / n;
  }
  return u;
}

}  // namespace

double contrastive_loss(const Mat& a_rows, const Mat& p_rows,
                        const ContrastiveOpts& opts, Mat* d_a, Mat* d_p) {
  if (a_rows.rows != p_rows.rows || a_rows.cols != p_rows.cols)
    throw ShapeError("contrastive_loss: row matrices disagree");
  if (a_rows.rows < 2)
    throw std::invalid_argument("contrastive_loss: need T >= 2");
  if (opts.tau <= 0) throw std::invalid_argument("contrastive_loss: tau <= 0");
  const int64_t t_n = a_rows.rows;
  std::vector<double> na, np;
  Mat u = normalized_rows(a_rows, "audio", &na);
  Mat v = normalized_rows(p_rows, "point", &np);
  Mat sim = matmul_nt(u, v);  // sim(t,k) = u_t . v_k

  Mat d_sim(t_n, t_n);
  double loss = 0;
  // direction 1 walks rows of sim (audio anchors), direction 2 walks columns
  for (int dir = 0; dir < 2; ++dir) {
    for (int64_t t = 0; t < t_n; ++t) {
      double m = -1e300;
      for (int64_t k = 0; k < t_n; ++k) {
        if (k == t && !opts.include_positive) continue;
        const double s = (dir == 0 ? sim(t, k) : sim(k, t)) / opts.tau;
        m = std::max(m, s);
      }
      double z = 0;
      for (int64_t k = 0; k < t_n; ++k) {
        if (k == t && !opts.include_positive) continue;
        const double s = (dir == 0 ? sim(t, k) : sim(k, t)) / opts.tau;
        z += std::exp(s - m);
      }
      loss += -sim(t, t) / opts.tau + m + std::log(z);
      if (d_a || d_p) {
        d_sim(t, t) += -1.0 / opts.tau;
        for (int64_t k = 0; k < t_n; ++k) {
          if (k == t && !opts.include_positive) continue;
          const double s = (dir == 0 ? sim(t, k) : sim(k, t)) / opts.tau;
          const double w = std::exp(s - m) / z;
          if (dir == 0)
            d_sim(t, k) += w / opts.tau;
          else
            d_sim(k, t) += w / opts.tau;
        }
      }
    }
  }
  if (d_a || d_p) {
    Mat du = matmul(d_sim, v);       // du_t = sum_k d_sim(t,k) v_k
    Mat dv = matmul_tn(d_sim, u);    // dv_k = sum_t d_sim(t,k) u_t
    if (d_a)
      for (int64_t i = 0; i < t_n; ++i) {
        double dot = 0;
        for (int64_t j = 0; j < u.cols; ++j) dot += u(i, j) * du(i, j);
        for (int64_t j = 0; j < u.cols; ++j)
          (*d_a)(i, j) += (du(i, j) - u(i, j) * dot) / na[static_cast<size_t>(i)];
      }
    if (d_p)
      for (int64_t i = 0; i < t_n; ++i) {
        double dot = 0;
        for (int64_t j = 0; j < v.cols; ++j) dot += v(i, j) * dv(i, j);
        for (int64_t j = 0; j < v.cols; ++j)
          (*d_p)(i, j) += (dv(i, j) - v(i, j) * dot) / np[static_cast<size_t>(i)];
      }
  }
  return loss;
}

double retrieval_top1(const Mat& a_rows, const Mat& p_rows) {
  if (a_rows.rows != p_rows.rows || a_rows.cols != p_rows.cols)
    throw ShapeError("retrieval_top1: row matrices disagree");
  std::vector<double> na, np;
  Mat u = normalized_rows(a_rows, "audio", &na);
  Mat v = normalized_rows(p_rows, "point", &np);
  Mat sim = matmul_nt(u, v);
  int64_t hits = 0;
  for (int64_t t = 0; t < sim.rows; ++t) {
    int64_t best = 0;
    for (int64_t k = 1; k < sim.cols; ++k)
      if (sim(t, k) > sim(t, best)) best = k;
    if (best == t) ++hits;
  }
  return double(hits) / double(sim.rows);
}

}  // namespace splat
