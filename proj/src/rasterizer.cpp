#include "splat/rasterizer.hpp"

#include <algorithm>
#include <cmath>

#include "splat/parallel.hpp"

namespace splat {

namespace {

double clamp01(double v, bool* clamped) {
  if (v < 0) {
    *clamped = true;
    return 0;
  }
  if (v > 1) {
    *clamped = true;
    return 1;
  }
  *clamped = false;
  return v;
}

}  // namespace

FrameBuffer rasterize(const GaussianSet& set, const DeformDelta& delta,
                      const Camera& cam, const RenderOptions& opt,
                      RasterCache* cache_out) {
  const int64_t n = set.count();
  const int w = cam.width, h = cam.height;
  RasterCache local_cache;
  RasterCache& c = cache_out ? *cache_out : local_cache;
  c = RasterCache();
  c.cam = cam;
  c.opt = opt;
  c.n = n;
  c.tiles_x = (w + opt.tile - 1) / opt.tile;
  c.tiles_y = (h + opt.tile - 1) / opt.tile;
  c.culled.assign(n, 1);
  c.mean.resize(n);
  c.cov_a.resize(n);
  c.cov_b.resize(n);
  c.cov_d.resize(n);
  c.inv_a.resize(n);
  c.inv_b.resize(n);
  c.inv_d.resize(n);
  c.alpha.resize(n);
  c.rgb.resize(n);
  c.clamped.resize(n);
  c.unit_rot.resize(n);
  c.raw_rot.resize(n);
  c.scale.resize(n);
  c.world_pos.resize(n);
  c.sigma.resize(n);

  std::vector<double> depth(n, 0.0);
  std::vector<double> radius(n, 0.0);

  // decode + project, element-independent
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      Vec3 x{set.pos(i, 0), set.pos(i, 1), set.pos(i, 2)};
      if (delta.dx)
        x = x + Vec3{(*delta.dx)(i, 0), (*delta.dx)(i, 1), (*delta.dx)(i, 2)};
      Quat raw{set.rot(i, 0), set.rot(i, 1), set.rot(i, 2), set.rot(i, 3)};
      if (delta.drot) {
        raw.w += (*delta.drot)(i, 0);
        raw.x += (*delta.drot)(i, 1);
        raw.y += (*delta.drot)(i, 2);
        raw.z += (*delta.drot)(i, 3);
      }
      Vec3 ls{set.log_scale(i, 0), set.log_scale(i, 1), set.log_scale(i, 2)};
      if (delta.dls)
        ls = ls + Vec3{(*delta.dls)(i, 0), (*delta.dls)(i, 1), (*delta.dls)(i, 2)};
      Vec3 s{std::exp(ls.x), std::exp(ls.y), std::exp(ls.z)};
      Quat u = quat_normalize(raw);
      Covariance3 sig = covariance_from_rs(u, s);
      ProjectedGaussian pg = project_gaussian(sig, x, cam);
      c.raw_rot[i] = raw;
      c.unit_rot[i] = u;
      c.scale[i] = s;
      c.world_pos[i] = x;
      c.sigma[i] = sig;
      c.alpha[i] = sigmoid(set.opacity_raw(i, 0));
      for (int ch = 0; ch < 3; ++ch) {
        bool cl = false;
        c.rgb[i][ch] = clamp01(set.color(i, ch), &cl);
        c.clamped[i][ch] = cl ? 1 : 0;
      }
      if (pg.culled) continue;
      double det = pg.cov.a * pg.cov.d - pg.cov.b * pg.cov.c;
      if (!(det > 0)) continue;
      c.culled[i] = 0;
      c.mean[i] = pg.mean;
      c.cov_a[i] = pg.cov.a;
      c.cov_b[i] = pg.cov.b;
      c.cov_d[i] = pg.cov.d;
      c.inv_a[i] = pg.cov.d / det;
      c.inv_b[i] = -pg.cov.b / det;
      c.inv_d[i] = pg.cov.a / det;
      depth[i] = pg.depth;
      double mid = 0.5 * (pg.cov.a + pg.cov.d);
      double disc = std::sqrt(std::max(0.0, mid * mid - det));
      double lmax = mid + disc;
      radius[i] = 3.0 * std::sqrt(std::max(0.0, lmax)) + 1.0;
    }
  });

  // global front-to-back order, ties by index
  std::vector<int> order;
  order.reserve(n);
  for (int64_t i = 0; i < n; ++i)
    if (!c.culled[i]) order.push_back(static_cast<int>(i));
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (depth[a] != depth[b]) return depth[a] < depth[b];
    return a < b;
  });

  c.tile_lists.assign(size_t(c.tiles_x) * c.tiles_y, {});
  for (int idx : order) {
    double r = radius[idx];
    int tx0 = std::max(0, int(std::floor((c.mean[idx].x - r) / opt.tile)));
    int tx1 = std::min(c.tiles_x - 1, int(std::floor((c.mean[idx].x + r) / opt.tile)));
    int ty0 = std::max(0, int(std::floor((c.mean[idx].y - r) / opt.tile)));
    int ty1 = std::min(c.tiles_y - 1, int(std::floor((c.mean[idx].y + r) / opt.tile)));
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx)
        c.tile_lists[size_t(ty) * c.tiles_x + tx].push_back(idx);
  }

  FrameBuffer fb;
  fb.color = Image(w, h);
  fb.transmittance.assign(size_t(w) * h, 1.0);
  fb.contrib.assign(size_t(w) * h, 0);
  c.final_t.assign(size_t(w) * h, 1.0);
  c.n_contrib.assign(size_t(w) * h, 0);

  const int64_t ntiles = int64_t(c.tiles_x) * c.tiles_y;
  parallel_for(ntiles, [&](int64_t lo, int64_t hi) {
    for (int64_t t = lo; t < hi; ++t) {
      const auto& list = c.tile_lists[t];
      int ty = int(t / c.tiles_x), tx = int(t % c.tiles_x);
      int px0 = tx * opt.tile, py0 = ty * opt.tile;
      int px1 = std::min(px0 + opt.tile, w), py1 = std::min(py0 + opt.tile, h);
      for (int py = py0; py < py1; ++py) {
        for (int px = px0; px < px1; ++px) {
          double cx = px + 0.5, cy = py + 0.5;
          double T = 1.0, col[3] = {0, 0, 0};
          int cnt = 0;
          for (int idx : list) {
            double dx = cx - c.mean[idx].x, dy = cy - c.mean[idx].y;
            double power = -0.5 * (c.inv_a[idx] * dx * dx +
                                   2.0 * c.inv_b[idx] * dx * dy +
                                   c.inv_d[idx] * dy * dy);
            if (power < opt.power_min) continue;
            double ahat = c.alpha[idx] * std::exp(power);
            if (ahat > opt.alpha_clamp) ahat = opt.alpha_clamp;
            double wgt = ahat * T;
            for (int ch = 0; ch < 3; ++ch) col[ch] += c.rgb[idx][ch] * wgt;
            T *= 1.0 - ahat;
            ++cnt;
            if (T < opt.transmittance_stop) break;
          }
          size_t pix = size_t(py) * w + px;
          for (int ch = 0; ch < 3; ++ch)
            fb.color.px[pix * 3 + ch] = col[ch] + T * opt.background[ch];
          fb.transmittance[pix] = T;
          fb.contrib[pix] = cnt;
          c.final_t[pix] = T;
          c.n_contrib[pix] = cnt;
        }
      }
    }
  });
  c.valid = true;
  return fb;
}

void rasterize_backward(const RasterCache& c, const std::vector<double>& d_image,
                        RasterGrads& grads, Mat* screen_grad_norm) {
  if (!c.valid) throw StateError("rasterize_backward: no forward cache");
  const int w = c.cam.width, h = c.cam.height;
  if (d_image.size() != size_t(w) * h * 3)
    throw ShapeError("rasterize_backward: upstream image size mismatch");
  if (grads.pos.rows != c.n) grads.init(c.n);

  const int64_t ntiles = int64_t(c.tiles_x) * c.tiles_y;
  // per-tile scratch, reduced in tile order afterwards: 10 slots per entry
  // (dmean xy, dcov abcd, dalpha, dcolor rgb)
  std::vector<std::vector<double>> tile_acc(ntiles);

  parallel_for(ntiles, [&](int64_t lo, int64_t hi) {
    std::vector<int> hit;       // contributor positions in the tile list
    std::vector<double> hit_ahat, hit_T, hit_G;
    for (int64_t t = lo; t < hi; ++t) {
      const auto& list = c.tile_lists[t];
      if (list.empty()) continue;
      auto& acc = tile_acc[t];
      acc.assign(list.size() * 10, 0.0);
      int ty = int(t / c.tiles_x), tx = int(t % c.tiles_x);
      int px0 = tx * c.opt.tile, py0 = ty * c.opt.tile;
      int px1 = std::min(px0 + c.opt.tile, w), py1 = std::min(py0 + c.opt.tile, h);
      for (int py = py0; py < py1; ++py) {
        for (int px = px0; px < px1; ++px) {
          size_t pix = size_t(py) * w + px;
          int k = c.n_contrib[pix];
          if (k == 0) continue;
          const double* g = d_image.data() + pix * 3;
          if (g[0] == 0 && g[1] == 0 && g[2] == 0) continue;
          double cx = px + 0.5, cy = py + 0.5;
          // pass 1: replay the forward walk to recover contributors
          hit.clear();
          hit_ahat.clear();
          hit_T.clear();
          hit_G.clear();
          double T = 1.0;
          for (size_t li = 0; li < list.size() && int(hit.size()) < k; ++li) {
            int idx = list[li];
            double dx = cx - c.mean[idx].x, dy = cy - c.mean[idx].y;
            double power = -0.5 * (c.inv_a[idx] * dx * dx +
                                   2.0 * c.inv_b[idx] * dx * dy +
                                   c.inv_d[idx] * dy * dy);
            if (power < c.opt.power_min) continue;
            double G = std::exp(power);
            double ahat = c.alpha[idx] * G;
            if (ahat > c.opt.alpha_clamp) ahat = c.opt.alpha_clamp;
            hit.push_back(static_cast<int>(li));
            hit_ahat.push_back(ahat);
            hit_T.push_back(T);  // transmittance in front of this splat
            hit_G.push_back(G);
            T *= 1.0 - ahat;
          }
          // pass 2: back-to-front with suffix accumulator
          double S = (g[0] * c.opt.background[0] + g[1] * c.opt.background[1] +
                      g[2] * c.opt.background[2]) *
                     c.final_t[pix];
          for (int hi2 = int(hit.size()) - 1; hi2 >= 0; --hi2) {
            int li = hit[hi2];
            int idx = list[li];
            double ahat = hit_ahat[hi2], Ti = hit_T[hi2], G = hit_G[hi2];
            double gdotc = g[0] * c.rgb[idx][0] + g[1] * c.rgb[idx][1] +
                           g[2] * c.rgb[idx][2];
            double* a = acc.data() + size_t(li) * 10;
            // color gradient
            for (int ch = 0; ch < 3; ++ch) a[7 + ch] += g[ch] * ahat * Ti;
            // density gradient only below the clamp (saturated splats sit at
            // the clamp boundary and get none)
            bool saturated =
                c.alpha[idx] * G > c.opt.alpha_clamp || 1.0 - ahat < 1e-9;
            if (!saturated) {
              double d_ahat = gdotc * Ti - S / (1.0 - ahat);
              double d_alpha = d_ahat * G;
              double d_power = d_ahat * c.alpha[idx] * G;
              a[6] += d_alpha;
              double dx = cx - c.mean[idx].x, dy = cy - c.mean[idx].y;
              double adx = c.inv_a[idx] * dx + c.inv_b[idx] * dy;
              double ady = c.inv_b[idx] * dx + c.inv_d[idx] * dy;
              // d mean = d_power * (A d)
              a[0] += d_power * adx;
              a[1] += d_power * ady;
              // dL/dA = -0.5 d_power * d d^T, then dC = -A (dL/dA) A
              double m00 = -0.5 * d_power * dx * dx;
              double m01 = -0.5 * d_power * dx * dy;
              double m11 = -0.5 * d_power * dy * dy;
              // A*M
              double am00 = c.inv_a[idx] * m00 + c.inv_b[idx] * m01;
              double am01 = c.inv_a[idx] * m01 + c.inv_b[idx] * m11;
              double am10 = c.inv_b[idx] * m00 + c.inv_d[idx] * m01;
              double am11 = c.inv_b[idx] * m01 + c.inv_d[idx] * m11;
              // (A*M)*A
              a[2] -= am00 * c.inv_a[idx] + am01 * c.inv_b[idx];
              a[3] -= am00 * c.inv_b[idx] + am01 * c.inv_d[idx];
              a[4] -= am10 * c.inv_a[idx] + am11 * c.inv_b[idx];
              a[5] -= am10 * c.inv_b[idx] + am11 * c.inv_d[idx];
            }
            S += gdotc * ahat * Ti;
          }
        }
      }
    }
  });

  // fixed-order reduction across tiles
  std::vector<double> gm(size_t(c.n) * 2, 0.0), gc(size_t(c.n) * 4, 0.0);
  std::vector<double> ga(c.n, 0.0), gcol(size_t(c.n) * 3, 0.0);
  for (int64_t t = 0; t < ntiles; ++t) {
    const auto& list = c.tile_lists[t];
    const auto& acc = tile_acc[t];
    if (acc.empty()) continue;
    for (size_t li = 0; li < list.size(); ++li) {
      int idx = list[li];
      const double* a = acc.data() + li * 10;
      gm[size_t(idx) * 2] += a[0];
      gm[size_t(idx) * 2 + 1] += a[1];
      for (int k = 0; k < 4; ++k) gc[size_t(idx) * 4 + k] += a[2 + k];
      ga[idx] += a[6];
      for (int k = 0; k < 3; ++k) gcol[size_t(idx) * 3 + k] += a[7 + k];
    }
  }

  // chain through projection and decode, element-independent
  parallel_for(c.n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      if (c.culled[i]) continue;
      Vec2 d_mean{gm[size_t(i) * 2], gm[size_t(i) * 2 + 1]};
      Mat2 d_cov{gc[size_t(i) * 4], gc[size_t(i) * 4 + 1], gc[size_t(i) * 4 + 2],
                 gc[size_t(i) * 4 + 3]};
      Mat3 d_sigma;
      Vec3 d_x;
      project_gaussian_backward(c.sigma[i], c.world_pos[i], c.cam, d_mean, d_cov,
                                0.0, d_sigma, d_x);
      Quat d_unit;
      Vec3 d_scale;
      covariance_from_rs_backward(c.unit_rot[i], c.scale[i], d_sigma, d_unit,
                                  d_scale);
      Quat d_raw = quat_normalize_backward(c.raw_rot[i], d_unit);
      grads.pos(i, 0) += d_x.x;
      grads.pos(i, 1) += d_x.y;
      grads.pos(i, 2) += d_x.z;
      grads.rot(i, 0) += d_raw.w;
      grads.rot(i, 1) += d_raw.x;
      grads.rot(i, 2) += d_raw.y;
      grads.rot(i, 3) += d_raw.z;
      grads.log_scale(i, 0) += d_scale.x * c.scale[i].x;
      grads.log_scale(i, 1) += d_scale.y * c.scale[i].y;
      grads.log_scale(i, 2) += d_scale.z * c.scale[i].z;
      double al = c.alpha[i];
      grads.opacity_raw(i, 0) += ga[i] * al * (1.0 - al);
      for (int ch = 0; ch < 3; ++ch)
        if (!c.clamped[i][ch]) grads.color(i, ch) += gcol[size_t(i) * 3 + ch];
      if (screen_grad_norm) {
        double nx = d_mean.x * 2.0 / c.cam.width;
        double ny = d_mean.y * 2.0 / c.cam.height;
        (*screen_grad_norm)(i, 0) += std::sqrt(nx * nx + ny * ny);
      }
    }
  });
}

}  // namespace splat
