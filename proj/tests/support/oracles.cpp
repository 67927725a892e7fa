#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>

namespace testsup {

using namespace splat;

FrameBuffer rasterize_bruteforce(const GaussianSet& set, const DeformDelta& delta,
                                 const Camera& cam, const RenderOptions& opt) {
  const int64_t n = set.count();
  struct Sp {
    Vec2 mean;
    double ia, ib, id;
    double alpha;
    double rgb[3];
    double depth;
    int idx;
  };
  std::vector<Sp> sp;
  for (int64_t i = 0; i < n; ++i) {
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
    Covariance3 sig = covariance_from_rs(quat_normalize(raw), s);
    ProjectedGaussian pg = project_gaussian(sig, x, cam);
    if (pg.culled) continue;
    double det = pg.cov.a * pg.cov.d - pg.cov.b * pg.cov.c;
    if (!(det > 0)) continue;
    Sp e;
    e.mean = pg.mean;
    e.ia = pg.cov.d / det;
    e.ib = -pg.cov.b / det;
    e.id = pg.cov.a / det;
    e.alpha = sigmoid(set.opacity_raw(i, 0));
    for (int ch = 0; ch < 3; ++ch)
      e.rgb[ch] = std::min(1.0, std::max(0.0, set.color(i, ch)));
    e.depth = pg.depth;
    e.idx = static_cast<int>(i);
    sp.push_back(e);
  }
  std::sort(sp.begin(), sp.end(), [](const Sp& a, const Sp& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.idx < b.idx;
  });

  FrameBuffer fb;
  fb.color = Image(cam.width, cam.height);
  fb.transmittance.assign(size_t(cam.width) * cam.height, 1.0);
  fb.contrib.assign(size_t(cam.width) * cam.height, 0);
  for (int py = 0; py < cam.height; ++py)
    for (int px = 0; px < cam.width; ++px) {
      double cx = px + 0.5, cy = py + 0.5;
      double T = 1.0, col[3] = {0, 0, 0};
      int cnt = 0;
      for (const Sp& e : sp) {
        double dx = cx - e.mean.x, dy = cy - e.mean.y;
        double power =
            -0.5 * (e.ia * dx * dx + 2.0 * e.ib * dx * dy + e.id * dy * dy);
        if (power < opt.power_min) continue;
        double ahat = e.alpha * std::exp(power);
        if (ahat > opt.alpha_clamp) ahat = opt.alpha_clamp;
        double wgt = ahat * T;
        for (int ch = 0; ch < 3; ++ch) col[ch] += e.rgb[ch] * wgt;
        T *= 1.0 - ahat;
        ++cnt;
        if (T < opt.transmittance_stop) break;
      }
      size_t pix = size_t(py) * cam.width + px;
      for (int ch = 0; ch < 3; ++ch)
        fb.color.px[pix * 3 + ch] = col[ch] + T * opt.background[ch];
      fb.transmittance[pix] = T;
      fb.contrib[pix] = cnt;
    }
  return fb;
}

double reference_ssim(const Image& a, const Image& b) {
  const int w = a.width, h = a.height, win = 11;
  double kern[11][11];
  double ks = 0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      const double di = i - 5.0, dj = j - 5.0;
      kern[i][j] = std::exp(-(di * di + dj * dj) / (2.0 * 1.5 * 1.5));
      ks += kern[i][j];
    }
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) kern[i][j] /= ks;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  int count = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y + win <= h; ++y)
      for (int x = 0; x + win <= w; ++x) {
        double m1 = 0, m2 = 0, e11 = 0, e22 = 0, e12 = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            const double u = a.at(y + i, x + j, c), v = b.at(y + i, x + j, c);
            m1 += kern[i][j] * u;
            m2 += kern[i][j] * v;
            e11 += kern[i][j] * u * u;
            e22 += kern[i][j] * v * v;
            e12 += kern[i][j] * u * v;
          }
        const double s11 = e11 - m1 * m1, s22 = e22 - m2 * m2, s12 = e12 - m1 * m2;
        total += ((2 * m1 * m2 + c1) * (2 * s12 + c2)) /
                 ((m1 * m1 + m2 * m2 + c1) * (s11 + s22 + c2));
        ++count;
      }
  return total / count;
}

}  // namespace testsup
