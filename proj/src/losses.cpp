#include "splat/losses.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace splat {

namespace {

constexpr int kWin = 11;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWin>& ssim_kernel() {
  static const std::array<double, kWin> k = [] {
    std::array<double, kWin> a{};
    double s = 0;
    for (int i = 0; i < kWin; ++i) {
      double d = i - (kWin - 1) / 2.0;
      a[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      s += a[i];
    }
    for (double& x : a) x /= s;
    return a;
  }();
  return k;
}

void require_same_shape(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height)
    throw ShapeError("image shape mismatch: " + std::to_string(a.width) + "x" +
                     std::to_string(a.height) + " vs " +
                     std::to_string(b.width) + "x" + std::to_string(b.height));
}

// Valid-mode separable Gaussian filter, rows then columns.
void filter_valid(const std::vector<double>& src, int w, int h,
                  std::vector<double>& tmp, std::vector<double>& dst) {
  const auto& k = ssim_kernel();
  const int ow = w - kWin + 1, oh = h - kWin + 1;
  tmp.assign(size_t(ow) * h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < kWin; ++i) acc += k[i] * src[size_t(y) * w + x + i];
      tmp[size_t(y) * ow + x] = acc;
    }
  dst.assign(size_t(ow) * oh, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < kWin; ++i) acc += k[i] * tmp[size_t(y + i) * ow + x];
      dst[size_t(y) * ow + x] = acc;
    }
}

// Adjoint of filter_valid: scatters window gradients back to source pixels.
void filter_valid_adjoint(const std::vector<double>& g_dst, int w, int h,
                          std::vector<double>& g_tmp,
                          std::vector<double>& g_src) {
  const auto& k = ssim_kernel();
  const int ow = w - kWin + 1, oh = h - kWin + 1;
  g_tmp.assign(size_t(ow) * h, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const double g = g_dst[size_t(y) * ow + x];
      for (int i = 0; i < kWin; ++i) g_tmp[size_t(y + i) * ow + x] += k[i] * g;
    }
  g_src.assign(size_t(w) * h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      const double g = g_tmp[size_t(y) * ow + x];
      for (int i = 0; i < kWin; ++i) g_src[size_t(y) * w + x + i] += k[i] * g;
    }
}

// Mean SSIM; when d_img is non-null, accumulates d_loss * dSSIM/d_img.
double ssim_core(const Image& img, const Image& ref, double d_loss,
                 std::vector<double>* d_img) {
  require_same_shape(img, ref);
  const int w = img.width, h = img.height;
  if (w < kWin || h < kWin)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  const int ow = w - kWin + 1, oh = h - kWin + 1;
  const size_t n_win = size_t(ow) * oh;

  std::vector<double> x(size_t(w) * h), y(size_t(w) * h), prod(size_t(w) * h);
  std::vector<double> tmp, mu1, mu2, ex2, ey2, exy;
  double total = 0;
  for (int c = 0; c < 3; ++c) {
    for (int py = 0; py < h; ++py)
      for (int px = 0; px < w; ++px) {
        const size_t i = size_t(py) * w + px;
        x[i] = img.at(py, px, c);
        y[i] = ref.at(py, px, c);
      }
    filter_valid(x, w, h, tmp, mu1);
    filter_valid(y, w, h, tmp, mu2);
    for (size_t i = 0; i < x.size(); ++i) prod[i] = x[i] * x[i];
    filter_valid(prod, w, h, tmp, ex2);
    for (size_t i = 0; i < x.size(); ++i) prod[i] = y[i] * y[i];
    filter_valid(prod, w, h, tmp, ey2);
    for (size_t i = 0; i < x.size(); ++i) prod[i] = x[i] * y[i];
    filter_valid(prod, w, h, tmp, exy);

    std::vector<double> g_mu1, g_ex2, g_exy;
    if (d_img) {
      g_mu1.assign(n_win, 0.0);
      g_ex2.assign(n_win, 0.0);
      g_exy.assign(n_win, 0.0);
    }
    double acc = 0;
    for (size_t i = 0; i < n_win; ++i) {
      const double m1 = mu1[i], m2 = mu2[i];
      const double s11 = ex2[i] - m1 * m1;
      const double s22 = ey2[i] - m2 * m2;
      const double s12 = exy[i] - m1 * m2;
      const double a1 = 2 * m1 * m2 + kC1;
      const double a2 = 2 * s12 + kC2;
      const double b1 = m1 * m1 + m2 * m2 + kC1;
      const double b2 = s11 + s22 + kC2;
      const double s = (a1 * a2) / (b1 * b2);
      acc += s;
      if (d_img) {
        const double ds = d_loss / (3.0 * double(n_win));
        const double da1 = ds * a2 / (b1 * b2);
        const double da2 = ds * a1 / (b1 * b2);
        const double db1 = -ds * s / b1;
        const double db2 = -ds * s / b2;
        g_mu1[i] = da1 * 2 * m2 + da2 * (-2 * m2) + db1 * 2 * m1 + db2 * (-2 * m1);
        g_ex2[i] = db2;
        g_exy[i] = 2 * da2;
      }
    }
    total += acc / double(n_win);
    if (d_img) {
      std::vector<double> g_tmp, g_src;
      filter_valid_adjoint(g_mu1, w, h, g_tmp, g_src);
      for (int py = 0; py < h; ++py)
        for (int px = 0; px < w; ++px)
          (*d_img)[(size_t(py) * w + px) * 3 + c] += g_src[size_t(py) * w + px];
      filter_valid_adjoint(g_ex2, w, h, g_tmp, g_src);
      for (int py = 0; py < h; ++py)
        for (int px = 0; px < w; ++px)
          (*d_img)[(size_t(py) * w + px) * 3 + c] +=
              g_src[size_t(py) * w + px] * 2.0 * img.at(py, px, c);
      filter_valid_adjoint(g_exy, w, h, g_tmp, g_src);
      for (int py = 0; py < h; ++py)
        for (int px = 0; px < w; ++px)
          (*d_img)[(size_t(py) * w + px) * 3 + c] +=
              g_src[size_t(py) * w + px] * ref.at(py, px, c);
    }
  }
  return total / 3.0;
}

}  // namespace

double loss_l1(const Image& img, const Image& ref) {
  require_same_shape(img, ref);
  double acc = 0;
  for (size_t i = 0; i < img.px.size(); ++i) acc += std::fabs(img.px[i] - ref.px[i]);
  return acc / double(img.px.size());
}

void loss_l1_backward(const Image& img, const Image& ref, double d_loss,
                      std::vector<double>& d_img) {
  require_same_shape(img, ref);
  const double g = d_loss / double(img.px.size());
  for (size_t i = 0; i < img.px.size(); ++i) {
    const double d = img.px[i] - ref.px[i];
    if (d > 0)
      d_img[i] += g;
    else if (d < 0)
      d_img[i] -= g;
  }
}

double metric_ssim(const Image& img, const Image& ref) {
  return ssim_core(img, ref, 0.0, nullptr);
}

void metric_ssim_backward(const Image& img, const Image& ref, double d_loss,
                          std::vector<double>& d_img) {
  ssim_core(img, ref, d_loss, &d_img);
}

double loss_dssim(const Image& img, const Image& ref) {
  return (1.0 - ssim_core(img, ref, 0.0, nullptr)) / 2.0;
}

void loss_dssim_backward(const Image& img, const Image& ref, double d_loss,
                         std::vector<double>& d_img) {
  ssim_core(img, ref, -0.5 * d_loss, &d_img);
}

namespace {

struct Pyramid {
  // level 0 is the raw patch; level l is the 2x mean pool of level l-1
  std::vector<std::vector<double>> lv;
  std::vector<int> side;
};

Pyramid build_pyramid(const Image& im, const Patch& p, int levels) {
  Pyramid pyr;
  if (p.x < 0 || p.y < 0 || p.size <= 0 || p.x + p.size > im.width ||
      p.y + p.size > im.height)
    throw std::invalid_argument("perceptual proxy: patch outside the image");
  std::vector<double> cur(size_t(p.size) * p.size * 3);
  for (int y = 0; y < p.size; ++y)
    for (int x = 0; x < p.size; ++x)
      for (int c = 0; c < 3; ++c)
        cur[(size_t(y) * p.size + x) * 3 + c] = im.at(p.y + y, p.x + x, c);
  int side = p.size;
  pyr.lv.push_back(cur);
  pyr.side.push_back(side);
  for (int l = 1; l < levels; ++l) {
    const int ns = side / 2;
    if (ns == 0) break;
    std::vector<double> nxt(size_t(ns) * ns * 3, 0.0);
    const auto& src = pyr.lv.back();
    for (int y = 0; y < ns; ++y)
      for (int x = 0; x < ns; ++x)
        for (int c = 0; c < 3; ++c) {
          double s = 0;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
              s += src[(size_t(2 * y + dy) * side + 2 * x + dx) * 3 + c];
          nxt[(size_t(y) * ns + x) * 3 + c] = s / 4.0;
        }
    pyr.lv.push_back(std::move(nxt));
    pyr.side.push_back(ns);
    side = ns;
  }
  return pyr;
}

}  // namespace

double loss_perceptual_proxy(const Image& img, const Image& ref,
                             const std::vector<Patch>& patches, int levels) {
  require_same_shape(img, ref);
  if (patches.empty()) return 0.0;
  double total = 0;
  for (const Patch& p : patches) {
    Pyramid a = build_pyramid(img, p, levels);
    Pyramid b = build_pyramid(ref, p, levels);
    double patch_loss = 0;
    for (size_t l = 0; l < a.lv.size(); ++l) {
      double acc = 0;
      for (size_t i = 0; i < a.lv[l].size(); ++i)
        acc += std::fabs(a.lv[l][i] - b.lv[l][i]);
      patch_loss += acc / double(a.lv[l].size());
    }
    total += patch_loss / double(a.lv.size());
  }
  return total / double(patches.size());
}

void loss_perceptual_proxy_backward(const Image& img, const Image& ref,
                                    const std::vector<Patch>& patches,
                                    double d_loss, std::vector<double>& d_img,
                                    int levels) {
  require_same_shape(img, ref);
  if (patches.empty()) return;
  for (const Patch& p : patches) {
    Pyramid a = build_pyramid(img, p, levels);
    Pyramid b = build_pyramid(ref, p, levels);
    const int n_lv = int(a.lv.size());
    for (int l = n_lv - 1; l >= 0; --l) {
      std::vector<double> g(a.lv[l].size(), 0.0);
      const double scale =
          d_loss / (double(patches.size()) * n_lv * double(a.lv[l].size()));
      for (size_t i = 0; i < g.size(); ++i) {
        const double d = a.lv[l][i] - b.lv[l][i];
        if (d > 0)
          g[i] = scale;
        else if (d < 0)
          g[i] = -scale;
      }
      // unpool the level gradient back to the raw patch, then scatter
      for (int k = l; k >= 1; --k) {
        const int ns = a.side[k], side = a.side[k - 1];
        std::vector<double> up(size_t(side) * side * 3, 0.0);
        for (int y = 0; y < ns; ++y)
          for (int x = 0; x < ns; ++x)
            for (int c = 0; c < 3; ++c) {
              const double gv = g[(size_t(y) * ns + x) * 3 + c] / 4.0;
              for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx)
                  up[(size_t(2 * y + dy) * side + 2 * x + dx) * 3 + c] += gv;
            }
        g = std::move(up);
      }
      for (int y = 0; y < p.size; ++y)
        for (int x = 0; x < p.size; ++x)
          for (int c = 0; c < 3; ++c)
            d_img[(size_t(p.y + y) * img.width + p.x + x) * 3 + c] +=
                g[(size_t(y) * p.size + x) * 3 + c];
    }
  }
}

double image_mse(const Image& img, const Image& ref) {
  require_same_shape(img, ref);
  double acc = 0;
  for (size_t i = 0; i < img.px.size(); ++i) {
    const double d = img.px[i] - ref.px[i];
    acc += d * d;
  }
  return acc / double(img.px.size());
}

double psnr_from_mse(double mse) {
  if (mse <= 0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

double metric_psnr(const Image& img, const Image& ref) {
  return psnr_from_mse(image_mse(img, ref));
}

double metric_lmd(const Mat& pred, const Mat& ref) {
  if (pred.rows != ref.rows || pred.cols != 2 || ref.cols != 2)
    throw ShapeError("metric_lmd: landmark shapes disagree");
  if (pred.rows == 0) return 0.0;
  double acc = 0;
  for (int64_t i = 0; i < pred.rows; ++i) {
    const double dx = pred(i, 0) - ref(i, 0), dy = pred(i, 1) - ref(i, 1);
    acc += std::sqrt(dx * dx + dy * dy);
  }
  return acc / double(pred.rows);
}

}  // namespace splat
