#pragma once

#include <vector>

#include "splat/image.hpp"
#include "splat/mat.hpp"

namespace splat {

// Mean absolute difference over pixels and channels.
double loss_l1(const Image& img, const Image& ref);
// Accumulates d_loss * dL/d_img into d_img (sign subgradient, zero at ties).
void loss_l1_backward(const Image& img, const Image& ref, double d_loss,
                      std::vector<double>& d_img);

// Mean SSIM over valid 11x11 windows (Gaussian sigma 1.5, C1=0.01^2,
// C2=0.03^2), averaged over channels. Both dimensions must be >= 11.
double metric_ssim(const Image& img, const Image& ref);
void metric_ssim_backward(const Image& img, const Image& ref, double d_loss,
                          std::vector<double>& d_img);

// (1 - SSIM) / 2
double loss_dssim(const Image& img, const Image& ref);
void loss_dssim_backward(const Image& img, const Image& ref, double d_loss,
                         std::vector<double>& d_img);

struct Patch {
  int x = 0, y = 0, size = 0;
};

// Mean over patches of the mean over pyramid levels of the L1 distance;
// level l mean-pools the patch by 2^l (odd trailing rows/columns dropped,
// empty levels skipped). Patches must lie inside the image.
double loss_perceptual_proxy(const Image& img, const Image& ref,
                             const std::vector<Patch>& patches,
                             int levels = 3);
void loss_perceptual_proxy_backward(const Image& img, const Image& ref,
                                    const std::vector<Patch>& patches,
                                    double d_loss, std::vector<double>& d_img,
                                    int levels = 3);

double image_mse(const Image& img, const Image& ref);
// 10*log10(1/MSE); +infinity sentinel for identical images.
double psnr_from_mse(double mse);
double metric_psnr(const Image& img, const Image& ref);

// Mean Euclidean distance between matched landmark rows (both K x 2).
double metric_lmd(const Mat& pred, const Mat& ref);

}  // namespace splat
