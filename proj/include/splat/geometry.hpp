#pragma once

#include <array>
#include <cmath>

#include "splat/errors.hpp"

namespace splat {

struct Vec2 {
  double x = 0, y = 0;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
};

// w-first quaternion; stored unnormalized during optimization and normalized
// at every consumption point.
struct Quat {
  double w = 1, x = 0, y = 0, z = 0;

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
};

// Full 3x3 matrix, row-major.
struct Mat3 {
  std::array<double, 9> m{};

  static Mat3 identity() {
    Mat3 r;
    r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    return r;
  }
  static Mat3 diag(double a, double b, double c) {
    Mat3 r;
    r.m = {a, 0, 0, 0, b, 0, 0, 0, c};
    return r;
  }
  double& operator()(int r, int c) { return m[r * 3 + c]; }
  double operator()(int r, int c) const { return m[r * 3 + c]; }

  Mat3 operator*(const Mat3& o) const;
  Vec3 operator*(const Vec3& v) const;
  Mat3 operator+(const Mat3& o) const;
  Mat3 transpose() const;
  double det() const;
  double frobenius() const;
};

// Symmetric PSD 3x3 covariance, kept as a full matrix.
using Covariance3 = Mat3;

// Full 2x2 matrix.
struct Mat2 {
  double a = 0, b = 0, c = 0, d = 0;  // [[a b];[c d]]

  double det() const { return a * d - b * c; }
};

struct Camera {
  Mat3 R;          // world-to-view rotation (orthonormal)
  Vec3 t;          // world-to-view translation: x_view = R*x + t
  double fx = 1, fy = 1;
  double cx = 0, cy = 0;
  int width = 0, height = 0;
  double near = 0.01;  // view-space z of the near plane
};

Quat quat_normalize(const Quat& q);
// Pulls dL/d(unit q) back to dL/d(raw q): (I - u u^T)/|q| applied to the grad.
Quat quat_normalize_backward(const Quat& raw, const Quat& d_unit);

// Rotation matrix of a unit quaternion.
Mat3 rotation_from_unit_quat(const Quat& q);
// dL/d(unit q) given dL/dR.
Quat rotation_from_unit_quat_backward(const Quat& q, const Mat3& dR);

// Sigma = R diag(s^2) R^T. r must be normalized, s strictly positive.
Covariance3 covariance_from_rs(const Quat& r, const Vec3& s);
// Gradients w.r.t. the unit quaternion and the scales, given dL/dSigma (full
// matrix convention).
void covariance_from_rs_backward(const Quat& r, const Vec3& s, const Mat3& d_sigma,
                                 Quat& d_unit_quat, Vec3& d_scale);

// exp(-1/2 (p-x)^T Sigma^{-1} (p-x)); throws SingularCovarianceError when the
// covariance is numerically singular (condition estimate above 1e12).
double gaussian_eval(const Covariance3& sigma, const Vec3& x, const Vec3& p);

struct ProjectedGaussian {
  Vec2 mean;     // pixel coordinates
  Mat2 cov;      // screen-space covariance after low-pass dilation
  double depth = 0;
  bool culled = false;
};

// Low-pass dilation added to the screen covariance diagonal (px^2).
inline constexpr double kScreenDilation = 0.3;

// EWA projection of a world-space Gaussian. Points with view depth <= near
// return a culled sentinel.
ProjectedGaussian project_gaussian(const Covariance3& sigma, const Vec3& x,
                                   const Camera& cam);

// Gradients w.r.t. Sigma (full-matrix convention) and the world position.
// d_depth flows from any consumer of the view depth (zero in rendering, where
// depth only orders splats).
void project_gaussian_backward(const Covariance3& sigma, const Vec3& x,
                               const Camera& cam, const Vec2& d_mean,
                               const Mat2& d_cov, double d_depth, Mat3& d_sigma,
                               Vec3& d_x);

// Camera helper: position `eye` looking at `target` with +y up in the image
// (right-handed, z-forward view space).
Camera look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up,
                      double fx, double fy, int width, int height, double near);

}  // namespace splat
