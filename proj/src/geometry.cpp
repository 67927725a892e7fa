#include "splat/geometry.hpp"

#include <cmath>

namespace splat {

namespace {

bool finite3(const Vec3& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

bool finite_quat(const Quat& q) {
  return std::isfinite(q.w) && std::isfinite(q.x) && std::isfinite(q.y) &&
         std::isfinite(q.z);
}

}  // namespace

Mat3 Mat3::operator*(const Mat3& o) const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
      r(i, j) = s;
    }
  return r;
}

Vec3 Mat3::operator*(const Vec3& v) const {
  return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
          m[3] * v.x + m[4] * v.y + m[5] * v.z,
          m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

Mat3 Mat3::operator+(const Mat3& o) const {
  Mat3 r;
  for (int i = 0; i < 9; ++i) r.m[i] = m[i] + o.m[i];
  return r;
}

Mat3 Mat3::transpose() const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
  return r;
}

double Mat3::det() const {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

double Mat3::frobenius() const {
  double s = 0;
  for (double e : m) s += e * e;
  return std::sqrt(s);
}

Quat quat_normalize(const Quat& q) {
  double n = q.norm();
  if (!(n > 0) || !std::isfinite(n))
    throw std::invalid_argument("quat_normalize: degenerate quaternion");
  return {q.w / n, q.x / n, q.y / n, q.z / n};
}

Quat quat_normalize_backward(const Quat& raw, const Quat& d_unit) {
  double n = raw.norm();
  Quat u{raw.w / n, raw.x / n, raw.y / n, raw.z / n};
  double dot = u.w * d_unit.w + u.x * d_unit.x + u.y * d_unit.y + u.z * d_unit.z;
  return {(d_unit.w - u.w * dot) / n, (d_unit.x - u.x * dot) / n,
          (d_unit.y - u.y * dot) / n, (d_unit.z - u.z * dot) / n};
}

Mat3 rotation_from_unit_quat(const Quat& q) {
  double w = q.w, x = q.x, y = q.y, z = q.z;
  Mat3 r;
  r.m = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)};
  return r;
}

Quat rotation_from_unit_quat_backward(const Quat& q, const Mat3& dR) {
  double w = q.w, x = q.x, y = q.y, z = q.z;
  const double* g = dR.m.data();
  Quat d;
  // Entry-by-entry partials of the rotation matrix above.
  d.w = g[1] * (-2 * z) + g[2] * (2 * y) + g[3] * (2 * z) + g[5] * (-2 * x) +
        g[6] * (-2 * y) + g[7] * (2 * x);
  d.x = g[1] * (2 * y) + g[2] * (2 * z) + g[3] * (2 * y) + g[4] * (-4 * x) +
        g[5] * (-2 * w) + g[6] * (2 * z) + g[7] * (2 * w) + g[8] * (-4 * x);
  d.y = g[0] * (-4 * y) + g[1] * (2 * x) + g[2] * (2 * w) + g[3] * (2 * x) +
        g[5] * (2 * z) + g[6] * (-2 * w) + g[7] * (2 * z) + g[8] * (-4 * y);
  d.z = g[0] * (-4 * z) + g[1] * (-2 * w) + g[2] * (2 * x) + g[3] * (2 * w) +
        g[4] * (-4 * z) + g[5] * (2 * y) + g[6] * (2 * x) + g[7] * (2 * y);
  return d;
}

Covariance3 covariance_from_rs(const Quat& r, const Vec3& s) {
  if (!finite_quat(r) || !finite3(s))
    throw std::invalid_argument("covariance_from_rs: non-finite input");
  if (!(s.x > 0 && s.y > 0 && s.z > 0))
    throw std::invalid_argument("covariance_from_rs: scales must be positive");
  Mat3 R = rotation_from_unit_quat(r);
  Mat3 D = Mat3::diag(s.x * s.x, s.y * s.y, s.z * s.z);
  return R * D * R.transpose();
}

void covariance_from_rs_backward(const Quat& r, const Vec3& s, const Mat3& d_sigma,
                                 Quat& d_unit_quat, Vec3& d_scale) {
  Mat3 R = rotation_from_unit_quat(r);
  Mat3 D = Mat3::diag(s.x * s.x, s.y * s.y, s.z * s.z);
  // dL/dR = (G + G^T) R D
  Mat3 GS = d_sigma + d_sigma.transpose();
  Mat3 dR = GS * R * D;
  d_unit_quat = rotation_from_unit_quat_backward(r, dR);
  // dL/ds_k = 2 s_k (R^T G R)_kk
  Mat3 M = R.transpose() * d_sigma * R;
  d_scale = {2 * s.x * M(0, 0), 2 * s.y * M(1, 1), 2 * s.z * M(2, 2)};
}

double gaussian_eval(const Covariance3& sigma, const Vec3& x, const Vec3& p) {
  if (!finite3(x) || !finite3(p))
    throw std::invalid_argument("gaussian_eval: non-finite input");
  for (double e : sigma.m)
    if (!std::isfinite(e)) throw std::invalid_argument("gaussian_eval: non-finite covariance");
  double det = sigma.det();
  // Adjugate-based inverse with a Frobenius condition estimate.
  Mat3 adj;
  const auto& m = sigma.m;
  adj.m = {m[4] * m[8] - m[5] * m[7], m[2] * m[7] - m[1] * m[8], m[1] * m[5] - m[2] * m[4],
           m[5] * m[6] - m[3] * m[8], m[0] * m[8] - m[2] * m[6], m[2] * m[3] - m[0] * m[5],
           m[3] * m[7] - m[4] * m[6], m[1] * m[6] - m[0] * m[7], m[0] * m[4] - m[1] * m[3]};
  if (det == 0.0 || !std::isfinite(det))
    throw SingularCovarianceError("gaussian_eval: singular covariance (det=0)");
  Mat3 inv;
  for (int i = 0; i < 9; ++i) inv.m[i] = adj.m[i] / det;
  double cond = sigma.frobenius() * inv.frobenius();
  if (!(cond < 1e12))
    throw SingularCovarianceError("gaussian_eval: ill-conditioned covariance");
  Vec3 d = p - x;
  Vec3 sd = inv * d;
  double q = d.dot(sd);
  return std::exp(-0.5 * q);
}

ProjectedGaussian project_gaussian(const Covariance3& sigma, const Vec3& x,
                                   const Camera& cam) {
  ProjectedGaussian out;
  Vec3 xv = cam.R * x + cam.t;
  if (!(xv.z > cam.near)) {
    out.culled = true;
    return out;
  }
  double z = xv.z;
  out.mean = {cam.fx * xv.x / z + cam.cx, cam.fy * xv.y / z + cam.cy};
  out.depth = z;

  Mat3 V = cam.R * sigma * cam.R.transpose();
  double j00 = cam.fx / z;
  double j02 = -cam.fx * xv.x / (z * z);
  double j11 = cam.fy / z;
  double j12 = -cam.fy * xv.y / (z * z);
  // C2 = J V J^T with J = [[j00 0 j02];[0 j11 j12]]
  double a = j00 * (V(0, 0) * j00 + V(0, 2) * j02) + j02 * (V(2, 0) * j00 + V(2, 2) * j02);
  double b = j00 * (V(0, 1) * j11 + V(0, 2) * j12) + j02 * (V(2, 1) * j11 + V(2, 2) * j12);
  double c = j11 * (V(1, 0) * j00 + V(1, 2) * j02) + j12 * (V(2, 0) * j00 + V(2, 2) * j02);
  double d = j11 * (V(1, 1) * j11 + V(1, 2) * j12) + j12 * (V(2, 1) * j11 + V(2, 2) * j12);
  out.cov = {a + kScreenDilation, b, c, d + kScreenDilation};
  return out;
}

void project_gaussian_backward(const Covariance3& sigma, const Vec3& x,
                               const Camera& cam, const Vec2& d_mean,
                               const Mat2& d_cov, double d_depth, Mat3& d_sigma,
                               Vec3& d_x) {
  Vec3 xv = cam.R * x + cam.t;
  double z = xv.z;
  double z2 = z * z, z3 = z2 * z;
  Mat3 V = cam.R * sigma * cam.R.transpose();

  double j00 = cam.fx / z;
  double j02 = -cam.fx * xv.x / z2;
  double j11 = cam.fy / z;
  double j12 = -cam.fy * xv.y / z2;

  Vec3 dxv{0, 0, 0};
  // pinhole mean
  dxv.x += d_mean.x * cam.fx / z;
  dxv.y += d_mean.y * cam.fy / z;
  dxv.z += -d_mean.x * cam.fx * xv.x / z2 - d_mean.y * cam.fy * xv.y / z2;
  dxv.z += d_depth;

  // dV = J^T G J (rows of J indexed 0/1)
  double g00 = d_cov.a, g01 = d_cov.b, g10 = d_cov.c, g11 = d_cov.d;
  Mat3 dV;
  dV(0, 0) = j00 * g00 * j00;
  dV(0, 1) = j00 * g01 * j11;
  dV(0, 2) = j00 * (g00 * j02 + g01 * j12);
  dV(1, 0) = j11 * g10 * j00;
  dV(1, 1) = j11 * g11 * j11;
  dV(1, 2) = j11 * (g10 * j02 + g11 * j12);
  dV(2, 0) = (j02 * g00 + j12 * g10) * j00;
  dV(2, 1) = (j02 * g01 + j12 * g11) * j11;
  dV(2, 2) = (j02 * g00 + j12 * g10) * j02 + (j02 * g01 + j12 * g11) * j12;

  // dJ = (G + G^T) J V
  double s00 = 2 * g00, s01 = g01 + g10, s11 = 2 * g11;
  // rows of (G+G^T) J: r0 = s00*J0 + s01*J1, r1 = s01*J0 + s11*J1
  double r0x = s00 * j00, r0y = s01 * j11, r0z = s00 * j02 + s01 * j12;
  double r1x = s01 * j00, r1y = s11 * j11, r1z = s01 * j02 + s11 * j12;
  double dJ00 = r0x * V(0, 0) + r0y * V(1, 0) + r0z * V(2, 0);
  double dJ02 = r0x * V(0, 2) + r0y * V(1, 2) + r0z * V(2, 2);
  double dJ11 = r1x * V(0, 1) + r1y * V(1, 1) + r1z * V(2, 1);
  double dJ12 = r1x * V(0, 2) + r1y * V(1, 2) + r1z * V(2, 2);

  dxv.x += dJ02 * (-cam.fx / z2);
  dxv.y += dJ12 * (-cam.fy / z2);
  dxv.z += dJ00 * (-cam.fx / z2) + dJ02 * (2 * cam.fx * xv.x / z3) +
           dJ11 * (-cam.fy / z2) + dJ12 * (2 * cam.fy * xv.y / z3);

  Mat3 Rt = cam.R.transpose();
  d_sigma = Rt * dV * cam.R;
  d_x = Rt * dxv;
}

Camera look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up,
                      double fx, double fy, int width, int height, double near) {
  Vec3 f = target - eye;
  double fn = f.norm();
  if (!(fn > 0)) throw std::invalid_argument("look_at_camera: eye == target");
  f = f * (1.0 / fn);
  // image-down axis: negative of up's component orthogonal to the forward axis
  Vec3 upc = up - f * up.dot(f);
  double un = upc.norm();
  if (!(un > 1e-12)) throw std::invalid_argument("look_at_camera: up parallel to view");
  Vec3 yv = upc * (-1.0 / un);
  // x = y cross z keeps the triad right-handed
  Vec3 xv{yv.y * f.z - yv.z * f.y, yv.z * f.x - yv.x * f.z, yv.x * f.y - yv.y * f.x};
  Camera cam;
  cam.R.m = {xv.x, xv.y, xv.z, yv.x, yv.y, yv.z, f.x, f.y, f.z};
  Vec3 re = cam.R * eye;
  cam.t = {-re.x, -re.y, -re.z};
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = width * 0.5;
  cam.cy = height * 0.5;
  cam.width = width;
  cam.height = height;
  cam.near = near;
  return cam;
}

}  // namespace splat
