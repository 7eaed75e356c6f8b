#include "xrot/geometry.hpp"

#include "xrot/error.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <utility>

namespace xrot {

namespace {

// sin and cos of an angle in degrees, exact at multiples of 90.
std::pair<double, double> sincos_deg(double deg) {
  int quadrant = 0;
  const double r = std::remquo(deg, 90.0, &quadrant) * std::numbers::pi / 180.0;
  const double s = std::sin(r), c = std::cos(r);
  switch (quadrant & 3) {
    case 0: return {s, c};
    case 1: return {c, -s};
    case 2: return {-s, -c};
    default: return {-c, s};
  }
}

bool all_finite(std::initializer_list<double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

UnitQuaternion::UnitQuaternion(double w, double x, double y, double z) {
  if (!all_finite({w, x, y, z})) {
    raise(ErrorCode::NonFiniteInput, "quaternion has non-finite component");
  }
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (n <= 1e-12) {
    raise(ErrorCode::DegenerateQuaternion, "cannot normalize a zero quaternion");
  }
  w_ = w / n;
  x_ = x / n;
  y_ = y / n;
  z_ = z / n;
}

UnitQuaternion UnitQuaternion::from_axis_angle(const Eigen::Vector3d& axis, double angle_rad) {
  const Eigen::Vector3d a = axis.normalized();
  const double s = std::sin(angle_rad / 2.0);
  return {std::cos(angle_rad / 2.0), a.x() * s, a.y() * s, a.z() * s};
}

UnitQuaternion UnitQuaternion::canonical() const {
  for (double c : {w_, x_, y_, z_}) {
    if (c > 0.0) return *this;
    if (c < 0.0) return -*this;
  }
  return *this;
}

UnitQuaternion UnitQuaternion::conjugate() const {
  UnitQuaternion q = *this;
  q.x_ = -x_;
  q.y_ = -y_;
  q.z_ = -z_;
  return q;
}

UnitQuaternion UnitQuaternion::operator-() const {
  UnitQuaternion q;
  q.w_ = -w_;
  q.x_ = -x_;
  q.y_ = -y_;
  q.z_ = -z_;
  return q;
}

UnitQuaternion UnitQuaternion::operator*(const UnitQuaternion& r) const {
  return {w_ * r.w_ - x_ * r.x_ - y_ * r.y_ - z_ * r.z_,
          w_ * r.x_ + x_ * r.w_ + y_ * r.z_ - z_ * r.y_,
          w_ * r.y_ - x_ * r.z_ + y_ * r.w_ + z_ * r.x_,
          w_ * r.z_ + x_ * r.y_ - y_ * r.x_ + z_ * r.w_};
}

double UnitQuaternion::dot(const UnitQuaternion& r) const {
  return w_ * r.w_ + x_ * r.x_ + y_ * r.y_ + z_ * r.z_;
}

RotationMatrix::RotationMatrix(const Eigen::Matrix3d& m, double tol) : m_(m) {
  if (!m.allFinite()) {
    raise(ErrorCode::NonFiniteInput, "rotation matrix has non-finite entries");
  }
  const double ortho = (m.transpose() * m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  const double det = m.determinant();
  if (ortho > tol || std::abs(det - 1.0) > tol) {
    std::ostringstream os;
    os << "matrix is not a rotation (orthogonality residual " << ortho << ", det " << det << ")";
    raise(ErrorCode::NotARotation, os.str());
  }
}

RotationMatrix RotationMatrix::about_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return {m, Unchecked{}};
}

RotationMatrix RotationMatrix::about_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return {m, Unchecked{}};
}

RotationMatrix RotationMatrix::about_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return {m, Unchecked{}};
}

RotationMatrix RotationMatrix::transpose() const { return {m_.transpose(), Unchecked{}}; }

RotationMatrix RotationMatrix::operator*(const RotationMatrix& rhs) const {
  return {m_ * rhs.m_, Unchecked{}};
}

std::string_view to_string(OverlapClass c) {
  switch (c) {
    case OverlapClass::Large: return "large";
    case OverlapClass::Small: return "small";
    case OverlapClass::None: return "none";
  }
  return "none";
}

std::optional<OverlapClass> overlap_from_string(std::string_view s) {
  if (s == "large") return OverlapClass::Large;
  if (s == "small") return OverlapClass::Small;
  if (s == "none") return OverlapClass::None;
  return std::nullopt;
}

RotationMatrix quat_to_matrix(const UnitQuaternion& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  Eigen::Matrix3d m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return RotationMatrix(m, 1e-6);
}

UnitQuaternion matrix_to_quat(const RotationMatrix& rot) {
  const Eigen::Matrix3d& m = rot.matrix();
  const double trace = m.trace();
  // Pick the largest of (trace, m00, m11, m22) so the divisor stays away from zero.
  double w, x, y, z;
  if (trace >= m(0, 0) && trace >= m(1, 1) && trace >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + trace);
    w = 0.25 * s;
    x = (m(2, 1) - m(1, 2)) / s;
    y = (m(0, 2) - m(2, 0)) / s;
    z = (m(1, 0) - m(0, 1)) / s;
  } else if (m(0, 0) >= m(1, 1) && m(0, 0) >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2));
    w = (m(2, 1) - m(1, 2)) / s;
    x = 0.25 * s;
    y = (m(0, 1) + m(1, 0)) / s;
    z = (m(0, 2) + m(2, 0)) / s;
  } else if (m(1, 1) >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2));
    w = (m(0, 2) - m(2, 0)) / s;
    x = (m(0, 1) + m(1, 0)) / s;
    y = 0.25 * s;
    z = (m(1, 2) + m(2, 1)) / s;
  } else {
    const double s = 2.0 * std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1));
    w = (m(1, 0) - m(0, 1)) / s;
    x = (m(0, 2) + m(2, 0)) / s;
    y = (m(1, 2) + m(2, 1)) / s;
    z = 0.25 * s;
  }
  return UnitQuaternion(w, x, y, z).canonical();
}

RotationMatrix yaw_pitch_to_matrix(const YawPitch& yp) {
  const auto [sp, cp] = sincos_deg(yp.pitch_deg);
  const auto [sy, cy] = sincos_deg(-yp.yaw_deg);
  Eigen::Matrix3d m;
  m << cy, 0, sy, sp * sy, cp, -sp * cy, -cp * sy, sp, cp * cy;
  return RotationMatrix(m);
}

UnitQuaternion yaw_pitch_to_quat(const YawPitch& yp) {
  // (cos p/2, sin p/2 e_x) * (cos y/2, -sin y/2 e_y), with y/2 taken exactly.
  const auto [sp, cp] = sincos_deg(yp.pitch_deg / 2.0);
  const auto [sy, cy] = sincos_deg(-yp.yaw_deg / 2.0);
  return UnitQuaternion(cp * cy, sp * cy, cp * sy, sp * sy).canonical();
}

YawPitch matrix_to_yaw_pitch(const RotationMatrix& r) {
  // Camera forward in world coordinates is R^T e_z, i.e. the last row of R.
  const Eigen::Vector3d f = r.matrix().row(2).transpose();
  return {rad_to_deg(std::atan2(f.x(), f.z())), rad_to_deg(std::asin(std::clamp(f.y(), -1.0, 1.0)))};
}

RotationMatrix relative_rotation(const RotationMatrix& r1, const RotationMatrix& r2) {
  return r2 * r1.transpose();
}

double geodesic_error_deg(const RotationMatrix& pred, const RotationMatrix& gt) {
  const Eigen::Matrix3d m = pred.matrix().transpose() * gt.matrix();
  const double c = std::clamp((m.trace() - 1.0) / 2.0, -1.0, 1.0);
  // acos(c) evaluated as atan2(sin, cos): sin comes from the skew part of m,
  // which is exactly zero when pred == gt, so identical inputs give exactly 0.
  const Eigen::Vector3d axis(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
  const double s = std::min(0.5 * axis.norm(), 1.0);
  return rad_to_deg(std::atan2(s, c));
}

double quat_angle_deg(const UnitQuaternion& a, const UnitQuaternion& b) {
  const double d = std::clamp(std::abs(a.dot(b)), 0.0, 1.0);
  return rad_to_deg(2.0 * std::acos(d));
}

OverlapClass classify_overlap(double angle_deg) {
  if (!(angle_deg >= 0.0 && angle_deg <= 180.0)) {
    std::ostringstream os;
    os << "relative angle " << angle_deg << " is outside [0, 180]";
    raise(ErrorCode::OutOfRange, os.str());
  }
  if (angle_deg <= 45.0) return OverlapClass::Large;
  if (angle_deg <= 90.0) return OverlapClass::Small;
  return OverlapClass::None;
}

double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

double wrap_deg(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w <= -180.0) w += 360.0;
  if (w > 180.0) w -= 360.0;
  return w;
}

}  // namespace xrot
