#pragma once

#include <Eigen/Core>

#include <array>
#include <optional>
#include <string_view>

namespace xrot {

// Axis convention used throughout the library:
//   world: right-handed, y is up; the panorama seam lies at -z.
//   camera: x along image columns, y up, z forward.
// A rotation R is always world-to-camera: p_cam = R * p_world.

class RotationMatrix;

/// Unit quaternion [w, x, y, z]. Construction normalizes; the double cover is
/// resolved by `canonical()` (w >= 0, ties broken on the first nonzero entry).
class UnitQuaternion {
 public:
  UnitQuaternion() = default;
  /// Normalizes the input. Throws NonFiniteInput for NaN/Inf components and
  /// DegenerateQuaternion for a zero vector.
  UnitQuaternion(double w, double x, double y, double z);

  static UnitQuaternion identity() { return {}; }
  static UnitQuaternion from_axis_angle(const Eigen::Vector3d& axis, double angle_rad);

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }
  std::array<double, 4> coeffs() const { return {w_, x_, y_, z_}; }

  UnitQuaternion canonical() const;
  UnitQuaternion conjugate() const;
  UnitQuaternion operator-() const;

  /// Hamilton product.
  UnitQuaternion operator*(const UnitQuaternion& rhs) const;

  double dot(const UnitQuaternion& rhs) const;

 private:
  double w_ = 1.0;
  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 0.0;
};

/// Proper 3x3 rotation. Construction from raw entries validates
/// orthogonality and det = +1.
class RotationMatrix {
 public:
  RotationMatrix() : m_(Eigen::Matrix3d::Identity()) {}
  /// Throws NotARotation when |m^T m - I| or |det m - 1| exceeds `tol`.
  explicit RotationMatrix(const Eigen::Matrix3d& m, double tol = 1e-5);

  static RotationMatrix identity() { return {}; }
  static RotationMatrix about_x(double angle_rad);
  static RotationMatrix about_y(double angle_rad);
  static RotationMatrix about_z(double angle_rad);

  const Eigen::Matrix3d& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  RotationMatrix transpose() const;
  RotationMatrix operator*(const RotationMatrix& rhs) const;
  Eigen::Vector3d operator*(const Eigen::Vector3d& v) const { return m_ * v; }

 private:
  struct Unchecked {};
  RotationMatrix(const Eigen::Matrix3d& m, Unchecked) : m_(m) {}
  Eigen::Matrix3d m_;
};

/// Camera heading with zero roll. Yaw turns the camera about world up
/// (positive yaw looks toward increasing panorama u), pitch tilts it about the
/// camera right axis (positive pitch looks up).
struct YawPitch {
  double yaw_deg = 0.0;
  double pitch_deg = 0.0;
};

enum class OverlapClass { Large, Small, None };

std::string_view to_string(OverlapClass c);
std::optional<OverlapClass> overlap_from_string(std::string_view s);

RotationMatrix quat_to_matrix(const UnitQuaternion& q);
UnitQuaternion matrix_to_quat(const RotationMatrix& r);

/// World-to-camera rotation R = R_pitch * R_yaw for a camera with the given
/// heading. Returned in canonical sign.
UnitQuaternion yaw_pitch_to_quat(const YawPitch& yp);
RotationMatrix yaw_pitch_to_matrix(const YawPitch& yp);

/// Heading of the camera forward axis. Roll is discarded.
YawPitch matrix_to_yaw_pitch(const RotationMatrix& r);

/// Maps camera-1 coordinates to camera-2 coordinates: R2 * R1^T.
RotationMatrix relative_rotation(const RotationMatrix& r1, const RotationMatrix& r2);

/// arccos((tr(R_pred^T R_gt) - 1) / 2) in degrees, argument clamped to [-1, 1].
double geodesic_error_deg(const RotationMatrix& pred, const RotationMatrix& gt);

/// 2 acos(|<q1, q2>|) in degrees.
double quat_angle_deg(const UnitQuaternion& a, const UnitQuaternion& b);

/// Large: angle <= 45, Small: 45 < angle <= 90, None: angle > 90.
/// Throws OutOfRange outside [0, 180].
OverlapClass classify_overlap(double angle_deg);

double deg_to_rad(double deg);
double rad_to_deg(double rad);

/// Wraps to (-180, 180].
double wrap_deg(double deg);

}  // namespace xrot
