#pragma once

#include <Eigen/Core>

#include <span>
#include <vector>

#include "camloc/observation.hpp"

namespace camloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

/// Wraps an angle into (-pi, pi].
double normalize_angle(double angle);

/// Signed smallest rotation from b to a, in (-pi, pi].
double angle_diff(double a, double b);

/// Ground-plane robot pose. theta is kept normalized into (-pi, pi].
class PoseSE2 {
 public:
  PoseSE2() = default;
  PoseSE2(double x, double y, double theta);

  static PoseSE2 identity() { return {}; }

  [[nodiscard]] double x() const { return x_; }
  [[nodiscard]] double y() const { return y_; }
  [[nodiscard]] double theta() const { return theta_; }
  [[nodiscard]] Vec2 translation() const { return {x_, y_}; }
  [[nodiscard]] Mat2 rotation() const;

  /// this ∘ other: apply other in the frame of this.
  [[nodiscard]] PoseSE2 compose(const PoseSE2& other) const;
  [[nodiscard]] PoseSE2 inverse() const;
  [[nodiscard]] Vec2 transform(const Vec2& p) const;

  PoseSE2 operator*(const PoseSE2& other) const { return compose(other); }

 private:
  double x_ = 0.0;
  double y_ = 0.0;
  double theta_ = 0.0;
};

/// Tangent coordinates (rho_x, rho_y, theta) of an SE(2) element.
Vec3 se2_log(const PoseSE2& pose);
PoseSE2 se2_exp(const Vec3& tangent);

/// Rigid 3D transform with an orthonormal, right-handed rotation.
class RigidTransform3 {
 public:
  RigidTransform3() = default;
  /// Throws InvalidArgument unless rotation is orthonormal with det +1 (1e-9).
  RigidTransform3(const Mat3& rotation, const Vec3& translation);

  static RigidTransform3 identity() { return {}; }

  [[nodiscard]] const Mat3& rotation() const { return rotation_; }
  [[nodiscard]] const Vec3& translation() const { return translation_; }

  [[nodiscard]] Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
  [[nodiscard]] RigidTransform3 compose(const RigidTransform3& other) const;
  [[nodiscard]] RigidTransform3 inverse() const;
  [[nodiscard]] Eigen::Matrix4d matrix() const;

  RigidTransform3 operator*(const RigidTransform3& other) const { return compose(other); }

 private:
  Mat3 rotation_ = Mat3::Identity();
  Vec3 translation_ = Vec3::Zero();
};

/// Embeds a ground-plane pose as rotation about z plus (x, y, 0).
RigidTransform3 se2_embed(const PoseSE2& pose);

/// Calibrated pinhole camera with a fixed world-to-camera extrinsic.
class CameraModel {
 public:
  CameraModel(int camera_id, double fx, double fy, double cx, double cy, int width, int height,
              const RigidTransform3& world_to_camera);

  /// Camera at `position` looking along heading `yaw` (rad, about world z)
  /// and tilted down by `pitch` (rad). Image x points right, y down.
  static CameraModel mounted(int camera_id, double fx, double fy, double cx, double cy, int width,
                             int height, const Vec3& position, double yaw, double pitch);

  [[nodiscard]] int id() const { return camera_id_; }
  [[nodiscard]] double fx() const { return fx_; }
  [[nodiscard]] double fy() const { return fy_; }
  [[nodiscard]] double cx() const { return cx_; }
  [[nodiscard]] double cy() const { return cy_; }
  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] int height() const { return height_; }
  [[nodiscard]] const RigidTransform3& world_to_camera() const { return world_to_camera_; }

  /// Optical center in world coordinates.
  [[nodiscard]] Vec3 center() const;
  /// Throws BehindCamera when the point's depth is <= 1e-9.
  [[nodiscard]] Vec2 project(const Vec3& point_world) const;
  /// World point at the given camera-frame depth along the ray through `pixel`.
  [[nodiscard]] Vec3 unproject(const Vec2& pixel, double depth) const;
  /// Pixel lies on the integer image grid [0, width) x [0, height).
  [[nodiscard]] bool in_image(const Vec2& pixel) const;

 private:
  int camera_id_;
  double fx_, fy_, cx_, cy_;
  int width_, height_;
  RigidTransform3 world_to_camera_;
};

Vec2 project(const CameraModel& camera, const Vec3& point_world);

/// Rigid keypoint layout of the robot base, in the body frame.
class RobotModel {
 public:
  RobotModel(std::vector<Vec3> keypoints, double body_width);

  [[nodiscard]] const std::vector<Vec3>& keypoints() const { return keypoints_; }
  [[nodiscard]] int size() const { return static_cast<int>(keypoints_.size()); }
  [[nodiscard]] double body_width() const { return body_width_; }
  /// Throws IndexOutOfRange.
  [[nodiscard]] const Vec3& keypoint(int j) const;

 private:
  std::vector<Vec3> keypoints_;
  double body_width_;
};

/// World position of keypoint j with the robot at `pose`.
Vec3 keypoint_world(const PoseSE2& pose, const RobotModel& model, int j);

const CameraModel& find_camera(std::span<const CameraModel> cameras, int camera_id);

struct ResidualEntry {
  int camera_id;
  int keypoint;
  Vec2 residual;  // observed - projected
  double weight;
};

struct ResidualSet {
  std::vector<ResidualEntry> entries;

  /// sum_i w_i |r_i|^2
  [[nodiscard]] double objective() const;
};

/// Stacked reprojection residuals of every detection in the frame-set.
/// Throws UnknownCamera, UnknownKeypoint, or BehindCamera.
ResidualSet reprojection_residual(const PoseSE2& pose, std::span<const CameraModel> cameras,
                                  const FrameSet& frameset, const RobotModel& model);

/// d(observed - projected)/d(x, y, theta) for keypoint j seen by `camera`.
Mat23 residual_jacobian(const PoseSE2& pose, const CameraModel& camera, const RobotModel& model,
                        int j);

/// Weighted circular mean: atan2 of the weighted sine and cosine sums.
/// Throws AllZeroWeights when no weight is positive, InvalidArgument on
/// negative weights or mismatched sizes.
double circular_weighted_mean(std::span<const double> angles, std::span<const double> weights);

}  // namespace camloc
