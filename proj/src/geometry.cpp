#include "camloc/geometry.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>

#include <cmath>
#include <numbers>
#include <string>

#include "camloc/error.hpp"

namespace camloc {

double normalize_angle(double angle) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double a = std::fmod(angle + std::numbers::pi, kTwoPi);
  if (a <= 0.0) a += kTwoPi;
  return a - std::numbers::pi;
}

double angle_diff(double a, double b) { return normalize_angle(a - b); }

PoseSE2::PoseSE2(double x, double y, double theta) : x_(x), y_(y), theta_(normalize_angle(theta)) {}

Mat2 PoseSE2::rotation() const {
  const double c = std::cos(theta_), s = std::sin(theta_);
  Mat2 r;
  r << c, -s, s, c;
  return r;
}

PoseSE2 PoseSE2::compose(const PoseSE2& other) const {
  const Vec2 t = translation() + rotation() * other.translation();
  return {t.x(), t.y(), theta_ + other.theta_};
}

PoseSE2 PoseSE2::inverse() const {
  const Vec2 t = -(rotation().transpose() * translation());
  return {t.x(), t.y(), -theta_};
}

Vec2 PoseSE2::transform(const Vec2& p) const { return rotation() * p + translation(); }

namespace {

// Entries of V(theta)^-1, the inverse of the SE(2) left Jacobian block:
// V^-1 = [[a, theta/2], [-theta/2, a]] with a = (theta/2) cot(theta/2).
double half_cot_term(double theta) {
  if (std::abs(theta) < 1e-4) {
    const double t2 = theta * theta;
    return 1.0 - t2 / 12.0 - t2 * t2 / 720.0;
  }
  return 0.5 * theta * std::sin(theta) / (1.0 - std::cos(theta));
}

}  // namespace

Vec3 se2_log(const PoseSE2& pose) {
  const double theta = pose.theta();
  const double a = half_cot_term(theta);
  Mat2 v_inv;
  v_inv << a, 0.5 * theta, -0.5 * theta, a;
  const Vec2 rho = v_inv * pose.translation();
  return {rho.x(), rho.y(), theta};
}

PoseSE2 se2_exp(const Vec3& tangent) {
  const double theta = tangent.z();
  double s_over, c_over;  // sin(t)/t and (1 - cos(t))/t
  if (std::abs(theta) < 1e-6) {
    s_over = 1.0 - theta * theta / 6.0;
    c_over = 0.5 * theta;
  } else {
    s_over = std::sin(theta) / theta;
    c_over = (1.0 - std::cos(theta)) / theta;
  }
  Mat2 v;
  v << s_over, -c_over, c_over, s_over;
  const Vec2 t = v * tangent.head<2>();
  return {t.x(), t.y(), theta};
}

RigidTransform3::RigidTransform3(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  const double ortho_err = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det_err = std::abs(rotation.determinant() - 1.0);
  if (!(ortho_err <= 1e-9) || !(det_err <= 1e-9)) {
    throw Error(ErrorCode::InvalidArgument, "rotation is not orthonormal with det +1");
  }
  if (!translation.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "translation is not finite");
  }
}

RigidTransform3 RigidTransform3::compose(const RigidTransform3& other) const {
  RigidTransform3 out;
  out.rotation_ = rotation_ * other.rotation_;
  out.translation_ = rotation_ * other.translation_ + translation_;
  return out;
}

RigidTransform3 RigidTransform3::inverse() const {
  RigidTransform3 out;
  out.rotation_ = rotation_.transpose();
  out.translation_ = -(out.rotation_ * translation_);
  return out;
}

Eigen::Matrix4d RigidTransform3::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

RigidTransform3 se2_embed(const PoseSE2& pose) {
  Mat3 r = Mat3::Identity();
  r.topLeftCorner<2, 2>() = pose.rotation();
  return {r, Vec3(pose.x(), pose.y(), 0.0)};
}

CameraModel::CameraModel(int camera_id, double fx, double fy, double cx, double cy, int width,
                         int height, const RigidTransform3& world_to_camera)
    : camera_id_(camera_id),
      fx_(fx),
      fy_(fy),
      cx_(cx),
      cy_(cy),
      width_(width),
      height_(height),
      world_to_camera_(world_to_camera) {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "camera " + std::to_string(camera_id) + ": focal lengths must be positive");
  }
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw Error(ErrorCode::InvalidArgument, "camera " + std::to_string(camera_id) + ": principal point outside image");
  }
}

CameraModel CameraModel::mounted(int camera_id, double fx, double fy, double cx, double cy,
                                 int width, int height, const Vec3& position, double yaw,
                                 double pitch) {
  const Vec3 forward(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), -std::sin(pitch));
  const Vec3 right(std::sin(yaw), -std::cos(yaw), 0.0);
  const Vec3 down = forward.cross(right);
  Mat3 world_from_camera;
  world_from_camera.col(0) = right;
  world_from_camera.col(1) = down;
  world_from_camera.col(2) = forward;
  const Mat3 r = world_from_camera.transpose();
  return {camera_id, fx, fy, cx, cy, width, height, RigidTransform3(r, -(r * position))};
}

Vec3 CameraModel::center() const { return world_to_camera_.inverse().translation(); }

Vec2 CameraModel::project(const Vec3& point_world) const {
  const Vec3 pc = world_to_camera_.apply(point_world);
  if (!(pc.z() > 1e-9)) {
    throw Error(ErrorCode::BehindCamera, "point behind camera " + std::to_string(camera_id_));
  }
  return {fx_ * pc.x() / pc.z() + cx_, fy_ * pc.y() / pc.z() + cy_};
}

Vec3 CameraModel::unproject(const Vec2& pixel, double depth) const {
  const Vec3 pc((pixel.x() - cx_) / fx_ * depth, (pixel.y() - cy_) / fy_ * depth, depth);
  return world_to_camera_.inverse().apply(pc);
}

bool CameraModel::in_image(const Vec2& pixel) const {
  return pixel.x() >= 0.0 && pixel.x() < width_ && pixel.y() >= 0.0 && pixel.y() < height_;
}

Vec2 project(const CameraModel& camera, const Vec3& point_world) { return camera.project(point_world); }

RobotModel::RobotModel(std::vector<Vec3> keypoints, double body_width)
    : keypoints_(std::move(keypoints)), body_width_(body_width) {
  if (keypoints_.size() < 4) {
    throw Error(ErrorCode::InvalidArgument, "robot model needs at least 4 keypoints");
  }
  for (const auto& p : keypoints_) {
    if (!p.allFinite() || p.cwiseAbs().maxCoeff() > 0.5) {
      throw Error(ErrorCode::InvalidArgument, "robot keypoint outside the 1 m body box");
    }
  }
  if (!(body_width_ > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "body width must be positive");
  }
}

const Vec3& RobotModel::keypoint(int j) const {
  if (j < 0 || j >= size()) {
    throw Error(ErrorCode::IndexOutOfRange, "keypoint index " + std::to_string(j));
  }
  return keypoints_[static_cast<std::size_t>(j)];
}

Vec3 keypoint_world(const PoseSE2& pose, const RobotModel& model, int j) {
  return se2_embed(pose).apply(model.keypoint(j));
}

const CameraModel& find_camera(std::span<const CameraModel> cameras, int camera_id) {
  for (const auto& c : cameras) {
    if (c.id() == camera_id) return c;
  }
  throw Error(ErrorCode::UnknownCamera, "camera id " + std::to_string(camera_id));
}

double ResidualSet::objective() const {
  double sum = 0.0;
  for (const auto& e : entries) sum += e.weight * e.residual.squaredNorm();
  return sum;
}

ResidualSet reprojection_residual(const PoseSE2& pose, std::span<const CameraModel> cameras,
                                  const FrameSet& frameset, const RobotModel& model) {
  const RigidTransform3 body = se2_embed(pose);
  ResidualSet out;
  out.entries.reserve(static_cast<std::size_t>(frameset.keypoint_count()));
  for (const auto& [camera_id, message] : frameset.per_camera) {
    const CameraModel& camera = find_camera(cameras, camera_id);
    for (const auto& det : message.keypoints) {
      if (det.index < 0 || det.index >= model.size()) {
        throw Error(ErrorCode::UnknownKeypoint, "keypoint index " + std::to_string(det.index));
      }
      const Vec2 predicted = camera.project(body.apply(model.keypoints()[static_cast<std::size_t>(det.index)]));
      out.entries.push_back({camera_id, det.index, det.pixel - predicted, det.confidence});
    }
  }
  return out;
}

Mat23 residual_jacobian(const PoseSE2& pose, const CameraModel& camera, const RobotModel& model,
                        int j) {
  const Vec3& p = model.keypoint(j);
  const double c = std::cos(pose.theta()), s = std::sin(pose.theta());
  const Vec3 pw(pose.x() + c * p.x() - s * p.y(), pose.y() + s * p.x() + c * p.y(), p.z());
  const Mat3& r = camera.world_to_camera().rotation();
  const Vec3 pc = r * pw + camera.world_to_camera().translation();
  if (!(pc.z() > 1e-9)) {
    throw Error(ErrorCode::BehindCamera, "keypoint behind camera " + std::to_string(camera.id()));
  }

  Mat3 dpw = Mat3::Zero();  // d(world point)/d(x, y, theta)
  dpw(0, 0) = 1.0;
  dpw(1, 1) = 1.0;
  dpw(0, 2) = -s * p.x() - c * p.y();
  dpw(1, 2) = c * p.x() - s * p.y();
  const Mat3 dpc = r * dpw;

  const double inv_z = 1.0 / pc.z();
  Mat23 dproj;  // d(u, v)/d(camera point)
  dproj << camera.fx() * inv_z, 0.0, -camera.fx() * pc.x() * inv_z * inv_z,
      0.0, camera.fy() * inv_z, -camera.fy() * pc.y() * inv_z * inv_z;
  return -(dproj * dpc);
}

double circular_weighted_mean(std::span<const double> angles, std::span<const double> weights) {
  if (angles.size() != weights.size()) {
    throw Error(ErrorCode::InvalidArgument, "angle and weight counts differ");
  }
  double s = 0.0, c = 0.0;
  bool any_positive = false;
  for (std::size_t i = 0; i < angles.size(); ++i) {
    if (weights[i] < 0.0 || !std::isfinite(weights[i])) {
      throw Error(ErrorCode::InvalidArgument, "weights must be finite and non-negative");
    }
    if (weights[i] > 0.0) any_positive = true;
    s += weights[i] * std::sin(angles[i]);
    c += weights[i] * std::cos(angles[i]);
  }
  if (!any_positive) throw Error(ErrorCode::AllZeroWeights, "no positive weight");
  return normalize_angle(std::atan2(s, c));
}

int FrameSet::keypoint_count() const {
  int n = 0;
  for (const auto& [id, msg] : per_camera) n += static_cast<int>(msg.keypoints.size());
  return n;
}

}  // namespace camloc
