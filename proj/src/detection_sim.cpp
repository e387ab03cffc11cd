#include "camloc/detection_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "camloc/error.hpp"

namespace camloc {

namespace {

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

enum class SegmentKind { Dwell, Rotate, Drive };

struct Segment {
  SegmentKind kind;
  double t0, t1;
  PoseSE2 from, to;
  int waypoint_id;
};

PoseSE2 interpolate(const Segment& s, double t) {
  if (s.kind == SegmentKind::Dwell || s.t1 <= s.t0) return t <= s.t0 ? s.from : s.to;
  const double a = std::clamp((t - s.t0) / (s.t1 - s.t0), 0.0, 1.0);
  if (s.kind == SegmentKind::Rotate) {
    return {s.from.x(), s.from.y(), s.from.theta() + a * angle_diff(s.to.theta(), s.from.theta())};
  }
  const Vec2 p = (1.0 - a) * s.from.translation() + a * s.to.translation();
  return {p.x(), p.y(), s.to.theta()};
}

}  // namespace

void NoiseModel::validate() const {
  if (!(pixel_sigma >= 0.0)) throw Error(ErrorCode::ConfigError, "pixel_sigma must be >= 0");
  if (!is_probability(dropout_prob) || !is_probability(outlier_prob) || !is_probability(confidence_floor)) {
    throw Error(ErrorCode::ConfigError, "noise probabilities must lie in [0, 1]");
  }
  if (!(outlier_spread >= 0.0)) throw Error(ErrorCode::ConfigError, "outlier_spread must be >= 0");
  if (!(timestamp_jitter >= 0.0)) throw Error(ErrorCode::ConfigError, "timestamp_jitter must be >= 0");
}

void OdometryNoise::validate() const {
  if (!(trans_sigma_per_meter >= 0.0) || !(rot_sigma_per_meter >= 0.0) || !(rot_sigma_per_rad >= 0.0)) {
    throw Error(ErrorCode::ConfigError, "odometry sigmas must be >= 0");
  }
  if (!std::isfinite(bias_trans) || !std::isfinite(bias_rot) || !std::isfinite(bias_rot_scale)) {
    throw Error(ErrorCode::ConfigError, "odometry biases must be finite");
  }
}

void TrajectoryScript::validate() const {
  if (waypoints.empty()) throw Error(ErrorCode::ConfigError, "trajectory needs at least one waypoint");
  if (!(sample_dt > 0.0)) throw Error(ErrorCode::ConfigError, "sample_dt must be positive");
  if (!(speed > 0.0)) throw Error(ErrorCode::ConfigError, "speed must be positive");
  if (!(turn_rate > 0.0)) throw Error(ErrorCode::ConfigError, "turn_rate must be positive");
  for (const auto& w : waypoints) {
    if (!(w.dwell >= 0.0)) throw Error(ErrorCode::ConfigError, "dwell must be >= 0");
  }
}

std::vector<GroundTruthSample> script_trajectory(const TrajectoryScript& script) {
  script.validate();
  constexpr double kEps = 1e-12;

  std::vector<Segment> segments;
  double t = 0.0;
  PoseSE2 pose = script.waypoints.front().pose;
  auto rotate_to = [&](double heading) {
    const double delta = angle_diff(heading, pose.theta());
    if (std::abs(delta) <= kEps) return;
    const PoseSE2 next(pose.x(), pose.y(), heading);
    const double dt = std::abs(delta) / script.turn_rate;
    segments.push_back({SegmentKind::Rotate, t, t + dt, pose, next, -1});
    t += dt;
    pose = next;
  };
  auto dwell = [&](const Waypoint& w) {
    if (w.dwell <= 0.0) return;
    segments.push_back({SegmentKind::Dwell, t, t + w.dwell, pose, pose, w.id});
    t += w.dwell;
  };

  dwell(script.waypoints.front());
  for (std::size_t i = 1; i < script.waypoints.size(); ++i) {
    const Waypoint& w = script.waypoints[i];
    const Vec2 d = w.pose.translation() - pose.translation();
    const double dist = d.norm();
    if (dist > kEps) {
      const double bearing = std::atan2(d.y(), d.x());
      rotate_to(bearing);
      const PoseSE2 next(w.pose.x(), w.pose.y(), bearing);
      const double dt = dist / script.speed;
      segments.push_back({SegmentKind::Drive, t, t + dt, pose, next, -1});
      t += dt;
      pose = next;
    }
    rotate_to(w.pose.theta());
    dwell(w);
  }

  const auto count = static_cast<std::size_t>(std::floor(t / script.sample_dt + 1e-9)) + 1;
  std::vector<GroundTruthSample> out;
  out.reserve(count);
  std::size_t cursor = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const double stamp = static_cast<double>(k) * script.sample_dt;
    GroundTruthSample s{stamp, script.waypoints.front().pose, false, -1};
    if (!segments.empty()) {
      while (cursor + 1 < segments.size() && stamp > segments[cursor].t1 + 1e-9) ++cursor;
      const Segment* seg = &segments[cursor];
      // A stamp on a boundary counts as dwelling if either side dwells.
      if (seg->kind != SegmentKind::Dwell && cursor + 1 < segments.size() &&
          segments[cursor + 1].kind == SegmentKind::Dwell && stamp >= segments[cursor + 1].t0 - 1e-9) {
        seg = &segments[cursor + 1];
      }
      s.pose = interpolate(*seg, stamp);
      if (seg->kind == SegmentKind::Dwell) {
        s.is_static = true;
        s.waypoint_id = seg->waypoint_id;
      }
    }
    out.push_back(s);
  }
  return out;
}

std::vector<DetectionMessage> simulate_frame(const GroundTruthSample& sample,
                                             std::span<const CameraModel> cameras,
                                             const RobotModel& model, const NoiseModel& noise,
                                             Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const RigidTransform3 body = se2_embed(sample.pose);
  const double sigma = noise.pixel_sigma;

  std::vector<DetectionMessage> out;
  for (const auto& camera : cameras) {
    const double jitter = noise.timestamp_jitter * (2.0 * uniform(rng) - 1.0);
    DetectionMessage msg{camera.id(), seconds_to_ns(sample.stamp + jitter), {}};
    for (int j = 0; j < model.size(); ++j) {
      const Vec3 pc = camera.world_to_camera().apply(body.apply(model.keypoints()[static_cast<std::size_t>(j)]));
      if (!(pc.z() > 1e-9)) continue;
      const Vec2 exact = camera.project(body.apply(model.keypoints()[static_cast<std::size_t>(j)]));
      if (!camera.in_image(exact)) continue;

      const bool dropped = uniform(rng) < noise.dropout_prob;
      // Gaussian offset truncated at a radius of 6 sigma.
      Vec2 offset;
      do {
        offset = Vec2(normal(rng), normal(rng));
      } while (offset.norm() > 6.0);
      offset *= sigma;
      if (uniform(rng) < noise.outlier_prob) {
        const double angle = 2.0 * std::numbers::pi * uniform(rng);
        const double radius = noise.outlier_spread * uniform(rng);
        offset += radius * Vec2(std::cos(angle), std::sin(angle));
      }
      if (dropped) continue;

      const double conf = std::clamp(1.0 - offset.norm() / (3.0 * sigma + 1e-9), noise.confidence_floor, 1.0);
      msg.keypoints.push_back({j, exact + offset, conf});
    }
    if (!msg.keypoints.empty()) out.push_back(std::move(msg));
  }
  return out;
}

PoseSE2 simulate_odometry_step(const PoseSE2& true_delta, const OdometryNoise& noise, Rng& rng) {
  if (true_delta.x() == 0.0 && true_delta.y() == 0.0 && true_delta.theta() == 0.0) return {};
  std::normal_distribution<double> normal(0.0, 1.0);
  const double dist = std::hypot(true_delta.x(), true_delta.y());
  const double rot = std::abs(true_delta.theta());
  const double sigma_t = noise.trans_sigma_per_meter * std::sqrt(dist);
  const double sigma_r = std::sqrt(noise.rot_sigma_per_meter * noise.rot_sigma_per_meter * dist +
                                   noise.rot_sigma_per_rad * noise.rot_sigma_per_rad * rot);
  const double nx = normal(rng), ny = normal(rng), nr = normal(rng);
  const double scale = 1.0 + noise.bias_trans;
  return {true_delta.x() * scale + sigma_t * nx, true_delta.y() * scale + sigma_t * ny,
          true_delta.theta() * (1.0 + noise.bias_rot_scale) + noise.bias_rot * dist + sigma_r * nr};
}

RobotModel default_robot_model() {
  std::vector<Vec3> kps;
  for (double z : {0.05, 0.30}) {
    for (double x : {0.175, -0.175}) {
      for (double y : {0.225, -0.225}) kps.emplace_back(x, y, z);
    }
  }
  return {std::move(kps), 0.35};
}

std::vector<CameraModel> default_cameras() {
  constexpr double kPitch = 25.0 * std::numbers::pi / 180.0;
  constexpr double kHeight = 2.5;
  const double pi = std::numbers::pi;
  auto make = [&](int id, double x, double y, double yaw) {
    return CameraModel::mounted(id, 620.0, 620.0, 424.0, 240.0, 848, 480, Vec3(x, y, kHeight), yaw, kPitch);
  };
  return {make(1, 0.0, 4.0, 0.0), make(2, 10.0, 4.0, pi), make(3, 5.0, 0.0, 0.5 * pi),
          make(4, 5.0, 8.0, -0.5 * pi)};
}

int visible_keypoint_count(const CameraModel& camera, const RobotModel& model, const PoseSE2& pose) {
  const RigidTransform3 body = se2_embed(pose);
  int n = 0;
  for (const auto& p : model.keypoints()) {
    const Vec3 pw = body.apply(p);
    if (!(camera.world_to_camera().apply(pw).z() > 1e-9)) continue;
    if (camera.in_image(camera.project(pw))) ++n;
  }
  return n;
}

}  // namespace camloc
