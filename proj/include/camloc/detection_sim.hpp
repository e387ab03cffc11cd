#pragma once

#include <random>
#include <span>
#include <vector>

#include "camloc/geometry.hpp"
#include "camloc/observation.hpp"

namespace camloc {

using Rng = std::mt19937_64;

/// Synthetic stand-in for the quality of a keypoint detector.
struct NoiseModel {
  double pixel_sigma = 2.0;        // px
  double dropout_prob = 0.02;
  double outlier_prob = 0.0;
  double outlier_spread = 40.0;    // px
  double confidence_floor = 0.2;
  double timestamp_jitter = 0.005; // s, uniform in [-j, j]

  void validate() const;
};

/// Wheel-odometry error model: zero-mean noise growing with the square
/// root of travelled distance / rotation, plus deterministic bias.
struct OdometryNoise {
  double trans_sigma_per_meter = 0.02;  // m / sqrt(m)
  double rot_sigma_per_meter = 0.005;   // rad / sqrt(m)
  double rot_sigma_per_rad = 0.025;     // rad / sqrt(rad)
  double bias_trans = 0.03;             // m / m
  double bias_rot = 0.0;                // rad / m
  double bias_rot_scale = 0.02;         // rad / rad

  void validate() const;
};

struct Waypoint {
  int id = 0;
  PoseSE2 pose;
  double dwell = 0.0;  // s
};

struct TrajectoryScript {
  std::vector<Waypoint> waypoints;
  double speed = 0.4;      // m/s
  double turn_rate = 0.6;  // rad/s
  double sample_dt = 0.2;  // s

  void validate() const;
};

struct GroundTruthSample {
  double stamp = 0.0;
  PoseSE2 pose;
  bool is_static = false;
  int waypoint_id = -1;  // waypoint being dwelt at, -1 while moving
};

/// Rotate toward the next waypoint, drive straight, rotate to the waypoint
/// heading, dwell. Samples every sample_dt starting at t = 0.
std::vector<GroundTruthSample> script_trajectory(const TrajectoryScript& script);

/// One detection message per camera that sees at least one keypoint.
std::vector<DetectionMessage> simulate_frame(const GroundTruthSample& sample,
                                             std::span<const CameraModel> cameras,
                                             const RobotModel& model, const NoiseModel& noise,
                                             Rng& rng);

/// Measured body-frame motion for a true body-frame motion.
PoseSE2 simulate_odometry_step(const PoseSE2& true_delta, const OdometryNoise& noise, Rng& rng);

/// 8 box corners: 0.35 m across body x, 0.45 m across body y, at 0.05 m
/// and 0.30 m height.
RobotModel default_robot_model();

/// Four cameras at the wall midpoints of a 10 m x 8 m floor, 2.5 m high,
/// pitched 25 degrees down, 848x480 px, f = 620 px.
std::vector<CameraModel> default_cameras();

/// Noise-free count of keypoints that project inside the image.
int visible_keypoint_count(const CameraModel& camera, const RobotModel& model, const PoseSE2& pose);

}  // namespace camloc
