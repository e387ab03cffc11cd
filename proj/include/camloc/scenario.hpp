#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "camloc/detection_sim.hpp"
#include "camloc/estimator.hpp"
#include "camloc/eval.hpp"
#include "camloc/geometry.hpp"
#include "camloc/sync.hpp"

namespace camloc {

using Json = nlohmann::ordered_json;

/// Camera as written in a scenario: either mounted by position/yaw/pitch or
/// given an explicit world-to-camera extrinsic.
struct CameraSpec {
  int id = 0;
  double fx = 620.0, fy = 620.0, cx = 424.0, cy = 240.0;
  int width = 848, height = 480;
  bool mounted = true;
  Vec3 position = Vec3::Zero();  // mounted form
  double yaw = 0.0, pitch = 0.0;
  Mat3 rotation = Mat3::Identity();  // extrinsic form
  Vec3 translation = Vec3::Zero();

  [[nodiscard]] CameraModel build() const;
};

struct FusionConfig {
  double node_min_translation = 0.05;                          // m
  double node_min_rotation = 2.0 * std::numbers::pi / 180.0;   // rad
  double odometry_sigma_floor = 1e-3;
  double unary_stamp_tolerance = 0.1;                          // s
  bool unary_static_only = false;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::vector<CameraSpec> cameras;
  std::optional<std::vector<Vec3>> robot_keypoints;  // empty: default model
  double robot_body_width = 0.35;
  TrajectoryScript trajectory;
  NoiseModel noise;
  OdometryNoise odometry_noise;
  SyncConfig sync;
  SolverConfig solver;
  GateThresholds gate;
  CovarianceModel covariance;
  FusionConfig fusion;
  std::uint64_t seed = 42;
  std::vector<Mode> modes{kAllModes, kAllModes + 5};
  bool feedback = false;

  /// Throws ConfigError.
  void validate() const;
  [[nodiscard]] std::vector<CameraModel> build_cameras() const;
  [[nodiscard]] RobotModel build_robot() const;
  [[nodiscard]] bool has_mode(Mode m) const;
};

/// Strict parse: unknown keys and wrong types throw ConfigError naming the
/// offending path. Missing sections take defaults; cameras and trajectory
/// are required.
ScenarioConfig scenario_from_json(const Json& doc);
Json scenario_to_json(const ScenarioConfig& config);

/// Applies "dotted.path=value". A path segment that matches no key resolves
/// to the unique key that extends it with a unit suffix, so
/// noise.pixel_sigma addresses noise.pixel_sigma_px. Numeric segments index
/// arrays. The value is parsed as JSON, falling back to a plain string.
/// Throws ConfigError.
void apply_override(Json& doc, std::string_view assignment);

/// Reads, applies overrides, parses and validates. Throws ConfigError.
ScenarioConfig load_scenario(const std::string& path, const std::vector<std::string>& overrides = {},
                             std::optional<std::uint64_t> seed = std::nullopt);

/// 64-bit FNV-1a of the compact serialization, as 16 hex digits.
std::string config_hash(const Json& doc);

/// The bundled scenarios: traj1, traj2, traj3 and long_feedback.
std::vector<std::string> bundled_scenario_names();
ScenarioConfig bundled_scenario(std::string_view name);

/// Waypoint positions shared by the bundled scenarios, ids 1..7.
std::vector<Waypoint> bundled_waypoints();

}  // namespace camloc
