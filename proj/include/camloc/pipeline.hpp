#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "camloc/detection_sim.hpp"
#include "camloc/eval.hpp"
#include "camloc/observation.hpp"
#include "camloc/scenario.hpp"

namespace camloc {

/// Ground truth and measured odometry. odometry[k] is the body-frame motion
/// reported between samples k-1 and k; odometry[0] is the identity.
struct MotionData {
  std::vector<GroundTruthSample> truth;
  std::vector<PoseSE2> odometry;
};

/// Uses its own random stream, so a replay reproduces it from the config.
MotionData simulate_motion(const ScenarioConfig& config);

/// Detection stream in arrival (stamp) order.
std::vector<DetectionMessage> simulate_detections(const ScenarioConfig& config,
                                                  const std::vector<GroundTruthSample>& truth);

struct Counters {
  std::int64_t messages = 0;
  std::int64_t stale_messages = 0;
  std::int64_t frame_sets = 0;
  std::int64_t estimates = 0;
  std::int64_t gated_estimates = 0;
  std::int64_t solver_iterations = 0;
  std::int64_t estimation_failures = 0;
  std::int64_t solver_divergences = 0;
  std::int64_t graph_nodes = 0;
  std::int64_t unary_edges = 0;
  std::int64_t unary_stamp_mismatch = 0;
  std::int64_t optimizations = 0;
  std::int64_t optimizer_iterations = 0;
  std::int64_t feedback_applied = 0;
  std::int64_t empty_stream = 0;
};

struct RunResult {
  Trajectory reference;
  std::map<Mode, Trajectory> trajectories;
  std::map<Mode, double> rmse_aligned;    // m, after rigid alignment
  std::map<Mode, double> rmse_unaligned;  // m
  std::map<Mode, std::vector<DistanceError>> error_series;
  std::vector<WaypointWindow> windows;
  std::map<int, int> camera_visibility;  // waypoint id -> cameras seeing >= 4 keypoints
  std::vector<WaypointStats> waypoint_stats;
  Counters counters;
};

/// Sync, per-mode estimation, fusion and evaluation on a detection stream.
/// Throws SolverDiverged when the pose graph diverges.
RunResult execute(const ScenarioConfig& config, const MotionData& motion,
                  std::span<const DetectionMessage> messages);

/// Writes waypoint_stats.csv, trajectory_error.csv and run_meta.json.
void write_outputs(const std::filesystem::path& dir, const ScenarioConfig& config, const RunResult& result);

}  // namespace camloc
