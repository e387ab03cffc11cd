#pragma once

#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "camloc/geometry.hpp"
#include "camloc/observation.hpp"

namespace camloc {

/// Levenberg-Marquardt settings shared by the pose solver and the pose graph.
struct SolverConfig {
  int max_iterations = 50;
  double convergence_tol = 1e-10;  // relative objective change
  double lm_lambda_init = 1e-3;
  double lm_lambda_scale = 10.0;
  double huber_delta = 5.0;  // px; +inf gives plain weighted least squares

  void validate() const;
};

/// Single-camera outlier gate thresholds.
struct GateThresholds {
  double d_theta = 15.0 * std::numbers::pi / 180.0;  // rad
  double d_depth = 0.30;                             // m

  void validate() const;
};

/// sigma = k * max(rms, r_min) / n_cameras, separately for position and heading.
struct CovarianceModel {
  double k_t = 0.01;                                   // m / px
  double k_theta = 0.6 * std::numbers::pi / 180.0;     // rad / px
  double r_min = 0.01;                                 // px
};

struct PoseEstimate {
  PoseSE2 pose;
  Mat3 covariance = Mat3::Identity();
  double rms_residual = 0.0;  // px
  int n_cameras = 1;
  int n_keypoints = 0;
  double stamp = 0.0;
  bool gated = false;
  int iterations = 0;
};

struct PoseCandidate {
  PoseSE2 pose;
  double rms_residual = 0.0;
  double mean_confidence = 0.0;
  int camera_id = 0;
};

/// Robustified objective sum_i w_i rho(|r_i|^2), with rho the Huber
/// function in squared form (identity below delta^2).
double robust_objective(const ResidualSet& residuals, double huber_delta);

/// Minimizes the weighted, Huber-robustified multi-view reprojection error
/// over (x, y, theta) starting from `init`.
/// Throws InsufficientObservations (< 3 detections), SolverDiverged.
PoseEstimate solve_multiview(const FrameSet& frameset, const PoseSE2& init,
                             std::span<const CameraModel> cameras, const RobotModel& model,
                             const SolverConfig& config = {}, const CovarianceModel& covariance = {});

/// Ground-plane pose from one camera alone: multi-start LM over eight
/// equally spaced headings, each started at the back-projected keypoint
/// centroid. Throws InsufficientKeypoints below 4 detections.
PoseCandidate single_view_candidate(const DetectionMessage& message, const CameraModel& camera,
                                    const RobotModel& model, const SolverConfig& config = {});

/// Weighted blend of candidates: weights are mean_confidence / rms
/// (rms floored at 1e-6); heading uses the circular mean.
PoseSE2 interpolate_candidates(std::span<const PoseCandidate> candidates);

/// Pose without any prior: per-camera candidates, interpolated, then refined
/// with solve_multiview. Throws NoEligibleCamera.
PoseEstimate initialize_global(const FrameSet& frameset, std::span<const CameraModel> cameras,
                               const RobotModel& model, const SolverConfig& config = {},
                               const CovarianceModel& covariance = {});

/// Bearing-only gate for single-camera estimates. When the heading change or
/// the change in distance to the camera exceeds its threshold, only the
/// displacement orthogonal to the viewing direction is applied and the
/// covariance is inflated 4x along the viewing direction.
/// Throws InvalidArgument for multi-camera estimates.
PoseEstimate gate_single_view(const PoseSE2& prev, const PoseEstimate& raw, const CameraModel& camera,
                              const GateThresholds& thresholds = {});

Mat3 estimate_covariance(double rms_residual, int n_cameras, int n_keypoints,
                         const CovarianceModel& model = {});

/// Information-weighted mean of estimates of a static robot taken within
/// 2 s. Throws EmptyInput.
PoseEstimate average_estimates(std::span<const PoseEstimate> estimates);

}  // namespace camloc
