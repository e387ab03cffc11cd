#include "camloc/estimator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "camloc/error.hpp"

namespace camloc {

namespace {

struct Observation {
  const CameraModel* camera;
  int keypoint;
  Vec2 pixel;
  double weight;
};

struct Linearization {
  double objective = 0.0;
  Mat3 hessian = Mat3::Zero();   // sum omega_i J^T J
  Vec3 gradient = Vec3::Zero();  // sum omega_i J^T r, half the true gradient
};

double huber(double s, double delta) {
  if (!std::isfinite(delta) || s <= delta * delta) return s;
  return 2.0 * delta * std::sqrt(s) - delta * delta;
}

double huber_slope(double s, double delta) {
  if (!std::isfinite(delta) || s <= delta * delta) return 1.0;
  return delta / std::sqrt(s);
}

std::vector<Observation> collect(const FrameSet& frameset, std::span<const CameraModel> cameras,
                                 const RobotModel& model) {
  std::vector<Observation> obs;
  obs.reserve(static_cast<std::size_t>(frameset.keypoint_count()));
  for (const auto& [camera_id, message] : frameset.per_camera) {
    const CameraModel& camera = find_camera(cameras, camera_id);
    for (const auto& det : message.keypoints) {
      if (det.index < 0 || det.index >= model.size()) {
        throw Error(ErrorCode::UnknownKeypoint, "keypoint index " + std::to_string(det.index));
      }
      obs.push_back({&camera, det.index, det.pixel, det.confidence});
    }
  }
  return obs;
}

// Objective only; +inf when any keypoint falls behind its camera.
double evaluate(const PoseSE2& pose, const std::vector<Observation>& obs, const RobotModel& model,
                double delta) {
  const double c = std::cos(pose.theta()), s = std::sin(pose.theta());
  double f = 0.0;
  for (const auto& o : obs) {
    const Vec3& p = model.keypoints()[static_cast<std::size_t>(o.keypoint)];
    const Vec3 pw(pose.x() + c * p.x() - s * p.y(), pose.y() + s * p.x() + c * p.y(), p.z());
    const Vec3 pc = o.camera->world_to_camera().apply(pw);
    if (!(pc.z() > 1e-9)) return std::numeric_limits<double>::infinity();
    const Vec2 r = o.pixel - Vec2(o.camera->fx() * pc.x() / pc.z() + o.camera->cx(),
                                  o.camera->fy() * pc.y() / pc.z() + o.camera->cy());
    f += o.weight * huber(r.squaredNorm(), delta);
  }
  return f;
}

Linearization linearize(const PoseSE2& pose, const std::vector<Observation>& obs,
                        const RobotModel& model, double delta) {
  const double c = std::cos(pose.theta()), s = std::sin(pose.theta());
  Linearization lin;
  for (const auto& o : obs) {
    const Vec3& p = model.keypoints()[static_cast<std::size_t>(o.keypoint)];
    const Vec3 pw(pose.x() + c * p.x() - s * p.y(), pose.y() + s * p.x() + c * p.y(), p.z());
    const Mat3& rot = o.camera->world_to_camera().rotation();
    const Vec3 pc = rot * pw + o.camera->world_to_camera().translation();
    if (!(pc.z() > 1e-9)) {
      lin.objective = std::numeric_limits<double>::infinity();
      return lin;
    }
    const double iz = 1.0 / pc.z();
    const Vec2 r = o.pixel - Vec2(o.camera->fx() * pc.x() * iz + o.camera->cx(),
                                  o.camera->fy() * pc.y() * iz + o.camera->cy());
    Mat3 dpw = Mat3::Zero();
    dpw(0, 0) = 1.0;
    dpw(1, 1) = 1.0;
    dpw(0, 2) = -s * p.x() - c * p.y();
    dpw(1, 2) = c * p.x() - s * p.y();
    Mat23 dproj;
    dproj << o.camera->fx() * iz, 0.0, -o.camera->fx() * pc.x() * iz * iz,
        0.0, o.camera->fy() * iz, -o.camera->fy() * pc.y() * iz * iz;
    const Mat23 j = -(dproj * (rot * dpw));

    const double sq = r.squaredNorm();
    const double omega = o.weight * huber_slope(sq, delta);
    lin.objective += o.weight * huber(sq, delta);
    lin.hessian.noalias() += omega * j.transpose() * j;
    lin.gradient.noalias() += omega * j.transpose() * r;
  }
  return lin;
}

struct SolveResult {
  PoseSE2 pose;
  double objective;
  int iterations;
};

SolveResult levenberg_marquardt(const PoseSE2& init, const std::vector<Observation>& obs,
                                const RobotModel& model, const SolverConfig& config) {
  PoseSE2 pose = init;
  Linearization lin = linearize(pose, obs, model, config.huber_delta);
  if (!std::isfinite(lin.objective)) {
    throw Error(ErrorCode::SolverDiverged, "initial pose puts keypoints behind a camera");
  }
  double lambda = config.lm_lambda_init;
  int iterations = 0;
  while (iterations < config.max_iterations) {
    Mat3 damped = lin.hessian;
    for (int k = 0; k < 3; ++k) damped(k, k) += lambda * std::max(lin.hessian(k, k), 1e-9);
    const Vec3 step = damped.ldlt().solve(-lin.gradient);
    const double predicted = -(2.0 * lin.gradient.dot(step) + step.dot(lin.hessian * step));

    const double scale = 1.0 + pose.translation().norm();
    if (!step.allFinite() || step.norm() <= 1e-12 * scale) break;
    // Take the final small step before stopping.
    const bool negligible = predicted <= config.convergence_tol * lin.objective;
    const PoseSE2 candidate(pose.x() + step.x(), pose.y() + step.y(), pose.theta() + step.z());
    const double f_new = evaluate(candidate, obs, model, config.huber_delta);
    if (f_new < lin.objective || (negligible && f_new <= lin.objective)) {
      const double rel = (lin.objective - f_new) / std::max(lin.objective, 1e-300);
      pose = candidate;
      lin = linearize(pose, obs, model, config.huber_delta);
      lambda = std::max(lambda / config.lm_lambda_scale, 1e-12);
      ++iterations;
      if (negligible || rel < config.convergence_tol || lin.objective == 0.0) break;
    } else if (negligible) {
      break;
    } else {
      lambda *= config.lm_lambda_scale;
      if (lambda > 1e12) throw Error(ErrorCode::SolverDiverged, "damping exceeded 1e12");
    }
  }
  return {pose, lin.objective, iterations};
}

Vec2 camera_ground_position(const CameraModel& camera) { return camera.center().head<2>(); }

}  // namespace

void SolverConfig::validate() const {
  if (max_iterations < 1) throw Error(ErrorCode::ConfigError, "max_iterations must be >= 1");
  if (!(convergence_tol > 0.0)) throw Error(ErrorCode::ConfigError, "convergence_tol must be positive");
  if (!(lm_lambda_init > 0.0)) throw Error(ErrorCode::ConfigError, "lm_lambda_init must be positive");
  if (!(lm_lambda_scale > 1.0)) throw Error(ErrorCode::ConfigError, "lm_lambda_scale must exceed 1");
  if (!(huber_delta > 0.0)) throw Error(ErrorCode::ConfigError, "huber_delta must be positive");
}

void GateThresholds::validate() const {
  if (!(d_theta > 0.0) || !(d_depth > 0.0)) {
    throw Error(ErrorCode::ConfigError, "gate thresholds must be positive");
  }
}

double robust_objective(const ResidualSet& residuals, double huber_delta) {
  double f = 0.0;
  for (const auto& e : residuals.entries) f += e.weight * huber(e.residual.squaredNorm(), huber_delta);
  return f;
}

PoseEstimate solve_multiview(const FrameSet& frameset, const PoseSE2& init,
                             std::span<const CameraModel> cameras, const RobotModel& model,
                             const SolverConfig& config, const CovarianceModel& covariance) {
  const std::vector<Observation> obs = collect(frameset, cameras, model);
  if (obs.size() < 3) {
    throw Error(ErrorCode::InsufficientObservations,
                std::to_string(obs.size()) + " detections, need at least 3");
  }
  const SolveResult res = levenberg_marquardt(init, obs, model, config);

  PoseEstimate est;
  est.pose = res.pose;
  est.rms_residual = std::sqrt(res.objective / static_cast<double>(obs.size()));
  est.n_cameras = 0;
  for (const auto& [id, msg] : frameset.per_camera) {
    if (!msg.keypoints.empty()) ++est.n_cameras;
  }
  est.n_keypoints = static_cast<int>(obs.size());
  est.stamp = frameset.anchor_stamp();
  est.iterations = res.iterations;
  est.covariance = estimate_covariance(est.rms_residual, est.n_cameras, est.n_keypoints, covariance);
  return est;
}

PoseCandidate single_view_candidate(const DetectionMessage& message, const CameraModel& camera,
                                    const RobotModel& model, const SolverConfig& config) {
  if (message.camera_id != camera.id()) {
    throw Error(ErrorCode::InvalidArgument, "message and camera ids differ");
  }
  if (message.keypoints.size() < 4) {
    throw Error(ErrorCode::InsufficientKeypoints,
                "camera " + std::to_string(camera.id()) + " sees " +
                    std::to_string(message.keypoints.size()) + " keypoints, need 4");
  }
  std::vector<Observation> obs;
  Vec2 pixel_mean = Vec2::Zero();
  Vec3 body_mean = Vec3::Zero();
  double conf_sum = 0.0;
  for (const auto& det : message.keypoints) {
    if (det.index < 0 || det.index >= model.size()) {
      throw Error(ErrorCode::UnknownKeypoint, "keypoint index " + std::to_string(det.index));
    }
    obs.push_back({&camera, det.index, det.pixel, det.confidence});
    pixel_mean += det.pixel;
    body_mean += model.keypoint(det.index);
    conf_sum += det.confidence;
  }
  const double n = static_cast<double>(obs.size());
  pixel_mean /= n;
  body_mean /= n;

  // Intersect the centroid ray with the plane at the mean keypoint height.
  const Vec3 center = camera.center();
  const Vec3 ray = camera.unproject(pixel_mean, 1.0) - center;
  Vec3 hit;
  const double s = std::abs(ray.z()) > 1e-12 ? (body_mean.z() - center.z()) / ray.z() : -1.0;
  hit = s > 0.0 ? Vec3(center + s * ray) : Vec3(center + 3.0 * ray.normalized());

  bool found = false;
  SolveResult best{{}, std::numeric_limits<double>::infinity(), 0};
  for (int k = 0; k < 8; ++k) {
    const double theta0 = -std::numbers::pi + 0.25 * std::numbers::pi * (k + 1);
    const Vec2 offset = PoseSE2(0.0, 0.0, theta0).rotation() * body_mean.head<2>();
    const PoseSE2 start(hit.x() - offset.x(), hit.y() - offset.y(), theta0);
    try {
      const SolveResult r = levenberg_marquardt(start, obs, model, config);
      if (r.objective < best.objective) {
        best = r;
        found = true;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::SolverDiverged) throw;
    }
  }
  if (!found) {
    throw Error(ErrorCode::SolverDiverged, "no start converged for camera " + std::to_string(camera.id()));
  }
  return {best.pose, std::sqrt(best.objective / n), conf_sum / n, camera.id()};
}

PoseSE2 interpolate_candidates(std::span<const PoseCandidate> candidates) {
  if (candidates.empty()) throw Error(ErrorCode::EmptyInput, "no candidates");
  std::vector<double> weights, angles;
  for (const auto& c : candidates) {
    weights.push_back(std::max(c.mean_confidence, 0.0) / std::max(c.rms_residual, 1e-6));
    angles.push_back(c.pose.theta());
  }
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) {
    std::fill(weights.begin(), weights.end(), 1.0);
    total = static_cast<double>(weights.size());
  }
  Vec2 p = Vec2::Zero();
  for (std::size_t i = 0; i < candidates.size(); ++i) p += weights[i] * candidates[i].pose.translation();
  p /= total;
  return {p.x(), p.y(), circular_weighted_mean(angles, weights)};
}

PoseEstimate initialize_global(const FrameSet& frameset, std::span<const CameraModel> cameras,
                               const RobotModel& model, const SolverConfig& config,
                               const CovarianceModel& covariance) {
  std::vector<PoseCandidate> candidates;
  for (const auto& [camera_id, message] : frameset.per_camera) {
    if (message.keypoints.size() < 4) continue;
    try {
      candidates.push_back(single_view_candidate(message, find_camera(cameras, camera_id), model, config));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::SolverDiverged) throw;
    }
  }
  if (candidates.empty()) {
    throw Error(ErrorCode::NoEligibleCamera, "no camera sees at least 4 keypoints");
  }
  return solve_multiview(frameset, interpolate_candidates(candidates), cameras, model, config, covariance);
}

PoseEstimate gate_single_view(const PoseSE2& prev, const PoseEstimate& raw, const CameraModel& camera,
                              const GateThresholds& thresholds) {
  if (raw.n_cameras != 1) {
    throw Error(ErrorCode::InvalidArgument, "gate applies to single-camera estimates only");
  }
  const Vec2 cam = camera_ground_position(camera);
  const Vec2 view = prev.translation() - cam;
  const double range = view.norm();
  const double depth_change = std::abs((raw.pose.translation() - cam).norm() - range);
  const double heading_change = std::abs(angle_diff(raw.pose.theta(), prev.theta()));
  if (heading_change <= thresholds.d_theta && depth_change <= thresholds.d_depth) return raw;
  if (!(range > 1e-9)) return raw;

  const Vec2 v = view / range;
  const Vec2 lateral_dir(-v.y(), v.x());
  const Vec2 shift = lateral_dir * lateral_dir.dot(raw.pose.translation() - prev.translation());
  const Vec2 p = prev.translation() + shift;

  PoseEstimate out = raw;
  out.pose = PoseSE2(p.x(), p.y(), prev.theta());
  Mat3 t = Mat3::Identity();
  t.topLeftCorner<2, 2>() += v * v.transpose();
  out.covariance = t * raw.covariance * t.transpose();
  out.gated = true;
  return out;
}

Mat3 estimate_covariance(double rms_residual, int n_cameras, int n_keypoints, const CovarianceModel& model) {
  if (n_cameras < 1 || n_keypoints < 1) {
    throw Error(ErrorCode::InvalidArgument, "covariance needs at least one camera and keypoint");
  }
  const double r = std::max(rms_residual, model.r_min);
  const double sigma_t = model.k_t * r / n_cameras;
  const double sigma_theta = model.k_theta * r / n_cameras;
  return Vec3(sigma_t * sigma_t, sigma_t * sigma_t, sigma_theta * sigma_theta).asDiagonal();
}

PoseEstimate average_estimates(std::span<const PoseEstimate> estimates) {
  if (estimates.empty()) throw Error(ErrorCode::EmptyInput, "no estimates to average");
  double t_min = estimates.front().stamp, t_max = t_min;
  for (const auto& e : estimates) {
    t_min = std::min(t_min, e.stamp);
    t_max = std::max(t_max, e.stamp);
  }
  if (t_max - t_min > 2.0 + 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "estimates span more than 2 s");
  }

  Mat2 info_xy = Mat2::Zero();
  Vec2 weighted_xy = Vec2::Zero();
  std::vector<double> angles, weights;
  Mat3 info = Mat3::Zero();
  for (const auto& e : estimates) {
    const Mat3 inf = e.covariance.inverse();
    const Mat2 ixy = e.covariance.topLeftCorner<2, 2>().inverse();
    info_xy += ixy;
    weighted_xy += ixy * e.pose.translation();
    angles.push_back(e.pose.theta());
    weights.push_back(1.0 / e.covariance(2, 2));
    info += inf;
  }
  const Vec2 p = info_xy.ldlt().solve(weighted_xy);

  PoseEstimate out;
  out.pose = PoseSE2(p.x(), p.y(), circular_weighted_mean(angles, weights));
  out.covariance = info.inverse();
  out.stamp = estimates.back().stamp;
  out.n_cameras = 0;
  out.n_keypoints = 0;
  double rms_sq = 0.0;
  for (const auto& e : estimates) {
    out.n_cameras = std::max(out.n_cameras, e.n_cameras);
    out.n_keypoints += e.n_keypoints;
    out.iterations += e.iterations;
    out.gated = out.gated || e.gated;
    rms_sq += e.rms_residual * e.rms_residual;
  }
  out.rms_residual = std::sqrt(rms_sq / static_cast<double>(estimates.size()));
  return out;
}

}  // namespace camloc
