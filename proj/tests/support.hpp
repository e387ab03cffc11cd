#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "camloc/detection_sim.hpp"
#include "camloc/geometry.hpp"
#include "camloc/observation.hpp"

namespace camloc::test {

inline double deg(double d) { return d * std::numbers::pi / 180.0; }

/// Frame-set holding the given messages, anchored at the earliest stamp.
inline FrameSet make_frameset(const std::vector<DetectionMessage>& messages) {
  FrameSet fs;
  fs.anchor_stamp_ns = messages.empty() ? 0 : messages.front().stamp_ns;
  for (const auto& m : messages) {
    fs.anchor_stamp_ns = std::min(fs.anchor_stamp_ns, m.stamp_ns);
    fs.per_camera[m.camera_id] = m;
  }
  return fs;
}

inline NoiseModel noiseless() {
  NoiseModel n;
  n.pixel_sigma = 0.0;
  n.dropout_prob = 0.0;
  n.outlier_prob = 0.0;
  n.timestamp_jitter = 0.0;
  return n;
}

inline NoiseModel gaussian_only(double sigma) {
  NoiseModel n = noiseless();
  n.pixel_sigma = sigma;
  return n;
}

/// Number of cameras that see at least `min_keypoints` keypoints.
inline int cameras_seeing(const std::vector<CameraModel>& cameras, const RobotModel& model, const PoseSE2& pose,
                          int min_keypoints = 4) {
  int n = 0;
  for (const auto& c : cameras) {
    if (visible_keypoint_count(c, model, pose) >= min_keypoints) ++n;
  }
  return n;
}

}  // namespace camloc::test
