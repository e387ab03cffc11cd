#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <vector>

namespace camloc {

/// One 2D keypoint detection k_ij with its confidence w_ij.
struct KeypointDetection {
  int index = 0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  double confidence = 1.0;
};

/// Detections of one camera for one image. Stamps are kept in integer
/// nanoseconds so that a message survives a JSONL round trip bit-exactly.
struct DetectionMessage {
  int camera_id = 0;
  std::int64_t stamp_ns = 0;
  std::vector<KeypointDetection> keypoints;

  [[nodiscard]] double stamp() const { return static_cast<double>(stamp_ns) * 1e-9; }
};

/// Messages from distinct cameras that were assembled into one
/// synchronized observation. anchor_stamp_ns is the stamp of the first
/// message that opened the set.
struct FrameSet {
  std::int64_t anchor_stamp_ns = 0;
  std::map<int, DetectionMessage> per_camera;

  [[nodiscard]] double anchor_stamp() const { return static_cast<double>(anchor_stamp_ns) * 1e-9; }
  [[nodiscard]] int keypoint_count() const;
  [[nodiscard]] int camera_count() const { return static_cast<int>(per_camera.size()); }
};

inline std::int64_t seconds_to_ns(double seconds) {
  return static_cast<std::int64_t>(seconds * 1e9 + (seconds >= 0 ? 0.5 : -0.5));
}

}  // namespace camloc
