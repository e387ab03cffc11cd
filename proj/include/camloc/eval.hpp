#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "camloc/geometry.hpp"

namespace camloc {

struct TrajectorySample {
  double stamp;  // s
  PoseSE2 pose;
};

/// Time-ordered poses. Samples are sorted on construction; duplicate stamps
/// throw InvalidArgument.
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<TrajectorySample> samples);

  void push_back(const TrajectorySample& s);  // stamp must exceed the last one

  [[nodiscard]] const std::vector<TrajectorySample>& samples() const { return samples_; }
  [[nodiscard]] std::size_t size() const { return samples_.size(); }
  [[nodiscard]] bool empty() const { return samples_.empty(); }
  [[nodiscard]] const TrajectorySample& operator[](std::size_t i) const { return samples_[i]; }

  /// Index of the sample nearest to `stamp` within `tolerance`, if any.
  [[nodiscard]] std::optional<std::size_t> nearest(double stamp, double tolerance = 0.05) const;

 private:
  std::vector<TrajectorySample> samples_;
};

/// (estimate index, reference index) for every estimate sample whose nearest
/// reference sample lies within `tolerance`.
std::vector<std::pair<std::size_t, std::size_t>> match_stamps(const Trajectory& estimate,
                                                              const Trajectory& reference,
                                                              double tolerance = 0.05);

struct Alignment {
  Trajectory aligned;
  PoseSE2 transform;  // aligned = transform ∘ estimate
};

/// Rigid ground-plane transform minimizing the summed squared position
/// distance over matched pairs. Throws InsufficientOverlap below 2 pairs.
Alignment procrustes_align(const Trajectory& estimate, const Trajectory& reference);

/// RMS position error over matched pairs. Throws InsufficientOverlap.
double translation_rmse(const Trajectory& estimate, const Trajectory& reference);

struct DistanceError {
  double stamp;
  double distance;  // reference path length up to this sample, m
  double error;     // m
};

/// Throws InsufficientOverlap when nothing matches.
std::vector<DistanceError> error_over_distance(const Trajectory& estimate, const Trajectory& reference);

enum class Mode { Robot, Raw, Gated1Frame, Averaged5Frames, Fused };

inline constexpr Mode kAllModes[] = {Mode::Robot, Mode::Raw, Mode::Gated1Frame, Mode::Averaged5Frames,
                                     Mode::Fused};

const char* to_string(Mode mode);
/// Throws ConfigError for unknown names.
Mode parse_mode(std::string_view name);

struct WaypointWindow {
  int waypoint_id;
  double t0, t1;  // inclusive, s
};

struct WaypointStats {
  int waypoint_id;
  int n_cameras;
  Mode mode;
  double trans_mean, trans_std;  // m, population std
  double rot_mean, rot_std;      // rad
  int samples;
};

/// Per waypoint and mode: error statistics over the estimate samples that
/// match reference samples inside the waypoint's windows. A waypoint may
/// have several windows (revisits). Rows are ordered by camera count, then
/// waypoint id, then mode; modes without samples at a waypoint are omitted.
/// Throws EmptyWindow when a window holds no reference sample.
std::vector<WaypointStats> waypoint_errors(const std::map<Mode, Trajectory>& estimates,
                                           const Trajectory& reference,
                                           const std::vector<WaypointWindow>& windows,
                                           const std::map<int, int>& camera_visibility);

struct GroupStats {
  int n_cameras;
  Mode mode;
  double trans_mean, trans_std;
  double rot_mean, rot_std;
  int samples;
};

/// Pools waypoint rows sharing a camera count and mode (sample-weighted).
std::vector<GroupStats> group_by_cameras(const std::vector<WaypointStats>& rows);

}  // namespace camloc
