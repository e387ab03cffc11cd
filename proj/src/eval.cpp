#include "camloc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "camloc/error.hpp"

namespace camloc {

Trajectory::Trajectory(std::vector<TrajectorySample> samples) : samples_(std::move(samples)) {
  std::sort(samples_.begin(), samples_.end(),
            [](const TrajectorySample& a, const TrajectorySample& b) { return a.stamp < b.stamp; });
  for (std::size_t i = 1; i < samples_.size(); ++i) {
    if (!(samples_[i].stamp > samples_[i - 1].stamp)) {
      throw Error(ErrorCode::InvalidArgument, "trajectory stamps must be distinct");
    }
  }
}

void Trajectory::push_back(const TrajectorySample& s) {
  if (!samples_.empty() && !(s.stamp > samples_.back().stamp)) {
    throw Error(ErrorCode::InvalidArgument, "trajectory stamps must increase");
  }
  samples_.push_back(s);
}

std::optional<std::size_t> Trajectory::nearest(double stamp, double tolerance) const {
  if (samples_.empty()) return std::nullopt;
  auto it = std::lower_bound(samples_.begin(), samples_.end(), stamp,
                             [](const TrajectorySample& s, double t) { return s.stamp < t; });
  std::size_t best;
  if (it == samples_.end()) {
    best = samples_.size() - 1;
  } else if (it == samples_.begin()) {
    best = 0;
  } else {
    const auto i = static_cast<std::size_t>(it - samples_.begin());
    best = (stamp - samples_[i - 1].stamp <= samples_[i].stamp - stamp) ? i - 1 : i;
  }
  if (std::abs(samples_[best].stamp - stamp) > tolerance + 1e-12) return std::nullopt;
  return best;
}

std::vector<std::pair<std::size_t, std::size_t>> match_stamps(const Trajectory& estimate,
                                                              const Trajectory& reference,
                                                              double tolerance) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    if (auto j = reference.nearest(estimate[i].stamp, tolerance)) pairs.emplace_back(i, *j);
  }
  return pairs;
}

Alignment procrustes_align(const Trajectory& estimate, const Trajectory& reference) {
  const auto pairs = match_stamps(estimate, reference);
  if (pairs.size() < 2) {
    throw Error(ErrorCode::InsufficientOverlap, std::to_string(pairs.size()) + " matched pairs, need 2");
  }
  Vec2 mu_e = Vec2::Zero(), mu_r = Vec2::Zero();
  for (const auto& [i, j] : pairs) {
    mu_e += estimate[i].pose.translation();
    mu_r += reference[j].pose.translation();
  }
  mu_e /= static_cast<double>(pairs.size());
  mu_r /= static_cast<double>(pairs.size());

  double cross = 0.0, dot = 0.0;
  for (const auto& [i, j] : pairs) {
    const Vec2 e = estimate[i].pose.translation() - mu_e;
    const Vec2 r = reference[j].pose.translation() - mu_r;
    cross += e.x() * r.y() - e.y() * r.x();
    dot += e.x() * r.x() + e.y() * r.y();
  }
  const double phi = std::atan2(cross, dot);
  const Vec2 t = mu_r - PoseSE2(0.0, 0.0, phi).rotation() * mu_e;
  const PoseSE2 transform(t.x(), t.y(), phi);

  std::vector<TrajectorySample> out;
  out.reserve(estimate.size());
  for (const auto& s : estimate.samples()) out.push_back({s.stamp, transform * s.pose});
  return {Trajectory(std::move(out)), transform};
}

double translation_rmse(const Trajectory& estimate, const Trajectory& reference) {
  const auto pairs = match_stamps(estimate, reference);
  if (pairs.empty()) throw Error(ErrorCode::InsufficientOverlap, "no matched pairs");
  double sum = 0.0;
  for (const auto& [i, j] : pairs) {
    sum += (estimate[i].pose.translation() - reference[j].pose.translation()).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(pairs.size()));
}

std::vector<DistanceError> error_over_distance(const Trajectory& estimate, const Trajectory& reference) {
  const auto pairs = match_stamps(estimate, reference);
  if (pairs.empty()) throw Error(ErrorCode::InsufficientOverlap, "no matched pairs");
  std::vector<double> travelled(reference.size(), 0.0);
  for (std::size_t k = 1; k < reference.size(); ++k) {
    travelled[k] = travelled[k - 1] +
                   (reference[k].pose.translation() - reference[k - 1].pose.translation()).norm();
  }
  std::vector<DistanceError> out;
  out.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    out.push_back({estimate[i].stamp, travelled[j],
                   (estimate[i].pose.translation() - reference[j].pose.translation()).norm()});
  }
  return out;
}

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::Robot: return "robot";
    case Mode::Raw: return "raw";
    case Mode::Gated1Frame: return "gated_1frame";
    case Mode::Averaged5Frames: return "averaged_5frames";
    case Mode::Fused: return "fused";
  }
  return "unknown";
}

Mode parse_mode(std::string_view name) {
  for (Mode m : kAllModes) {
    if (name == to_string(m)) return m;
  }
  throw Error(ErrorCode::ConfigError, "unknown mode '" + std::string(name) + "'");
}

namespace {

struct Accumulator {
  std::vector<double> t, r;

  void add(double te, double re) {
    t.push_back(te);
    r.push_back(re);
  }
  [[nodiscard]] int size() const { return static_cast<int>(t.size()); }
  static double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  }
  static double stddev(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
  }
};

}  // namespace

std::vector<WaypointStats> waypoint_errors(const std::map<Mode, Trajectory>& estimates,
                                           const Trajectory& reference,
                                           const std::vector<WaypointWindow>& windows,
                                           const std::map<int, int>& camera_visibility) {
  std::map<int, std::vector<WaypointWindow>> by_waypoint;
  for (const auto& w : windows) {
    bool any = false;
    for (const auto& s : reference.samples()) {
      if (s.stamp >= w.t0 - 1e-9 && s.stamp <= w.t1 + 1e-9) {
        any = true;
        break;
      }
    }
    if (!any) {
      throw Error(ErrorCode::EmptyWindow, "waypoint " + std::to_string(w.waypoint_id) + " window has no samples");
    }
    by_waypoint[w.waypoint_id].push_back(w);
  }

  std::vector<WaypointStats> rows;
  for (const auto& [id, wins] : by_waypoint) {
    const auto vis = camera_visibility.find(id);
    const int n_cameras = vis == camera_visibility.end() ? 0 : vis->second;
    for (const auto& [mode, traj] : estimates) {
      Accumulator acc;
      for (const auto& s : traj.samples()) {
        const bool inside = std::any_of(wins.begin(), wins.end(), [&](const WaypointWindow& w) {
          return s.stamp >= w.t0 - 0.05 && s.stamp <= w.t1 + 0.05;
        });
        if (!inside) continue;
        const auto j = reference.nearest(s.stamp);
        if (!j) continue;
        const auto& ref = reference[*j];
        const bool ref_inside = std::any_of(wins.begin(), wins.end(), [&](const WaypointWindow& w) {
          return ref.stamp >= w.t0 - 1e-9 && ref.stamp <= w.t1 + 1e-9;
        });
        if (!ref_inside) continue;
        acc.add((s.pose.translation() - ref.pose.translation()).norm(),
                std::abs(angle_diff(s.pose.theta(), ref.pose.theta())));
      }
      if (acc.size() == 0) continue;
      rows.push_back({id, n_cameras, mode, Accumulator::mean(acc.t), Accumulator::stddev(acc.t),
                      Accumulator::mean(acc.r), Accumulator::stddev(acc.r), acc.size()});
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const WaypointStats& a, const WaypointStats& b) {
    if (a.n_cameras != b.n_cameras) return a.n_cameras < b.n_cameras;
    if (a.waypoint_id != b.waypoint_id) return a.waypoint_id < b.waypoint_id;
    return static_cast<int>(a.mode) < static_cast<int>(b.mode);
  });
  return rows;
}

std::vector<GroupStats> group_by_cameras(const std::vector<WaypointStats>& rows) {
  std::map<std::pair<int, int>, std::vector<const WaypointStats*>> groups;
  for (const auto& r : rows) groups[{r.n_cameras, static_cast<int>(r.mode)}].push_back(&r);

  std::vector<GroupStats> out;
  for (const auto& [key, members] : groups) {
    int n = 0;
    double t_mean = 0.0, r_mean = 0.0;
    for (const auto* r : members) {
      n += r->samples;
      t_mean += r->samples * r->trans_mean;
      r_mean += r->samples * r->rot_mean;
    }
    GroupStats g{key.first, static_cast<Mode>(key.second), 0.0, 0.0, 0.0, 0.0, n};
    if (n > 0) {
      t_mean /= n;
      r_mean /= n;
      double t_var = 0.0, r_var = 0.0;
      for (const auto* r : members) {
        const double dt = r->trans_mean - t_mean, dr = r->rot_mean - r_mean;
        t_var += r->samples * (r->trans_std * r->trans_std + dt * dt);
        r_var += r->samples * (r->rot_std * r->rot_std + dr * dr);
      }
      g.trans_mean = t_mean;
      g.rot_mean = r_mean;
      g.trans_std = std::sqrt(t_var / n);
      g.rot_std = std::sqrt(r_var / n);
    }
    out.push_back(g);
  }
  return out;
}

}  // namespace camloc
