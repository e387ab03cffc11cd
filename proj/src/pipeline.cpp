#include "camloc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>

#include "camloc/error.hpp"
#include "camloc/estimator.hpp"
#include "camloc/fusion.hpp"
#include "camloc/sync.hpp"

namespace camloc {

namespace {

constexpr std::uint32_t kDetectionStream = 1;
constexpr std::uint32_t kOdometryStream = 2;

Rng make_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32), stream};
  return Rng(seq);
}

std::size_t nearest_sample(const std::vector<GroundTruthSample>& truth, double stamp) {
  auto it = std::lower_bound(truth.begin(), truth.end(), stamp,
                             [](const GroundTruthSample& s, double t) { return s.stamp < t; });
  if (it == truth.end()) return truth.size() - 1;
  const auto i = static_cast<std::size_t>(it - truth.begin());
  if (i > 0 && stamp - truth[i - 1].stamp <= truth[i].stamp - stamp) return i - 1;
  return i;
}

const CameraModel& single_camera(const FrameSet& fs, std::span<const CameraModel> cameras) {
  for (const auto& [id, msg] : fs.per_camera) {
    if (!msg.keypoints.empty()) return find_camera(cameras, id);
  }
  throw Error(ErrorCode::InvalidArgument, "frame-set has no detections");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

struct EstimationState {
  std::optional<PoseSE2> gate_prior;
  std::vector<PoseEstimate> avg_buffer;
  int avg_window = -1;
  std::vector<TrajectorySample> raw, gated, averaged, fused, robot;
};

}  // namespace

MotionData simulate_motion(const ScenarioConfig& config) {
  MotionData out;
  out.truth = script_trajectory(config.trajectory);
  Rng rng = make_rng(config.seed, kOdometryStream);
  out.odometry.reserve(out.truth.size());
  out.odometry.emplace_back();
  for (std::size_t k = 1; k < out.truth.size(); ++k) {
    const PoseSE2& a = out.truth[k - 1].pose;
    const PoseSE2& b = out.truth[k].pose;
    const bool still = a.x() == b.x() && a.y() == b.y() && a.theta() == b.theta();
    const PoseSE2 delta = still ? PoseSE2{} : a.inverse() * b;
    out.odometry.push_back(simulate_odometry_step(delta, config.odometry_noise, rng));
  }
  return out;
}

std::vector<DetectionMessage> simulate_detections(const ScenarioConfig& config,
                                                  const std::vector<GroundTruthSample>& truth) {
  const auto cameras = config.build_cameras();
  const RobotModel model = config.build_robot();
  Rng rng = make_rng(config.seed, kDetectionStream);
  std::vector<DetectionMessage> out;
  for (const auto& s : truth) {
    auto frame = simulate_frame(s, cameras, model, config.noise, rng);
    for (auto& m : frame) out.push_back(std::move(m));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const DetectionMessage& a, const DetectionMessage& b) { return a.stamp_ns < b.stamp_ns; });
  return out;
}

RunResult execute(const ScenarioConfig& config, const MotionData& motion,
                  std::span<const DetectionMessage> messages) {
  const auto cameras = config.build_cameras();
  const RobotModel model = config.build_robot();
  const auto& truth = motion.truth;
  if (truth.empty() || motion.odometry.size() != truth.size()) {
    throw Error(ErrorCode::InvalidArgument, "odometry and ground truth lengths differ");
  }

  RunResult res;
  Counters& n = res.counters;
  {
    std::vector<TrajectorySample> ref;
    for (const auto& s : truth) ref.push_back({s.stamp, s.pose});
    res.reference = Trajectory(std::move(ref));
  }

  // Dwell windows: runs of static samples at one waypoint.
  std::vector<int> window_of(truth.size(), -1);
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (!truth[k].is_static) continue;
    const bool continues = k > 0 && truth[k - 1].is_static && truth[k - 1].waypoint_id == truth[k].waypoint_id;
    if (continues) {
      res.windows.back().t1 = truth[k].stamp;
    } else {
      res.windows.push_back({truth[k].waypoint_id, truth[k].stamp, truth[k].stamp});
      int seen = 0;
      for (const auto& cam : cameras) {
        if (visible_keypoint_count(cam, model, truth[k].pose) >= 4) ++seen;
      }
      res.camera_visibility[truth[k].waypoint_id] = seen;
    }
    window_of[k] = static_cast<int>(res.windows.size()) - 1;
  }

  n.messages = static_cast<std::int64_t>(messages.size());
  if (messages.empty()) {
    n.empty_stream = 1;
    return res;
  }

  std::vector<int> ids;
  for (const auto& c : cameras) ids.push_back(c.id());
  Synchronizer sync(config.sync, ids);
  std::vector<FrameSet> framesets;
  for (const auto& m : messages) {
    for (auto& fs : sync.ingest(m)) framesets.push_back(std::move(fs));
  }
  for (auto& fs : sync.flush()) framesets.push_back(std::move(fs));
  n.stale_messages = static_cast<std::int64_t>(sync.stale_count());
  n.frame_sets = static_cast<std::int64_t>(framesets.size());

  std::vector<std::vector<std::size_t>> sets_at(truth.size());
  for (std::size_t i = 0; i < framesets.size(); ++i) {
    sets_at[nearest_sample(truth, framesets[i].anchor_stamp())].push_back(i);
  }

  const bool estimate = config.has_mode(Mode::Raw) || config.has_mode(Mode::Gated1Frame) ||
                        config.has_mode(Mode::Averaged5Frames) || config.has_mode(Mode::Fused);
  const bool fuse = config.has_mode(Mode::Fused);

  RobotLocalizationSim robot(truth.front().pose);
  PoseGraph graph;
  if (fuse) graph.add_anchor(truth.front().pose, truth.front().stamp);
  PoseSE2 pending;
  double pending_dist = 0.0, pending_rot = 0.0;
  auto add_node = [&](double stamp) {
    graph.add_odometry(pending, odometry_covariance(pending_dist, pending_rot, config.odometry_noise,
                                                    config.fusion.odometry_sigma_floor),
                       stamp);
    pending = PoseSE2{};
    pending_dist = pending_rot = 0.0;
  };

  EstimationState st;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const GroundTruthSample& sample = truth[k];
    if (k > 0) {
      const PoseSE2& d = motion.odometry[k];
      robot.integrate(d);
      if (st.gate_prior) st.gate_prior = *st.gate_prior * d;
      if (fuse) {
        pending = pending * d;
        pending_dist += d.translation().norm();
        pending_rot += std::abs(d.theta());
        if (pending.translation().norm() >= config.fusion.node_min_translation ||
            std::abs(pending.theta()) >= config.fusion.node_min_rotation) {
          add_node(sample.stamp);
        }
      }
    }
    st.robot.push_back({sample.stamp, robot.internal_pose()});
    if (!estimate) continue;

    for (std::size_t idx : sets_at[k]) {
      const FrameSet& fs = framesets[idx];
      const double stamp = fs.anchor_stamp();
      PoseEstimate raw;
      try {
        raw = solve_multiview(fs, robot.internal_pose(), cameras, model, config.solver, config.covariance);
        if (raw.rms_residual > 4.0 * std::max(config.noise.pixel_sigma, 1.0)) {
          try {
            const PoseEstimate global = initialize_global(fs, cameras, model, config.solver, config.covariance);
            if (global.rms_residual < raw.rms_residual) raw = global;
          } catch (const Error&) {
          }
        }
      } catch (const Error& e) {
        if (e.code() == ErrorCode::SolverDiverged) {
          ++n.solver_divergences;
          try {
            raw = initialize_global(fs, cameras, model, config.solver, config.covariance);
          } catch (const Error&) {
            ++n.estimation_failures;
            continue;
          }
        } else {
          ++n.estimation_failures;
          continue;
        }
      }
      ++n.estimates;
      n.solver_iterations += raw.iterations;
      st.raw.push_back({stamp, raw.pose});

      PoseEstimate gated = raw;
      if (raw.n_cameras == 1 && st.gate_prior) {
        gated = gate_single_view(*st.gate_prior, raw, single_camera(fs, cameras), config.gate);
        if (gated.gated) ++n.gated_estimates;
      }
      st.gate_prior = gated.pose;
      st.gated.push_back({stamp, gated.pose});

      if (sample.is_static) {
        if (window_of[k] != st.avg_window) {
          st.avg_buffer.clear();
          st.avg_window = window_of[k];
        }
        st.avg_buffer.push_back(gated);
        while (st.avg_buffer.back().stamp - st.avg_buffer.front().stamp > 2.0) {
          st.avg_buffer.erase(st.avg_buffer.begin());
        }
        if (st.avg_buffer.size() == 5) {
          const PoseEstimate avg = average_estimates(st.avg_buffer);
          st.averaged.push_back({avg.stamp, avg.pose});
          st.avg_buffer.clear();
        }
      } else {
        st.avg_buffer.clear();
        st.avg_window = -1;
      }

      if (!fuse) continue;
      if (config.fusion.unary_static_only && !sample.is_static) {
        st.fused.push_back({stamp, graph.back().pose * pending});
        continue;
      }
      if (graph.back().stamp < sample.stamp) add_node(sample.stamp);
      const int node = graph.nearest_node(stamp);
      if (std::abs(graph.node(node).stamp - stamp) > config.fusion.unary_stamp_tolerance) {
        ++n.unary_stamp_mismatch;
      }
      graph.add_camera_estimate(node, gated);
      ++n.unary_edges;
      OptimizeReport report;
      optimize(graph, config.solver, &report);
      ++n.optimizations;
      n.optimizer_iterations += report.iterations;

      PoseEstimate fused = gated;
      fused.pose = graph.back().pose;
      st.fused.push_back({stamp, fused.pose});
      if (config.feedback && apply_feedback(robot, fused, sample.is_static)) ++n.feedback_applied;
    }
  }
  n.graph_nodes = fuse ? graph.size() : 0;

  std::map<Mode, std::vector<TrajectorySample>*> sources{{Mode::Robot, &st.robot},
                                                         {Mode::Raw, &st.raw},
                                                         {Mode::Gated1Frame, &st.gated},
                                                         {Mode::Averaged5Frames, &st.averaged},
                                                         {Mode::Fused, &st.fused}};
  for (Mode m : config.modes) {
    res.trajectories[m] = Trajectory(std::move(*sources[m]));
    const Trajectory& traj = res.trajectories[m];
    try {
      res.rmse_unaligned[m] = translation_rmse(traj, res.reference);
      const Alignment al = procrustes_align(traj, res.reference);
      res.rmse_aligned[m] = translation_rmse(al.aligned, res.reference);
      res.error_series[m] = error_over_distance(al.aligned, res.reference);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InsufficientOverlap) throw;
    }
  }
  res.waypoint_stats = waypoint_errors(res.trajectories, res.reference, res.windows, res.camera_visibility);
  return res;
}

void write_outputs(const std::filesystem::path& dir, const ScenarioConfig& config, const RunResult& result) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "waypoint_stats.csv", std::ios::binary);
    out << "waypoint_id,n_cameras,mode,trans_mean_m,trans_std_m,rot_mean_rad,rot_std_rad\n";
    for (const auto& r : result.waypoint_stats) {
      out << r.waypoint_id << ',' << r.n_cameras << ',' << to_string(r.mode) << ',' << fmt(r.trans_mean) << ','
          << fmt(r.trans_std) << ',' << fmt(r.rot_mean) << ',' << fmt(r.rot_std) << '\n';
    }
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write waypoint_stats.csv");
  }
  {
    std::ofstream out(dir / "trajectory_error.csv", std::ios::binary);
    out << "stamp_ns,distance_m,error_m,mode\n";
    for (Mode m : config.modes) {
      auto it = result.error_series.find(m);
      if (it == result.error_series.end()) continue;
      for (const auto& e : it->second) {
        out << seconds_to_ns(e.stamp) << ',' << fmt(e.distance) << ',' << fmt(e.error) << ',' << to_string(m) << '\n';
      }
    }
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write trajectory_error.csv");
  }

  const Json resolved = scenario_to_json(config);
  Json meta;
  meta["scenario"] = config.name;
  meta["seed"] = config.seed;
  meta["config_hash"] = config_hash(resolved);
  const Counters& c = result.counters;
  meta["counters"] = {{"messages", c.messages},
                      {"stale_messages", c.stale_messages},
                      {"frame_sets", c.frame_sets},
                      {"estimates", c.estimates},
                      {"gated_estimates", c.gated_estimates},
                      {"solver_iterations", c.solver_iterations},
                      {"estimation_failures", c.estimation_failures},
                      {"solver_divergences", c.solver_divergences},
                      {"graph_nodes", c.graph_nodes},
                      {"unary_edges", c.unary_edges},
                      {"unary_stamp_mismatch", c.unary_stamp_mismatch},
                      {"optimizations", c.optimizations},
                      {"optimizer_iterations", c.optimizer_iterations},
                      {"feedback_applied", c.feedback_applied},
                      {"empty_stream", c.empty_stream}};
  Json rmse = Json::object(), rmse_raw = Json::object(), samples = Json::object();
  for (Mode m : config.modes) {
    if (auto it = result.rmse_aligned.find(m); it != result.rmse_aligned.end()) rmse[to_string(m)] = it->second;
    if (auto it = result.rmse_unaligned.find(m); it != result.rmse_unaligned.end()) rmse_raw[to_string(m)] = it->second;
    auto t = result.trajectories.find(m);
    samples[to_string(m)] = t == result.trajectories.end() ? 0 : t->second.size();
  }
  meta["rmse_aligned_m"] = rmse;
  meta["rmse_unaligned_m"] = rmse_raw;
  meta["samples"] = samples;
  Json wps = Json::array();
  for (const auto& r : result.waypoint_stats) {
    wps.push_back({{"waypoint_id", r.waypoint_id}, {"mode", to_string(r.mode)}, {"samples", r.samples}});
  }
  meta["waypoint_samples"] = wps;
  meta["config"] = resolved;

  std::ofstream out(dir / "run_meta.json", std::ios::binary);
  out << meta.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write run_meta.json");
}

}  // namespace camloc
