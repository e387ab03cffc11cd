#include "camloc/fusion.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <string>

#include "camloc/error.hpp"

namespace camloc {

namespace {

void require_spd(const Mat3& m, const char* what) {
  if (!m.allFinite() || (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + m.cwiseAbs().maxCoeff())) {
    throw Error(ErrorCode::InvalidArgument, std::string(what) + " is not symmetric");
  }
  Eigen::LLT<Mat3> llt(m);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::InvalidArgument, std::string(what) + " is not positive-definite");
  }
}

Mat3 information_of(const Mat3& covariance, const char* what) {
  require_spd(covariance, what);
  Mat3 info = covariance.inverse();
  return 0.5 * (info + info.transpose());
}

// d(log E)/dE for E = (t, theta), in the (t, theta) chart.
Mat3 log_derivative(const Vec2& t, double theta) {
  double a, da;
  if (std::abs(theta) < 1e-4) {
    const double t2 = theta * theta;
    a = 1.0 - t2 / 12.0 - t2 * t2 / 720.0;
    da = -theta / 6.0 - t2 * theta / 180.0;
  } else {
    const double h = 0.5 * theta;
    const double cot = std::cos(h) / std::sin(h);
    const double csc = 1.0 / std::sin(h);
    a = h * cot;
    da = 0.5 * cot - 0.25 * theta * csc * csc;
  }
  Mat3 d = Mat3::Zero();
  d(0, 0) = a;
  d(0, 1) = 0.5 * theta;
  d(1, 0) = -0.5 * theta;
  d(1, 1) = a;
  d(0, 2) = da * t.x() + 0.5 * t.y();
  d(1, 2) = -0.5 * t.x() + da * t.y();
  d(2, 2) = 1.0;
  return d;
}

Mat2 rotation_transpose_derivative(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Mat2 m;
  m << -s, c, -c, -s;
  return m;
}

struct Assembly {
  std::vector<Mat3> diag;
  std::vector<Mat3> upper;  // block (k, k + 1)
  std::vector<Vec3> gradient;
  double objective = 0.0;
};

void assemble(const std::vector<PoseSE2>& poses, const std::vector<OdometryEdge>& odometry,
              const std::vector<UnaryEdge>& unaries, Assembly& a) {
  const std::size_t n = poses.size();
  a.diag.assign(n, Mat3::Zero());
  a.upper.assign(n > 0 ? n - 1 : 0, Mat3::Zero());
  a.gradient.assign(n, Vec3::Zero());
  a.objective = 0.0;
  Mat3 ji, jj;
  for (const auto& e : odometry) {
    const auto i = static_cast<std::size_t>(e.from_id);
    const auto j = static_cast<std::size_t>(e.to_id);
    const Vec3 r = odometry_residual(poses[i], poses[j], e.delta, &ji, &jj);
    const Mat3 wi = ji.transpose() * e.information;
    const Mat3 wj = jj.transpose() * e.information;
    a.diag[i].noalias() += wi * ji;
    a.diag[j].noalias() += wj * jj;
    a.upper[i].noalias() += wi * jj;
    a.gradient[i].noalias() += wi * r;
    a.gradient[j].noalias() += wj * r;
    a.objective += r.dot(e.information * r);
  }
  for (const auto& u : unaries) {
    const auto i = static_cast<std::size_t>(u.node_id);
    const Vec3 r = unary_residual(poses[i], u.measurement, &ji);
    const Mat3 w = ji.transpose() * u.information;
    a.diag[i].noalias() += w * ji;
    a.gradient[i].noalias() += w * r;
    a.objective += r.dot(u.information * r);
  }
}

double total_objective(const std::vector<PoseSE2>& poses, const std::vector<OdometryEdge>& odometry,
                       const std::vector<UnaryEdge>& unaries) {
  double f = 0.0;
  for (const auto& e : odometry) {
    const Vec3 r = odometry_residual(poses[static_cast<std::size_t>(e.from_id)],
                                     poses[static_cast<std::size_t>(e.to_id)], e.delta);
    f += r.dot(e.information * r);
  }
  for (const auto& u : unaries) {
    const Vec3 r = unary_residual(poses[static_cast<std::size_t>(u.node_id)], u.measurement);
    f += r.dot(u.information * r);
  }
  return f;
}

// Block Thomas algorithm for the symmetric block-tridiagonal system
// (D + lambda diag(D)) x = -g. Returns false if a pivot block is singular.
bool solve_tridiagonal(const Assembly& a, double lambda, std::vector<Vec3>& step) {
  const std::size_t n = a.diag.size();
  std::vector<Eigen::LDLT<Mat3>> pivots(n);
  std::vector<Vec3> y(n);
  for (std::size_t k = 0; k < n; ++k) {
    Mat3 s = a.diag[k];
    for (int d = 0; d < 3; ++d) s(d, d) += lambda * std::max(a.diag[k](d, d), 1e-9);
    Vec3 rhs = -a.gradient[k];
    if (k > 0) {
      const Mat3 l = pivots[k - 1].solve(a.upper[k - 1]).transpose();  // B^T S^-1
      s.noalias() -= l * a.upper[k - 1];
      rhs.noalias() -= l * y[k - 1];
    }
    pivots[k].compute(s);
    if (pivots[k].info() != Eigen::Success || !pivots[k].isPositive()) return false;
    y[k] = rhs;
  }
  step.assign(n, Vec3::Zero());
  for (std::size_t k = n; k-- > 0;) {
    Vec3 rhs = y[k];
    if (k + 1 < n) rhs.noalias() -= a.upper[k] * step[k + 1];
    step[k] = pivots[k].solve(rhs);
    if (!step[k].allFinite()) return false;
  }
  return true;
}

double predicted_decrease(const Assembly& a, const std::vector<Vec3>& step) {
  // -(2 g.dx + dx^T H dx) for the block-tridiagonal H
  double lin = 0.0, quad = 0.0;
  for (std::size_t k = 0; k < step.size(); ++k) {
    lin += a.gradient[k].dot(step[k]);
    quad += step[k].dot(a.diag[k] * step[k]);
    if (k + 1 < step.size()) quad += 2.0 * step[k].dot(a.upper[k] * step[k + 1]);
  }
  return -(2.0 * lin + quad);
}

}  // namespace

Vec3 odometry_residual(const PoseSE2& from, const PoseSE2& to, const PoseSE2& delta, Mat3* j_from,
                       Mat3* j_to) {
  const PoseSE2 err = delta.inverse() * from.inverse() * to;
  const Vec3 r = se2_log(err);
  if (j_from == nullptr && j_to == nullptr) return r;

  const Mat3 dlog = log_derivative(err.translation(), err.theta());
  const Mat2 rz_t = delta.rotation().transpose();
  const Mat2 ri_t = from.rotation().transpose();
  const Vec2 dt = to.translation() - from.translation();

  Mat3 de_from = Mat3::Zero();
  de_from.topLeftCorner<2, 2>() = -rz_t * ri_t;
  de_from.topRightCorner<2, 1>() = rz_t * rotation_transpose_derivative(from.theta()) * dt;
  de_from(2, 2) = -1.0;
  Mat3 de_to = Mat3::Zero();
  de_to.topLeftCorner<2, 2>() = rz_t * ri_t;
  de_to(2, 2) = 1.0;

  if (j_from != nullptr) *j_from = dlog * de_from;
  if (j_to != nullptr) *j_to = dlog * de_to;
  return r;
}

Vec3 unary_residual(const PoseSE2& pose, const PoseSE2& measurement, Mat3* j_pose) {
  const PoseSE2 err = measurement.inverse() * pose;
  const Vec3 r = se2_log(err);
  if (j_pose != nullptr) {
    Mat3 de = Mat3::Zero();
    de.topLeftCorner<2, 2>() = measurement.rotation().transpose();
    de(2, 2) = 1.0;
    *j_pose = log_derivative(err.translation(), err.theta()) * de;
  }
  return r;
}

int PoseGraph::add_anchor(const PoseSE2& pose, double stamp) {
  if (!nodes_.empty()) throw Error(ErrorCode::InvalidArgument, "graph already has an anchor");
  nodes_.push_back({0, stamp, pose});
  return 0;
}

int PoseGraph::add_odometry(const PoseSE2& delta, const Mat3& covariance, std::optional<double> stamp) {
  const Mat3 info = information_of(covariance, "odometry covariance");
  if (nodes_.empty()) add_anchor(PoseSE2{}, stamp ? *stamp - 1.0 : 0.0);
  const GraphNode& last = nodes_.back();
  const double t = stamp ? *stamp : last.stamp + 1.0;
  if (!(t > last.stamp)) {
    throw Error(ErrorCode::InvalidArgument, "node stamps must increase");
  }
  const int id = last.id + 1;
  const PoseSE2 pose = last.pose * delta;
  odometry_.push_back({last.id, id, delta, info});
  nodes_.push_back({id, t, pose});
  return id;
}

void PoseGraph::add_camera_estimate(int node_id, const PoseEstimate& estimate) {
  add_unary(node_id, estimate.pose, estimate.covariance);
}

void PoseGraph::add_unary(int node_id, const PoseSE2& measurement, const Mat3& covariance) {
  (void)node(node_id);
  unaries_.push_back({node_id, measurement, information_of(covariance, "unary covariance")});
}

const GraphNode& PoseGraph::node(int id) const {
  if (id < 0 || id >= size()) throw Error(ErrorCode::UnknownNode, "node id " + std::to_string(id));
  return nodes_[static_cast<std::size_t>(id)];
}

void PoseGraph::set_pose(int id, const PoseSE2& pose) {
  (void)node(id);
  nodes_[static_cast<std::size_t>(id)].pose = pose;
}

int PoseGraph::nearest_node(double stamp) const {
  if (nodes_.empty()) throw Error(ErrorCode::UnknownNode, "graph is empty");
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), stamp,
                             [](const GraphNode& n, double s) { return n.stamp < s; });
  if (it == nodes_.end()) return nodes_.back().id;
  if (it == nodes_.begin()) return it->id;
  const auto prev = std::prev(it);
  return (stamp - prev->stamp <= it->stamp - stamp) ? prev->id : it->id;
}

double PoseGraph::objective() const {
  std::vector<PoseSE2> poses;
  poses.reserve(nodes_.size());
  for (const auto& n : nodes_) poses.push_back(n.pose);
  return total_objective(poses, odometry_, unaries_);
}

std::vector<PoseSE2> optimize(PoseGraph& graph, const SolverConfig& config, OptimizeReport* report) {
  if (graph.unary_edges().empty()) {
    throw Error(ErrorCode::GaugeFree, "pose graph has no unary edge");
  }
  std::vector<PoseSE2> poses;
  poses.reserve(graph.nodes().size());
  for (const auto& n : graph.nodes()) poses.push_back(n.pose);

  Assembly a;
  assemble(poses, graph.odometry_edges(), graph.unary_edges(), a);
  OptimizeReport local;
  local.initial_objective = a.objective;

  double lambda = config.lm_lambda_init;
  std::vector<Vec3> step;
  std::vector<PoseSE2> candidate(poses.size());
  while (local.iterations < config.max_iterations) {
    const bool ok = solve_tridiagonal(a, lambda, step);
    if (ok) {
      const double predicted = predicted_decrease(a, step);
      double step_norm = 0.0, scale = 1.0;
      for (std::size_t k = 0; k < poses.size(); ++k) {
        step_norm = std::max(step_norm, step[k].cwiseAbs().maxCoeff());
        scale = std::max(scale, poses[k].translation().cwiseAbs().maxCoeff());
      }
      if (step_norm <= 1e-12 * scale) break;
      // Take the final small step before stopping.
      const bool negligible = predicted <= config.convergence_tol * a.objective;

      for (std::size_t k = 0; k < poses.size(); ++k) {
        candidate[k] = PoseSE2(poses[k].x() + step[k].x(), poses[k].y() + step[k].y(),
                               poses[k].theta() + step[k].z());
      }
      const double f_new = total_objective(candidate, graph.odometry_edges(), graph.unary_edges());
      if (f_new < a.objective || (negligible && f_new <= a.objective)) {
        const double rel = (a.objective - f_new) / std::max(a.objective, 1e-300);
        poses.swap(candidate);
        assemble(poses, graph.odometry_edges(), graph.unary_edges(), a);
        local.accepted_objectives.push_back(a.objective);
        lambda = std::max(lambda / config.lm_lambda_scale, 1e-12);
        ++local.iterations;
        if (negligible || rel < config.convergence_tol) break;
        continue;
      }
      if (negligible) break;
    }
    lambda *= config.lm_lambda_scale;
    if (lambda > 1e12) throw Error(ErrorCode::SolverDiverged, "pose graph damping exceeded 1e12");
  }
  local.final_objective = a.objective;
  for (std::size_t k = 0; k < poses.size(); ++k) graph.set_pose(static_cast<int>(k), poses[k]);
  if (report != nullptr) *report = std::move(local);
  return poses;
}

Mat3 odometry_covariance(double distance, double rotation, const OdometryNoise& noise, double sigma_floor) {
  const double d = std::abs(distance), r = std::abs(rotation);
  const double f2 = sigma_floor * sigma_floor;
  const double st = noise.trans_sigma_per_meter * noise.trans_sigma_per_meter * d + f2;
  const double sr = noise.rot_sigma_per_meter * noise.rot_sigma_per_meter * d +
                    noise.rot_sigma_per_rad * noise.rot_sigma_per_rad * r + f2;
  return Vec3(st, st, sr).asDiagonal();
}

void RobotLocalizationSim::integrate(const PoseSE2& odometry_delta) {
  internal_pose_ = internal_pose_ * odometry_delta;
  odometry_pose_ = odometry_pose_ * odometry_delta;
}

bool apply_feedback(RobotLocalizationSim& sim, const PoseEstimate& fused, bool is_static) {
  if (!is_static) return false;
  sim.internal_pose_ = fused.pose;
  ++sim.corrections_;
  return true;
}

}  // namespace camloc
