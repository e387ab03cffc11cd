#pragma once

#include <optional>
#include <vector>

#include "camloc/detection_sim.hpp"
#include "camloc/estimator.hpp"
#include "camloc/geometry.hpp"

namespace camloc {

struct GraphNode {
  int id;
  double stamp;
  PoseSE2 pose;
};

struct OdometryEdge {
  int from_id;
  int to_id;
  PoseSE2 delta;
  Mat3 information;
};

struct UnaryEdge {
  int node_id;
  PoseSE2 measurement;
  Mat3 information;
};

/// Chain of robot poses. Odometry edges link consecutive ids; unary edges
/// pin individual nodes to absolute camera estimates.
class PoseGraph {
 public:
  /// First node. Throws InvalidArgument if the graph is not empty.
  int add_anchor(const PoseSE2& pose, double stamp);

  /// Appends a node at last_pose ∘ delta. An empty graph first gets an
  /// identity anchor. Without a stamp the new node is 1 s after the last.
  /// Throws InvalidArgument for a non-positive-definite covariance or a
  /// stamp that does not increase.
  int add_odometry(const PoseSE2& delta, const Mat3& covariance, std::optional<double> stamp = std::nullopt);

  /// Throws UnknownNode, InvalidArgument.
  void add_camera_estimate(int node_id, const PoseEstimate& estimate);
  void add_unary(int node_id, const PoseSE2& measurement, const Mat3& covariance);

  [[nodiscard]] const std::vector<GraphNode>& nodes() const { return nodes_; }
  [[nodiscard]] const std::vector<OdometryEdge>& odometry_edges() const { return odometry_; }
  [[nodiscard]] const std::vector<UnaryEdge>& unary_edges() const { return unaries_; }
  [[nodiscard]] int size() const { return static_cast<int>(nodes_.size()); }
  [[nodiscard]] bool empty() const { return nodes_.empty(); }
  [[nodiscard]] const GraphNode& node(int id) const;
  [[nodiscard]] const GraphNode& back() const { return nodes_.back(); }

  /// Id of the node whose stamp is closest. Throws UnknownNode when empty.
  [[nodiscard]] int nearest_node(double stamp) const;

  /// Sum of squared Mahalanobis norms of all edge residuals.
  [[nodiscard]] double objective() const;

  void set_pose(int id, const PoseSE2& pose);

 private:
  std::vector<GraphNode> nodes_;
  std::vector<OdometryEdge> odometry_;
  std::vector<UnaryEdge> unaries_;
};

struct OptimizeReport {
  int iterations = 0;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  std::vector<double> accepted_objectives;
};

/// Levenberg-Marquardt over all node poses, warm-started from the current
/// ones; writes the result back into the graph and returns it.
/// Throws GaugeFree (no unary edge), SolverDiverged.
std::vector<PoseSE2> optimize(PoseGraph& graph, const SolverConfig& config = {},
                              OptimizeReport* report = nullptr);

/// Residuals and their Jacobians with respect to (x, y, theta) of each pose.
Vec3 odometry_residual(const PoseSE2& from, const PoseSE2& to, const PoseSE2& delta, Mat3* j_from = nullptr,
                       Mat3* j_to = nullptr);
Vec3 unary_residual(const PoseSE2& pose, const PoseSE2& measurement, Mat3* j_pose = nullptr);

/// Covariance of an odometry increment in the frame of its start pose,
/// following the simulator's noise model, with each sigma floored.
Mat3 odometry_covariance(double distance, double rotation, const OdometryNoise& noise,
                         double sigma_floor = 1e-3);

/// Dead-reckoning stand-in for the robot's own localization.
class RobotLocalizationSim {
 public:
  explicit RobotLocalizationSim(const PoseSE2& initial = {}) : internal_pose_(initial), odometry_pose_(initial) {}

  void integrate(const PoseSE2& odometry_delta);

  [[nodiscard]] const PoseSE2& internal_pose() const { return internal_pose_; }
  /// Pure dead reckoning, never corrected.
  [[nodiscard]] const PoseSE2& odometry_pose() const { return odometry_pose_; }
  [[nodiscard]] int corrections() const { return corrections_; }

 private:
  friend bool apply_feedback(RobotLocalizationSim& sim, const PoseEstimate& fused, bool is_static);

  PoseSE2 internal_pose_;
  PoseSE2 odometry_pose_;
  int corrections_ = 0;
};

/// Resets the internal pose to the fused estimate, only while static.
bool apply_feedback(RobotLocalizationSim& sim, const PoseEstimate& fused, bool is_static);

}  // namespace camloc
