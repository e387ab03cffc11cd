#include "doctest.h"

#include <Eigen/LU>

#include <random>

#include "camloc/error.hpp"
#include "camloc/fusion.hpp"
#include "support.hpp"

using namespace camloc;
using camloc::test::deg;

namespace {

Mat3 diag(double a, double b, double c) { return Vec3(a, b, c).asDiagonal(); }

struct Chain {
  std::vector<PoseSE2> truth;
  std::vector<PoseSE2> measured_deltas;
};

Chain drifting_chain(std::uint64_t seed, int n, OdometryNoise noise = {}) {
  Rng rng(seed);
  Chain c;
  c.truth.push_back(PoseSE2(1, 1, 0));
  for (int k = 1; k < n; ++k) {
    const PoseSE2 d(0.1, 0.0, k % 20 < 10 ? 0.03 : -0.02);
    c.truth.push_back(c.truth.back() * d);
    c.measured_deltas.push_back(simulate_odometry_step(d, noise, rng));
  }
  return c;
}

double rmse(const std::vector<PoseSE2>& a, const std::vector<PoseSE2>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i].translation() - b[i].translation()).squaredNorm();
  return std::sqrt(s / static_cast<double>(a.size()));
}

PoseGraph graph_from(const Chain& c, const OdometryNoise& noise, double cov_scale = 1.0) {
  PoseGraph g;
  g.add_anchor(c.truth.front(), 0.0);
  for (std::size_t k = 0; k < c.measured_deltas.size(); ++k) {
    const PoseSE2& d = c.measured_deltas[k];
    g.add_odometry(d, cov_scale * odometry_covariance(std::hypot(d.x(), d.y()), std::abs(d.theta()), noise),
                   0.2 * static_cast<double>(k + 1));
  }
  return g;
}

}  // namespace

TEST_CASE("graph construction") {
  SUBCASE("bootstrap") {
    PoseGraph g;
    CHECK(g.empty());
    const int id = g.add_odometry(PoseSE2(0.5, 0, 0), Mat3::Identity());
    CHECK(id == 1);
    CHECK(g.size() == 2);
    CHECK(g.node(0).pose.x() == 0.0);
    CHECK(g.odometry_edges().size() == 1);
  }
  SUBCASE("composition") {
    PoseGraph g;
    g.add_anchor(PoseSE2{}, 0.0);
    const int id = g.add_odometry(PoseSE2(1, 0, 0), Mat3::Identity());
    CHECK(g.node(id).pose.x() == doctest::Approx(1.0));
    CHECK(g.node(id).pose.y() == 0.0);
    g.add_odometry(PoseSE2(0, 0, std::numbers::pi / 2), Mat3::Identity());
    const int last = g.add_odometry(PoseSE2(1, 0, 0), Mat3::Identity());
    CHECK(g.node(last).pose.x() == doctest::Approx(1.0));
    CHECK(g.node(last).pose.y() == doctest::Approx(1.0));
  }
  SUBCASE("100 sequential deltas") {
    PoseGraph g;
    for (int k = 0; k < 100; ++k) g.add_odometry(PoseSE2(0.1, 0, 0.01), Mat3::Identity());
    CHECK(g.size() == 101);
    CHECK(g.odometry_edges().size() == 100);
    for (int k = 0; k < 101; ++k) CHECK(g.nodes()[static_cast<std::size_t>(k)].id == k);
    for (const auto& e : g.odometry_edges()) CHECK(e.to_id == e.from_id + 1);
    for (int k = 1; k < 101; ++k) CHECK(g.nodes()[static_cast<std::size_t>(k)].stamp > g.nodes()[static_cast<std::size_t>(k - 1)].stamp);
  }
  SUBCASE("invalid input") {
    PoseGraph g;
    g.add_anchor(PoseSE2{}, 1.0);
    CHECK_THROWS_AS(g.add_anchor(PoseSE2{}, 2.0), Error);
    CHECK_THROWS_AS(g.add_odometry(PoseSE2(1, 0, 0), diag(1, 0, 1)), Error);
    CHECK_THROWS_AS(g.add_odometry(PoseSE2(1, 0, 0), Mat3::Identity(), 0.5), Error);
  }
}

TEST_CASE("camera constraints") {
  PoseGraph g;
  g.add_odometry(PoseSE2(1, 0, 0), Mat3::Identity());
  PoseEstimate e;
  e.pose = PoseSE2(1.1, 0, 0);
  e.covariance = estimate_covariance(2.0, 2, 16);
  g.add_camera_estimate(g.back().id, e);
  CHECK(g.unary_edges().size() == 1);
  g.add_camera_estimate(g.back().id, e);
  CHECK(g.unary_edges().size() == 2);
  CHECK(g.unary_edges()[0].information.isApprox(e.covariance.inverse()));
  try {
    g.add_camera_estimate(7, e);
    FAIL("expected UnknownNode");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::UnknownNode);
  }
  CHECK(g.nearest_node(0.9) == 1);
  CHECK(g.nearest_node(-5.0) == 0);
}

TEST_CASE("optimization without unaries is gauge free") {
  PoseGraph g;
  g.add_odometry(PoseSE2(1, 0, 0), Mat3::Identity());
  try {
    (void)optimize(g);
    FAIL("expected GaugeFree");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::GaugeFree);
  }
}

TEST_CASE("consistent chain stays at dead reckoning") {
  const OdometryNoise zero{0, 0, 0, 0, 0, 0};
  const Chain c = drifting_chain(1, 50, zero);
  PoseGraph g = graph_from(c, OdometryNoise{});
  g.add_unary(0, c.truth.front(), diag(1e-4, 1e-4, 1e-4));
  const auto poses = optimize(g);
  CHECK(g.objective() < 1e-10);
  for (std::size_t k = 0; k < poses.size(); ++k) {
    CHECK((poses[k].translation() - c.truth[k].translation()).norm() < 1e-9);
    CHECK(std::abs(angle_diff(poses[k].theta(), c.truth[k].theta())) < 1e-9);
  }
}

TEST_CASE("two-node linear example") {
  PoseGraph g;
  g.add_anchor(PoseSE2{}, 0.0);
  g.add_odometry(PoseSE2(1, 0, 0), Mat3::Identity(), 1.0);
  g.add_unary(0, PoseSE2(0, 0, 0), Mat3::Identity());
  g.add_unary(1, PoseSE2(2, 0, 0), Mat3::Identity());
  const auto poses = optimize(g);
  CHECK(poses[0].x() == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  CHECK(poses[1].x() == doctest::Approx(5.0 / 3.0).epsilon(1e-9));
  CHECK(std::abs(poses[0].y()) < 1e-12);
  CHECK(std::abs(poses[1].theta()) < 1e-12);
  CHECK(g.node(1).pose.x() == doctest::Approx(5.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("sparse camera fixes beat drifting odometry") {
  const OdometryNoise noise{};
  std::normal_distribution<double> n(0.0, 1.0);
  int better = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Chain c = drifting_chain(seed, 101, noise);
    PoseGraph g = graph_from(c, noise);
    std::vector<PoseSE2> dead;
    for (const auto& node : g.nodes()) dead.push_back(node.pose);
    Rng rng(seed + 1000);
    for (int k = 0; k < g.size(); k += 10) {
      const PoseSE2& t = c.truth[static_cast<std::size_t>(k)];
      g.add_unary(k, PoseSE2(t.x() + 0.01 * n(rng), t.y() + 0.01 * n(rng), t.theta() + deg(0.5) * n(rng)),
                  diag(1e-4, 1e-4, deg(0.5) * deg(0.5)));
    }
    const auto fused = optimize(g);
    if (rmse(fused, c.truth) < rmse(dead, c.truth)) ++better;
  }
  CHECK(better == 200);
}

TEST_CASE("optimum is invariant to scaling all information") {
  const Chain c = drifting_chain(5, 40);
  PoseGraph a = graph_from(c, OdometryNoise{}, 1.0);
  PoseGraph b = graph_from(c, OdometryNoise{}, 1.0 / 7.0);
  for (int k = 0; k < a.size(); k += 8) {
    const PoseSE2 m = c.truth[static_cast<std::size_t>(k)];
    a.add_unary(k, m, diag(1e-4, 1e-4, 1e-4));
    b.add_unary(k, m, diag(1e-4, 1e-4, 1e-4) / 7.0);
  }
  const auto pa = optimize(a), pb = optimize(b);
  for (std::size_t k = 0; k < pa.size(); ++k) {
    CHECK((pa[k].translation() - pb[k].translation()).norm() < 1e-7);
    CHECK(std::abs(angle_diff(pa[k].theta(), pb[k].theta())) < 1e-7);
  }
}

TEST_CASE("accepted iterations never increase the objective") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Chain c = drifting_chain(seed, 60);
    PoseGraph g = graph_from(c, OdometryNoise{});
    g.add_unary(0, c.truth.front(), diag(1e-4, 1e-4, 1e-4));
    g.add_unary(59, PoseSE2(c.truth.back().x() + 0.3, c.truth.back().y() - 0.2, c.truth.back().theta() + 0.3),
                diag(1e-4, 1e-4, 1e-4));
    OptimizeReport report;
    (void)optimize(g, SolverConfig{}, &report);
    CHECK(report.final_objective <= report.initial_objective);
    double prev = report.initial_objective;
    for (double f : report.accepted_objectives) {
      CHECK(f <= prev);
      prev = f;
    }
    CHECK(g.objective() == doctest::Approx(report.final_objective));
  }
}

TEST_CASE("an exact unary does not increase error at its node") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Chain c = drifting_chain(seed, 40);
    PoseGraph g = graph_from(c, OdometryNoise{});
    g.add_unary(0, c.truth.front(), diag(1e-4, 1e-4, 1e-4));
    const int k = 25;
    const auto before = optimize(g);
    const double e0 = (before[k].translation() - c.truth[k].translation()).norm();
    g.add_unary(k, c.truth[k], diag(1e-4, 1e-4, 1e-4));
    const auto after = optimize(g);
    CHECK((after[k].translation() - c.truth[k].translation()).norm() <= e0 + 1e-12);
  }
}

TEST_CASE("edge residual jacobians match finite differences") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const double h = 1e-6;
  for (int trial = 0; trial < 200; ++trial) {
    const PoseSE2 a(u(rng), u(rng), 1.5 * u(rng)), b(u(rng), u(rng), 1.5 * u(rng)), d(u(rng), u(rng), 1.5 * u(rng));
    Mat3 ja, jb, ju;
    (void)odometry_residual(a, b, d, &ja, &jb);
    (void)unary_residual(a, d, &ju);
    Mat3 na, nb, nu;
    for (int k = 0; k < 3; ++k) {
      Vec3 e = Vec3::Zero();
      e[k] = h;
      auto shift = [&](const PoseSE2& p, double s) {
        return PoseSE2(p.x() + s * e.x(), p.y() + s * e.y(), p.theta() + s * e.z());
      };
      auto wrap = [](Vec3 v) {
        v.z() = normalize_angle(v.z());
        return v;
      };
      na.col(k) = wrap(odometry_residual(shift(a, 1), b, d) - odometry_residual(shift(a, -1), b, d)) / (2 * h);
      nb.col(k) = wrap(odometry_residual(a, shift(b, 1), d) - odometry_residual(a, shift(b, -1), d)) / (2 * h);
      nu.col(k) = wrap(unary_residual(shift(a, 1), d) - unary_residual(shift(a, -1), d)) / (2 * h);
    }
    CHECK((ja - na).norm() / std::max(1.0, na.norm()) < 1e-5);
    CHECK((jb - nb).norm() / std::max(1.0, nb.norm()) < 1e-5);
    CHECK((ju - nu).norm() / std::max(1.0, nu.norm()) < 1e-5);
  }
}

TEST_CASE("odometry covariance") {
  const OdometryNoise n{};
  const Mat3 c = odometry_covariance(0.1, 0.05, n);
  CHECK(c(0, 0) == doctest::Approx(0.02 * 0.02 * 0.1 + 1e-6));
  CHECK(c(2, 2) == doctest::Approx(0.005 * 0.005 * 0.1 + 0.025 * 0.025 * 0.05 + 1e-6));
  const Mat3 still = odometry_covariance(0.0, 0.0, OdometryNoise{0, 0, 0, 0, 0, 0});
  CHECK(still.isApprox(Mat3::Identity() * 1e-6));
}

TEST_CASE("pose-correction feedback") {
  RobotLocalizationSim sim(PoseSE2(1, 1, 0));
  sim.integrate(PoseSE2(0.5, 0, 0.1));
  PoseEstimate fused;
  fused.pose = PoseSE2(1.4, 1.1, 0.05);

  SUBCASE("applied while static") {
    CHECK(apply_feedback(sim, fused, true));
    CHECK(sim.internal_pose().x() == fused.pose.x());
    CHECK(sim.internal_pose().y() == fused.pose.y());
    CHECK(sim.internal_pose().theta() == fused.pose.theta());
    CHECK(sim.odometry_pose().x() == doctest::Approx(1.5));
    CHECK(sim.corrections() == 1);
    sim.integrate(PoseSE2(1, 0, 0));
    CHECK(sim.internal_pose().x() == doctest::Approx(1.4 + std::cos(0.05)));
  }
  SUBCASE("refused while moving") {
    CHECK_FALSE(apply_feedback(sim, fused, false));
    CHECK(sim.internal_pose().x() == doctest::Approx(1.5));
    CHECK(sim.corrections() == 0);
  }
}
