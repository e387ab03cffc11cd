#include "doctest.h"

#include <algorithm>
#include <random>

#include "camloc/error.hpp"
#include "camloc/eval.hpp"
#include "support.hpp"

using namespace camloc;
using camloc::test::deg;

namespace {

Trajectory random_walk(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> step(0.0, 0.3);
  std::vector<TrajectorySample> s;
  PoseSE2 p(0, 0, 0);
  for (int k = 0; k < n; ++k) {
    p = PoseSE2(p.x() + step(rng), p.y() + step(rng), p.theta() + step(rng));
    s.push_back({0.2 * k, p});
  }
  return Trajectory(s);
}

Trajectory transformed(const Trajectory& t, const PoseSE2& xf) {
  std::vector<TrajectorySample> s;
  for (const auto& x : t.samples()) s.push_back({x.stamp, xf * x.pose});
  return Trajectory(s);
}

double squared_residual(const Trajectory& est, const Trajectory& ref, const PoseSE2& xf) {
  double s = 0.0;
  for (const auto& [i, j] : match_stamps(est, ref)) {
    s += (xf.transform(est[i].pose.translation()) - ref[j].pose.translation()).squaredNorm();
  }
  return s;
}

}  // namespace

TEST_CASE("trajectory ordering") {
  const Trajectory t({{0.4, PoseSE2(2, 0, 0)}, {0.0, PoseSE2(0, 0, 0)}, {0.2, PoseSE2(1, 0, 0)}});
  CHECK(t[0].stamp == 0.0);
  CHECK(t[2].pose.x() == 2.0);
  CHECK_THROWS_AS(Trajectory({{0.1, PoseSE2{}}, {0.1, PoseSE2{}}}), Error);
  Trajectory u;
  u.push_back({1.0, PoseSE2{}});
  CHECK_THROWS_AS(u.push_back({1.0, PoseSE2{}}), Error);
  CHECK(t.nearest(0.21).value() == 1);
  CHECK_FALSE(t.nearest(0.31).has_value());
}

TEST_CASE("procrustes alignment") {
  const Trajectory est = random_walk(1, 50);
  SUBCASE("identical trajectories") {
    const Alignment a = procrustes_align(est, est);
    CHECK(std::abs(a.transform.x()) < 1e-12);
    CHECK(std::abs(a.transform.y()) < 1e-12);
    CHECK(std::abs(a.transform.theta()) < 1e-12);
    CHECK(translation_rmse(a.aligned, est) < 1e-12);
  }
  SUBCASE("known rigid transform") {
    const PoseSE2 xf(1, 2, deg(30));
    const Alignment a = procrustes_align(est, transformed(est, xf));
    CHECK(a.transform.x() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(a.transform.y() == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(std::abs(angle_diff(a.transform.theta(), deg(30))) < 1e-9);
  }
  SUBCASE("beats random transforms") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Trajectory e = random_walk(seed + 10, 30), r = random_walk(seed + 20, 30);
      const Alignment a = procrustes_align(e, r);
      const double best = squared_residual(e, r, a.transform);
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> u(-5.0, 5.0), ang(-std::numbers::pi, std::numbers::pi);
      for (int k = 0; k < 10000; ++k) {
        CHECK(best <= squared_residual(e, r, PoseSE2(u(rng), u(rng), ang(rng))) + 1e-12);
      }
    }
  }
  SUBCASE("residual is invariant to rigid pre-transformation") {
    const Trajectory r = random_walk(4, 40);
    const double base = translation_rmse(procrustes_align(est, r).aligned, r);
    const double moved = translation_rmse(procrustes_align(transformed(est, PoseSE2(-3, 7, 2.0)), r).aligned, r);
    CHECK(moved == doctest::Approx(base).epsilon(1e-9));
    CHECK(base <= translation_rmse(est, r) + 1e-12);
  }
  SUBCASE("insufficient overlap") {
    const Trajectory one({{0.0, PoseSE2{}}});
    try {
      (void)procrustes_align(one, one);
      FAIL("expected InsufficientOverlap");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InsufficientOverlap);
    }
    const Trajectory late({{50.0, PoseSE2{}}, {51.0, PoseSE2{}}});
    CHECK_THROWS_AS(procrustes_align(late, est), Error);
  }
}

TEST_CASE("stamp matching tolerance") {
  const Trajectory ref({{0.0, PoseSE2{}}, {1.0, PoseSE2{}}});
  const Trajectory est({{0.04, PoseSE2{}}, {0.5, PoseSE2{}}, {1.06, PoseSE2{}}});
  const auto m = match_stamps(est, ref);
  REQUIRE(m.size() == 1);
  CHECK(m[0].first == 0);
  CHECK(m[0].second == 0);
}

TEST_CASE("translation rmse") {
  const Trajectory ref({{0.0, PoseSE2(0, 0, 0)}, {1.0, PoseSE2(1, 0, 0)}});
  CHECK(translation_rmse(ref, ref) == 0.0);
  const Trajectory est({{0.0, PoseSE2(0.03, 0, 0)}, {1.0, PoseSE2(1, 0.04, 0)}});
  CHECK(translation_rmse(est, ref) == doctest::Approx(std::sqrt((0.0009 + 0.0016) / 2.0)));
  CHECK(translation_rmse(est, ref) == doctest::Approx(0.0354).epsilon(1e-3));
  const Trajectory shuffled({{1.0, PoseSE2(1, 0.04, 0)}, {0.0, PoseSE2(0.03, 0, 0)}});
  CHECK(translation_rmse(shuffled, ref) == translation_rmse(est, ref));
  CHECK_THROWS_AS(translation_rmse(Trajectory{}, ref), Error);
}

TEST_CASE("error over distance") {
  std::vector<TrajectorySample> ref, est;
  for (int k = 0; k <= 50; ++k) {
    const double x = 0.1 * k;
    ref.push_back({0.25 * k, PoseSE2(x, 0, 0)});
    est.push_back({0.25 * k, PoseSE2(x, 0.19 * x / 5.0, 0)});
  }
  const auto series = error_over_distance(Trajectory(est), Trajectory(ref));
  REQUIRE(series.size() == 51);
  CHECK(series.back().distance == doctest::Approx(5.0));
  CHECK(series.back().error == doctest::Approx(0.19));
  CHECK(series.front().distance == 0.0);

  std::vector<TrajectorySample> still;
  for (int k = 0; k < 5; ++k) still.push_back({1.0 * k, PoseSE2(2, 3, 0.4)});
  for (const auto& d : error_over_distance(Trajectory(still), Trajectory(still))) CHECK(d.distance == 0.0);
}

TEST_CASE("mode names") {
  for (Mode m : kAllModes) CHECK(parse_mode(to_string(m)) == m);
  CHECK(std::string(to_string(Mode::Gated1Frame)) == "gated_1frame");
  CHECK_THROWS_AS(parse_mode("lidar"), Error);
}

TEST_CASE("waypoint statistics") {
  std::vector<TrajectorySample> ref;
  for (int k = 0; k < 40; ++k) ref.push_back({0.2 * k, PoseSE2(0.1 * k, 1.0, 0.2)});
  const Trajectory reference(ref);
  const std::vector<WaypointWindow> windows = {{1, 0.0, 1.0}, {2, 2.0, 3.0}, {3, 5.0, 6.0}, {2, 7.0, 7.8}};
  const std::map<int, int> vis = {{1, 2}, {2, 2}, {3, 4}};

  SUBCASE("perfect estimates") {
    const auto rows = waypoint_errors({{Mode::Fused, reference}, {Mode::Raw, reference}}, reference, windows, vis);
    REQUIRE(rows.size() == 6);
    for (const auto& r : rows) {
      CHECK(r.trans_mean == 0.0);
      CHECK(r.trans_std == 0.0);
      CHECK(r.rot_mean == 0.0);
      CHECK(r.rot_std == 0.0);
    }
    CHECK(rows.front().n_cameras == 2);
    CHECK(rows.back().n_cameras == 4);
  }
  SUBCASE("constant 2 cm offset at two-camera waypoints") {
    std::vector<TrajectorySample> est;
    for (const auto& s : ref) {
      const bool two_cam = (s.stamp <= 1.0 + 1e-9) || (s.stamp >= 2.0 - 1e-9 && s.stamp <= 3.0 + 1e-9) ||
                           (s.stamp >= 7.0 - 1e-9);
      est.push_back({s.stamp, PoseSE2(s.pose.x() + (two_cam ? 0.02 : 0.0), s.pose.y(), s.pose.theta())});
    }
    const auto rows = waypoint_errors({{Mode::Fused, Trajectory(est)}}, reference, windows, vis);
    for (const auto& g : group_by_cameras(rows)) {
      if (g.n_cameras == 2) {
        CHECK(g.trans_mean == doctest::Approx(0.02));
        CHECK(g.trans_std == doctest::Approx(0.0).epsilon(1e-12));
      } else {
        CHECK(g.trans_mean == doctest::Approx(0.0).epsilon(1e-12));
      }
    }
    const auto wp2 = std::find_if(rows.begin(), rows.end(), [](const auto& r) { return r.waypoint_id == 2; });
    REQUIRE(wp2 != rows.end());
    CHECK(wp2->samples == 6 + 5);
  }
  SUBCASE("orientation error wraps") {
    std::vector<TrajectorySample> est;
    for (const auto& s : ref) est.push_back({s.stamp, PoseSE2(s.pose.x(), s.pose.y(), s.pose.theta() + 2 * std::numbers::pi - 0.01)});
    for (const auto& r : waypoint_errors({{Mode::Robot, Trajectory(est)}}, reference, windows, vis)) {
      CHECK(r.rot_mean == doctest::Approx(0.01));
    }
  }
  SUBCASE("empty window") {
    try {
      (void)waypoint_errors({{Mode::Fused, reference}}, reference, {{9, 100.0, 101.0}}, vis);
      FAIL("expected EmptyWindow");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyWindow);
    }
  }
  SUBCASE("deterministic") {
    const std::map<Mode, Trajectory> m = {{Mode::Fused, random_walk(3, 40)}, {Mode::Robot, random_walk(4, 40)}};
    const auto a = waypoint_errors(m, reference, windows, vis), b = waypoint_errors(m, reference, windows, vis);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].trans_mean == b[i].trans_mean);
      CHECK(a[i].rot_std == b[i].rot_std);
    }
  }
}
