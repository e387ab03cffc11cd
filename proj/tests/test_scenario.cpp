#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "camloc/cli.hpp"
#include "camloc/error.hpp"
#include "camloc/scenario.hpp"
#include "support.hpp"

using namespace camloc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("camloc_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void dump(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

fs::path write_bundled(const fs::path& dir, const std::string& name, const std::function<void(Json&)>& edit = {}) {
  Json doc = scenario_to_json(bundled_scenario(name));
  if (edit) edit(doc);
  const fs::path p = dir / (name + ".json");
  dump(p, doc.dump(2));
  return p;
}

Json meta(const fs::path& dir) { return Json::parse(slurp(dir / "run_meta.json")); }

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("bundled scenarios") {
  const auto names = bundled_scenario_names();
  REQUIRE(names == std::vector<std::string>{"traj1", "traj2", "traj3", "long_feedback"});
  for (const auto& n : names) {
    CAPTURE(n);
    const ScenarioConfig c = bundled_scenario(n);
    CHECK_NOTHROW(c.validate());
    const Json doc = scenario_to_json(c);
    CHECK(scenario_to_json(scenario_from_json(doc)) == doc);
  }
  SUBCASE("waypoint visibility groups") {
    const auto cams = default_cameras();
    const RobotModel model = default_robot_model();
    std::map<int, int> seen;
    for (const auto& w : bundled_waypoints()) seen[w.id] = test::cameras_seeing(cams, model, w.pose);
    CHECK(seen.size() == 7);
    CHECK(seen[1] == 1);
    CHECK(seen[6] == 1);
    int two = 0, four = 0;
    for (const auto& [id, n] : seen) {
      if (n == 2) ++two;
      if (n == 4) ++four;
    }
    CHECK(two >= 1);
    CHECK(four >= 1);
  }
  SUBCASE("trajectory three skips the single-camera waypoints") {
    for (const auto& w : bundled_scenario("traj3").trajectory.waypoints) {
      CHECK(w.id != 1);
      CHECK(w.id != 6);
    }
    std::set<int> ids;
    for (const auto& w : bundled_scenario("traj1").trajectory.waypoints) ids.insert(w.id);
    CHECK(ids.size() == 7);
  }
  SUBCASE("long trajectory repeats trajectory three") {
    const ScenarioConfig c = bundled_scenario("long_feedback");
    CHECK(c.feedback);
    double length = 0.0;
    const auto& w = c.trajectory.waypoints;
    for (std::size_t i = 1; i < w.size(); ++i) length += (w[i].pose.translation() - w[i - 1].pose.translation()).norm();
    MESSAGE("long_feedback path length " << length << " m");
    CHECK(length > 25.0);
  }
}

TEST_CASE("strict schema") {
  Json doc = scenario_to_json(bundled_scenario("traj3"));
  SUBCASE("unknown key names its path") {
    doc["noise"]["pixel_sigma"] = 2.0;
    try {
      (void)scenario_from_json(doc);
      FAIL("expected ConfigError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigError);
      CHECK(std::string(e.what()).find("noise.pixel_sigma") != std::string::npos);
    }
  }
  SUBCASE("no cameras") {
    doc["cameras"] = Json::array();
    CHECK(code_of([&] { (void)scenario_from_json(doc); }) == ErrorCode::ConfigError);
  }
  SUBCASE("wrong type") {
    doc["seed"] = "many";
    CHECK(code_of([&] { (void)scenario_from_json(doc); }) == ErrorCode::ConfigError);
  }
  SUBCASE("empty modes") {
    doc["modes"] = Json::array();
    CHECK(code_of([&] { (void)scenario_from_json(doc); }) == ErrorCode::ConfigError);
  }
  SUBCASE("non-zero distortion") {
    doc["cameras"][0]["distortion"] = Json::array({0.1, 0, 0, 0, 0});
    CHECK(code_of([&] { (void)scenario_from_json(doc); }) == ErrorCode::ConfigError);
  }
}

TEST_CASE("overrides") {
  Json doc = scenario_to_json(bundled_scenario("traj3"));
  apply_override(doc, "noise.pixel_sigma=0");
  CHECK(doc["noise"]["pixel_sigma_px"] == 0);
  apply_override(doc, "cameras.1.yaw_rad=0.5");
  CHECK(doc["cameras"][1]["yaw_rad"] == 0.5);
  apply_override(doc, "name=sweep");
  CHECK(doc["name"] == "sweep");
  apply_override(doc, "modes=[\"robot\",\"fused\"]");
  CHECK(scenario_from_json(doc).modes.size() == 2);
  Json extra = doc;
  apply_override(extra, "noise.no_such_field=1");
  CHECK(code_of([&] { (void)scenario_from_json(extra); }) == ErrorCode::ConfigError);
  CHECK(code_of([&] { apply_override(doc, "no_section.field=1"); }) == ErrorCode::ConfigError);
  CHECK(code_of([&] { apply_override(doc, "cameras.9.yaw_rad=1"); }) == ErrorCode::ConfigError);
  CHECK(code_of([&] { apply_override(doc, "missing_equals"); }) == ErrorCode::ConfigError);
}

TEST_CASE("config hash") {
  const Json a = scenario_to_json(bundled_scenario("traj1"));
  Json b = a;
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  b["seed"] = 43;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("run command") {
  const fs::path dir = scratch("run");
  std::ostringstream err;

  SUBCASE("zero cameras exits 2") {
    const fs::path p = write_bundled(dir, "traj3", [](Json& d) { d["cameras"] = Json::array(); });
    CHECK(run_command(p.string(), dir / "out", std::nullopt, {}, err) == 2);
    CHECK_FALSE(err.str().empty());
  }
  SUBCASE("missing file exits 2") {
    CHECK(run_command((dir / "nope.json").string(), dir / "out", std::nullopt, {}, err) == 2);
  }
  SUBCASE("bad override exits 2") {
    const fs::path p = write_bundled(dir, "traj3");
    CHECK(run_command(p.string(), dir / "out", std::nullopt, {"solver.bogus=1"}, err) == 2);
  }
  SUBCASE("noiseless detections give a near-exact fused trajectory") {
    const fs::path p = write_bundled(dir, "traj3");
    REQUIRE(run_command(p.string(), dir / "out", std::nullopt, {"noise.pixel_sigma=0"}, err) == 0);
    const Json m = meta(dir / "out");
    const double fused = m["rmse_unaligned_m"]["fused"].get<double>();
    MESSAGE("noiseless fused RMSE " << fused);
    CHECK(fused < 1e-4);
    CHECK(m["config"]["noise"]["pixel_sigma_px"] == 0);
  }
  SUBCASE("outputs and metadata") {
    const fs::path p = write_bundled(dir, "traj3");
    REQUIRE(run_command(p.string(), dir / "out", 7, {}, err) == 0);
    for (const char* f : {"waypoint_stats.csv", "trajectory_error.csv", "run_meta.json", "detections.jsonl"}) {
      CHECK(fs::exists(dir / "out" / f));
    }
    const std::string csv = slurp(dir / "out" / "waypoint_stats.csv");
    CHECK(csv.rfind("waypoint_id,n_cameras,mode,trans_mean_m,trans_std_m,rot_mean_rad,rot_std_rad", 0) == 0);
    CHECK(slurp(dir / "out" / "trajectory_error.csv").rfind("stamp_ns,distance_m,error_m,mode", 0) == 0);
    const Json m = meta(dir / "out");
    CHECK(m["seed"] == 7);
    CHECK(m["config"]["seed"] == 7);
    CHECK(m["config_hash"] == config_hash(m["config"]));
    for (const char* c : {"stale_messages", "gated_estimates", "solver_iterations"}) CHECK(m["counters"].contains(c));
    CHECK(m["counters"]["solver_iterations"].get<int>() > 0);
  }
  fs::remove_all(dir);
}

TEST_CASE("determinism and replay") {
  const fs::path dir = scratch("replay");
  std::ostringstream err;
  const fs::path p = write_bundled(dir, "traj3");
  REQUIRE(run_command(p.string(), dir / "a", std::nullopt, {}, err) == 0);
  REQUIRE(run_command(p.string(), dir / "b", std::nullopt, {}, err) == 0);
  for (const char* f : {"waypoint_stats.csv", "trajectory_error.csv", "run_meta.json", "detections.jsonl"}) {
    CAPTURE(f);
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }

  SUBCASE("replaying the recorded stream reproduces the run") {
    REQUIRE(replay_command((dir / "a" / "detections.jsonl").string(), p.string(), dir / "r", err) == 0);
    CHECK(slurp(dir / "a" / "waypoint_stats.csv") == slurp(dir / "r" / "waypoint_stats.csv"));
    CHECK(slurp(dir / "a" / "trajectory_error.csv") == slurp(dir / "r" / "trajectory_error.csv"));
  }
  SUBCASE("truncated final line") {
    std::string stream = slurp(dir / "a" / "detections.jsonl");
    stream.resize(stream.size() - 20);
    const auto lines = std::count(stream.begin(), stream.end(), '\n') + 1;
    dump(dir / "cut.jsonl", stream);
    std::ostringstream e2;
    CHECK(replay_command((dir / "cut.jsonl").string(), p.string(), dir / "r", e2) == 2);
    CHECK(e2.str().find("line " + std::to_string(lines)) != std::string::npos);
  }
  SUBCASE("empty stream") {
    dump(dir / "empty.jsonl", "");
    std::ostringstream e2;
    CHECK(replay_command((dir / "empty.jsonl").string(), p.string(), dir / "r", e2) == 0);
    CHECK_FALSE(e2.str().empty());
    CHECK(meta(dir / "r")["counters"]["empty_stream"] == 1);
    CHECK(fs::exists(dir / "r" / "waypoint_stats.csv"));
  }
  fs::remove_all(dir);
}

TEST_CASE("gen command") {
  const fs::path dir = scratch("gen");
  std::ostringstream err;
  REQUIRE(generate_command(dir, err) == 0);
  for (const auto& n : bundled_scenario_names()) {
    const fs::path p = dir / (n + ".json");
    REQUIRE(fs::exists(p));
    const ScenarioConfig c = load_scenario(p.string());
    CHECK(scenario_to_json(c) == scenario_to_json(bundled_scenario(n)));
  }
  fs::remove_all(dir);
}
