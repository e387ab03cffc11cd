#include "camloc/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "camloc/error.hpp"

namespace camloc {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::ConfigError, (path.empty() ? std::string("<root>") : path) + ": " + what);
}

class Reader {
 public:
  Reader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(path_, "expected an object");
  }

  const Json* get(const std::string& key) {
    used_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  const Json& require(const std::string& key) {
    const Json* v = get(key);
    if (v == nullptr) fail(sub(key), "missing required key");
    return *v;
  }

  double number(const std::string& key, double fallback) {
    const Json* v = get(key);
    return v == nullptr ? fallback : as_number(*v, sub(key));
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) {
    const Json* v = get(key);
    return v == nullptr ? fallback : as_integer(*v, sub(key));
  }

  bool boolean(const std::string& key, bool fallback) {
    const Json* v = get(key);
    if (v == nullptr) return fallback;
    if (!v->is_boolean()) fail(sub(key), "expected true or false");
    return v->get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    const Json* v = get(key);
    if (v == nullptr) return fallback;
    if (!v->is_string()) fail(sub(key), "expected a string");
    return v->get<std::string>();
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!used_.contains(it.key())) fail(sub(it.key()), "unknown key");
    }
  }

  [[nodiscard]] std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  static double as_number(const Json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(path, "expected a finite number");
    return d;
  }

  static std::int64_t as_integer(const Json& v, const std::string& path) {
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9e15) return static_cast<std::int64_t>(d);
    }
    fail(path, "expected an integer");
  }

 private:
  const Json& obj_;
  std::string path_;
  std::set<std::string> used_;
};

Vec3 read_vec3(const Json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 3) fail(path, "expected an array of 3 numbers");
  return {Reader::as_number(v[0], path + "[0]"), Reader::as_number(v[1], path + "[1]"),
          Reader::as_number(v[2], path + "[2]")};
}

Json vec3_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

CameraSpec read_camera(const Json& j, const std::string& path) {
  Reader r(j, path);
  CameraSpec c;
  c.id = static_cast<int>(r.integer("id", 0));
  if (r.get("id") == nullptr) fail(r.sub("id"), "missing required key");
  c.fx = r.number("fx_px", c.fx);
  c.fy = r.number("fy_px", c.fy);
  c.cx = r.number("cx_px", c.cx);
  c.cy = r.number("cy_px", c.cy);
  c.width = static_cast<int>(r.integer("width_px", c.width));
  c.height = static_cast<int>(r.integer("height_px", c.height));
  if (const Json* d = r.get("distortion"); d != nullptr && !d->is_null()) {
    if (!d->is_array()) fail(r.sub("distortion"), "expected null or an array");
    for (std::size_t k = 0; k < d->size(); ++k) {
      if (Reader::as_number((*d)[k], r.sub("distortion")) != 0.0) {
        fail(r.sub("distortion"), "lens distortion is not supported; use null or zeros");
      }
    }
  }
  if (const Json* e = r.get("world_to_camera"); e != nullptr) {
    if (r.get("position_m") != nullptr || r.get("yaw_rad") != nullptr || r.get("pitch_rad") != nullptr) {
      fail(path, "give either world_to_camera or position_m/yaw_rad/pitch_rad, not both");
    }
    Reader er(*e, r.sub("world_to_camera"));
    const Json& rot = er.require("rotation");
    if (!rot.is_array() || rot.size() != 3) fail(er.sub("rotation"), "expected 3 rows");
    c.mounted = false;
    for (int i = 0; i < 3; ++i) {
      c.rotation.row(i) = read_vec3(rot[static_cast<std::size_t>(i)], er.sub("rotation") + "[" + std::to_string(i) + "]");
    }
    c.translation = read_vec3(er.require("translation_m"), er.sub("translation_m"));
    er.finish();
  } else {
    c.mounted = true;
    c.position = read_vec3(r.require("position_m"), r.sub("position_m"));
    c.yaw = r.number("yaw_rad", 0.0);
    c.pitch = r.number("pitch_rad", 0.0);
  }
  r.finish();
  return c;
}

Json camera_json(const CameraSpec& c) {
  Json j;
  j["id"] = c.id;
  j["fx_px"] = c.fx;
  j["fy_px"] = c.fy;
  j["cx_px"] = c.cx;
  j["cy_px"] = c.cy;
  j["width_px"] = c.width;
  j["height_px"] = c.height;
  if (c.mounted) {
    j["position_m"] = vec3_json(c.position);
    j["yaw_rad"] = c.yaw;
    j["pitch_rad"] = c.pitch;
  } else {
    Json rows = Json::array();
    for (int i = 0; i < 3; ++i) rows.push_back(vec3_json(c.rotation.row(i).transpose()));
    j["world_to_camera"] = {{"rotation", rows}, {"translation_m", vec3_json(c.translation)}};
  }
  j["distortion"] = nullptr;
  return j;
}

// Resolves one path segment inside an object, allowing a unit suffix.
std::string resolve_key(const Json& obj, const std::string& segment, const std::string& path) {
  if (obj.contains(segment)) return segment;
  std::string found;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (it.key().size() > segment.size() && it.key().compare(0, segment.size(), segment) == 0 &&
        it.key()[segment.size()] == '_') {
      if (!found.empty()) fail(path, "ambiguous key '" + segment + "'");
      found = it.key();
    }
  }
  return found;
}

}  // namespace

CameraModel CameraSpec::build() const {
  if (mounted) return CameraModel::mounted(id, fx, fy, cx, cy, width, height, position, yaw, pitch);
  return {id, fx, fy, cx, cy, width, height, RigidTransform3(rotation, translation)};
}

void ScenarioConfig::validate() const {
  if (cameras.empty()) fail("cameras", "at least one camera is required");
  std::set<int> ids;
  for (const auto& c : cameras) {
    if (!ids.insert(c.id).second) fail("cameras", "duplicate camera id " + std::to_string(c.id));
    try {
      (void)c.build();
    } catch (const Error& e) {
      fail("cameras", e.what());
    }
  }
  try {
    (void)build_robot();
  } catch (const Error& e) {
    fail("robot_model", e.what());
  }
  trajectory.validate();
  for (const auto& w : trajectory.waypoints) {
    if (w.id < 0) fail("trajectory.waypoints", "waypoint ids must be >= 0");
  }
  noise.validate();
  odometry_noise.validate();
  sync.validate();
  solver.validate();
  gate.validate();
  if (!(covariance.k_t > 0.0) || !(covariance.k_theta > 0.0) || !(covariance.r_min > 0.0)) {
    fail("covariance", "coefficients must be positive");
  }
  if (!(fusion.node_min_translation >= 0.0) || !(fusion.node_min_rotation >= 0.0) ||
      !(fusion.odometry_sigma_floor > 0.0) || !(fusion.unary_stamp_tolerance > 0.0)) {
    fail("fusion", "thresholds must be non-negative and the sigma floor positive");
  }
  if (modes.empty()) fail("modes", "at least one mode is required");
  if (feedback && !has_mode(Mode::Fused)) fail("feedback", "feedback needs the fused mode");
}

std::vector<CameraModel> ScenarioConfig::build_cameras() const {
  std::vector<CameraModel> out;
  out.reserve(cameras.size());
  for (const auto& c : cameras) out.push_back(c.build());
  return out;
}

RobotModel ScenarioConfig::build_robot() const {
  if (!robot_keypoints) return default_robot_model();
  return {*robot_keypoints, robot_body_width};
}

bool ScenarioConfig::has_mode(Mode m) const {
  for (Mode x : modes) {
    if (x == m) return true;
  }
  return false;
}

ScenarioConfig scenario_from_json(const Json& doc) {
  Reader root(doc, "");
  ScenarioConfig cfg;
  cfg.name = root.string("name", cfg.name);
  if (const Json* s = root.get("seed"); s != nullptr) {
    if (s->is_number_unsigned()) {
      cfg.seed = s->get<std::uint64_t>();
    } else {
      const std::int64_t v = Reader::as_integer(*s, "seed");
      if (v < 0) fail("seed", "expected a non-negative integer");
      cfg.seed = static_cast<std::uint64_t>(v);
    }
  }
  if (const Json* m = root.get("modes"); m != nullptr) {
    if (!m->is_array()) fail("modes", "expected an array of mode names");
    cfg.modes.clear();
    for (const auto& v : *m) {
      if (!v.is_string()) fail("modes", "expected mode names");
      const Mode mode = parse_mode(v.get<std::string>());
      if (cfg.has_mode(mode)) fail("modes", "duplicate mode " + v.get<std::string>());
      cfg.modes.push_back(mode);
    }
  }
  cfg.feedback = root.boolean("feedback", cfg.feedback);

  const Json& cams = root.require("cameras");
  if (!cams.is_array()) fail("cameras", "expected an array");
  for (std::size_t i = 0; i < cams.size(); ++i) {
    cfg.cameras.push_back(read_camera(cams[i], "cameras[" + std::to_string(i) + "]"));
  }

  if (const Json* rm = root.get("robot_model"); rm != nullptr) {
    if (rm->is_string()) {
      if (rm->get<std::string>() != "default") fail("robot_model", "expected \"default\" or an object");
    } else {
      Reader r(*rm, "robot_model");
      const Json& kps = r.require("keypoints_m");
      if (!kps.is_array()) fail("robot_model.keypoints_m", "expected an array");
      std::vector<Vec3> pts;
      for (std::size_t i = 0; i < kps.size(); ++i) {
        pts.push_back(read_vec3(kps[i], "robot_model.keypoints_m[" + std::to_string(i) + "]"));
      }
      cfg.robot_keypoints = std::move(pts);
      cfg.robot_body_width = r.number("body_width_m", cfg.robot_body_width);
      r.finish();
    }
  }

  {
    Reader r(root.require("trajectory"), "trajectory");
    auto& t = cfg.trajectory;
    t.speed = r.number("speed_mps", t.speed);
    t.turn_rate = r.number("turn_rate_radps", t.turn_rate);
    t.sample_dt = r.number("sample_dt_s", t.sample_dt);
    const Json& wps = r.require("waypoints");
    if (!wps.is_array()) fail("trajectory.waypoints", "expected an array");
    for (std::size_t i = 0; i < wps.size(); ++i) {
      Reader w(wps[i], "trajectory.waypoints[" + std::to_string(i) + "]");
      Waypoint wp;
      wp.id = static_cast<int>(w.integer("id", static_cast<std::int64_t>(i) + 1));
      const double x = Reader::as_number(w.require("x_m"), w.sub("x_m"));
      const double y = Reader::as_number(w.require("y_m"), w.sub("y_m"));
      wp.pose = PoseSE2(x, y, w.number("theta_rad", 0.0));
      wp.dwell = w.number("dwell_s", 0.0);
      w.finish();
      t.waypoints.push_back(wp);
    }
    r.finish();
  }

  if (const Json* j = root.get("noise"); j != nullptr) {
    Reader r(*j, "noise");
    auto& n = cfg.noise;
    n.pixel_sigma = r.number("pixel_sigma_px", n.pixel_sigma);
    n.dropout_prob = r.number("dropout_prob", n.dropout_prob);
    n.outlier_prob = r.number("outlier_prob", n.outlier_prob);
    n.outlier_spread = r.number("outlier_spread_px", n.outlier_spread);
    n.confidence_floor = r.number("confidence_floor", n.confidence_floor);
    n.timestamp_jitter = r.number("timestamp_jitter_s", n.timestamp_jitter);
    r.finish();
  }
  if (const Json* j = root.get("odometry_noise"); j != nullptr) {
    Reader r(*j, "odometry_noise");
    auto& o = cfg.odometry_noise;
    o.trans_sigma_per_meter = r.number("trans_sigma_m_per_sqrt_m", o.trans_sigma_per_meter);
    o.rot_sigma_per_meter = r.number("rot_sigma_rad_per_sqrt_m", o.rot_sigma_per_meter);
    o.rot_sigma_per_rad = r.number("rot_sigma_rad_per_sqrt_rad", o.rot_sigma_per_rad);
    o.bias_trans = r.number("bias_trans_m_per_m", o.bias_trans);
    o.bias_rot = r.number("bias_rot_rad_per_m", o.bias_rot);
    o.bias_rot_scale = r.number("bias_rot_rad_per_rad", o.bias_rot_scale);
    r.finish();
  }
  if (const Json* j = root.get("sync"); j != nullptr) {
    Reader r(*j, "sync");
    cfg.sync.window = r.number("window_s", cfg.sync.window);
    cfg.sync.max_open_sets = static_cast<int>(r.integer("max_open_sets", cfg.sync.max_open_sets));
    r.finish();
  }
  if (const Json* j = root.get("solver"); j != nullptr) {
    Reader r(*j, "solver");
    auto& s = cfg.solver;
    s.max_iterations = static_cast<int>(r.integer("max_iterations", s.max_iterations));
    s.convergence_tol = r.number("convergence_tol", s.convergence_tol);
    s.lm_lambda_init = r.number("lm_lambda_init", s.lm_lambda_init);
    s.lm_lambda_scale = r.number("lm_lambda_scale", s.lm_lambda_scale);
    if (const Json* h = r.get("huber_delta_px"); h != nullptr) {
      s.huber_delta = h->is_null() ? std::numeric_limits<double>::infinity()
                                   : Reader::as_number(*h, "solver.huber_delta_px");
    }
    r.finish();
  }
  if (const Json* j = root.get("gate"); j != nullptr) {
    Reader r(*j, "gate");
    cfg.gate.d_theta = r.number("d_theta_rad", cfg.gate.d_theta);
    cfg.gate.d_depth = r.number("d_depth_m", cfg.gate.d_depth);
    r.finish();
  }
  if (const Json* j = root.get("covariance"); j != nullptr) {
    Reader r(*j, "covariance");
    cfg.covariance.k_t = r.number("k_t_m_per_px", cfg.covariance.k_t);
    cfg.covariance.k_theta = r.number("k_theta_rad_per_px", cfg.covariance.k_theta);
    cfg.covariance.r_min = r.number("r_min_px", cfg.covariance.r_min);
    r.finish();
  }
  if (const Json* j = root.get("fusion"); j != nullptr) {
    Reader r(*j, "fusion");
    auto& f = cfg.fusion;
    f.node_min_translation = r.number("node_min_translation_m", f.node_min_translation);
    f.node_min_rotation = r.number("node_min_rotation_rad", f.node_min_rotation);
    f.odometry_sigma_floor = r.number("odometry_sigma_floor", f.odometry_sigma_floor);
    f.unary_stamp_tolerance = r.number("unary_stamp_tolerance_s", f.unary_stamp_tolerance);
    const std::string policy = r.string("unary_policy", f.unary_static_only ? "static" : "all");
    if (policy != "all" && policy != "static") fail("fusion.unary_policy", "expected \"all\" or \"static\"");
    f.unary_static_only = policy == "static";
    if (r.integer("sliding_window_nodes", 0) != 0) {
      fail("fusion.sliding_window_nodes", "only full-graph optimization (0) is implemented");
    }
    r.finish();
  }
  root.finish();
  cfg.validate();
  return cfg;
}

Json scenario_to_json(const ScenarioConfig& c) {
  Json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  Json modes = Json::array();
  for (Mode m : c.modes) modes.push_back(to_string(m));
  j["modes"] = modes;
  j["feedback"] = c.feedback;
  Json cams = Json::array();
  for (const auto& cam : c.cameras) cams.push_back(camera_json(cam));
  j["cameras"] = cams;
  if (c.robot_keypoints) {
    Json kps = Json::array();
    for (const auto& p : *c.robot_keypoints) kps.push_back(vec3_json(p));
    j["robot_model"] = {{"keypoints_m", kps}, {"body_width_m", c.robot_body_width}};
  } else {
    j["robot_model"] = "default";
  }
  Json wps = Json::array();
  for (const auto& w : c.trajectory.waypoints) {
    wps.push_back({{"id", w.id}, {"x_m", w.pose.x()}, {"y_m", w.pose.y()}, {"theta_rad", w.pose.theta()},
                   {"dwell_s", w.dwell}});
  }
  j["trajectory"] = {{"speed_mps", c.trajectory.speed},
                     {"turn_rate_radps", c.trajectory.turn_rate},
                     {"sample_dt_s", c.trajectory.sample_dt},
                     {"waypoints", wps}};
  j["noise"] = {{"pixel_sigma_px", c.noise.pixel_sigma},
                {"dropout_prob", c.noise.dropout_prob},
                {"outlier_prob", c.noise.outlier_prob},
                {"outlier_spread_px", c.noise.outlier_spread},
                {"confidence_floor", c.noise.confidence_floor},
                {"timestamp_jitter_s", c.noise.timestamp_jitter}};
  j["odometry_noise"] = {{"trans_sigma_m_per_sqrt_m", c.odometry_noise.trans_sigma_per_meter},
                         {"rot_sigma_rad_per_sqrt_m", c.odometry_noise.rot_sigma_per_meter},
                         {"rot_sigma_rad_per_sqrt_rad", c.odometry_noise.rot_sigma_per_rad},
                         {"bias_trans_m_per_m", c.odometry_noise.bias_trans},
                         {"bias_rot_rad_per_m", c.odometry_noise.bias_rot},
                         {"bias_rot_rad_per_rad", c.odometry_noise.bias_rot_scale}};
  j["sync"] = {{"window_s", c.sync.window}, {"max_open_sets", c.sync.max_open_sets}};
  Json huber = std::isfinite(c.solver.huber_delta) ? Json(c.solver.huber_delta) : Json(nullptr);
  j["solver"] = {{"max_iterations", c.solver.max_iterations},
                 {"convergence_tol", c.solver.convergence_tol},
                 {"lm_lambda_init", c.solver.lm_lambda_init},
                 {"lm_lambda_scale", c.solver.lm_lambda_scale},
                 {"huber_delta_px", huber}};
  j["gate"] = {{"d_theta_rad", c.gate.d_theta}, {"d_depth_m", c.gate.d_depth}};
  j["covariance"] = {{"k_t_m_per_px", c.covariance.k_t},
                     {"k_theta_rad_per_px", c.covariance.k_theta},
                     {"r_min_px", c.covariance.r_min}};
  j["fusion"] = {{"node_min_translation_m", c.fusion.node_min_translation},
                 {"node_min_rotation_rad", c.fusion.node_min_rotation},
                 {"odometry_sigma_floor", c.fusion.odometry_sigma_floor},
                 {"unary_stamp_tolerance_s", c.fusion.unary_stamp_tolerance},
                 {"unary_policy", c.fusion.unary_static_only ? "static" : "all"},
                 {"sliding_window_nodes", 0}};
  return j;
}

void apply_override(Json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw Error(ErrorCode::ConfigError, "override '" + std::string(assignment) + "' is not key=value");
  }
  const std::string path(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::parse_error&) {
    value = text;
  }

  Json* node = &doc;
  std::string walked;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string seg = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    walked += (walked.empty() ? "" : ".") + seg;
    const bool last = dot == std::string::npos;
    if (seg.empty()) fail(path, "empty path segment");
    Json* next = nullptr;
    if (node->is_array()) {
      if (seg.find_first_not_of("0123456789") != std::string::npos) fail(walked, "expected an array index");
      const std::size_t idx = std::stoul(seg);
      if (idx >= node->size()) fail(walked, "index out of range");
      next = &(*node)[idx];
    } else if (node->is_object()) {
      std::string key = resolve_key(*node, seg, walked);
      if (key.empty()) {
        if (!last) fail(walked, "no such key");
        key = seg;  // new leaf; the strict parser decides whether it is valid
      }
      next = &(*node)[key];
    } else {
      fail(walked, "cannot descend into a scalar");
    }
    if (last) {
      *next = value;
      return;
    }
    node = next;
    start = dot + 1;
  }
}

ScenarioConfig load_scenario(const std::string& path, const std::vector<std::string>& overrides,
                             std::optional<std::uint64_t> seed) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open scenario '" + path + "'");
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, "scenario '" + path + "' is not valid JSON: " + e.what());
  }
  for (const auto& o : overrides) apply_override(doc, o);
  if (seed) doc["seed"] = *seed;
  return scenario_from_json(doc);
}

std::string config_hash(const Json& doc) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : doc.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<Waypoint> bundled_waypoints() {
  const double pi = std::numbers::pi;
  return {{1, {1.2, 4.4, 0.0}, 3.0},      {2, {2.0, 2.0, 0.5 * pi}, 3.0}, {3, {4.4, 3.2, 0.0}, 3.0},
          {4, {8.0, 2.0, 0.5 * pi}, 3.0}, {5, {5.6, 4.8, pi}, 3.0},       {6, {8.8, 3.6, -0.5 * pi}, 3.0},
          {7, {2.0, 6.0, 0.0}, 3.0}};
}

std::vector<std::string> bundled_scenario_names() { return {"traj1", "traj2", "traj3", "long_feedback"}; }

ScenarioConfig bundled_scenario(std::string_view name) {
  const auto wps = bundled_waypoints();
  std::vector<int> order;
  bool feedback = false;
  if (name == "traj1") {
    order = {1, 2, 3, 4, 5, 6, 7};
  } else if (name == "traj2") {
    order = {3, 5, 7, 2, 1, 6, 4};
  } else if (name == "traj3") {
    order = {2, 3, 5, 7, 2};
  } else if (name == "long_feedback") {
    order = {2, 3, 5, 7, 2, 3, 5, 7, 2, 3, 5, 7, 2};
    feedback = true;
  } else {
    throw Error(ErrorCode::ConfigError, "unknown bundled scenario '" + std::string(name) + "'");
  }

  ScenarioConfig cfg;
  cfg.name = std::string(name);
  cfg.feedback = feedback;
  const double pitch = 25.0 * std::numbers::pi / 180.0;
  const double pi = std::numbers::pi;
  const struct {
    int id;
    double x, y, yaw;
  } mounts[] = {{1, 0.0, 4.0, 0.0}, {2, 10.0, 4.0, pi}, {3, 5.0, 0.0, 0.5 * pi}, {4, 5.0, 8.0, -0.5 * pi}};
  for (const auto& m : mounts) {
    CameraSpec c;
    c.id = m.id;
    c.position = Vec3(m.x, m.y, 2.5);
    c.yaw = m.yaw;
    c.pitch = pitch;
    cfg.cameras.push_back(c);
  }
  for (int w : order) cfg.trajectory.waypoints.push_back(wps[static_cast<std::size_t>(w - 1)]);
  cfg.validate();
  return cfg;
}

}  // namespace camloc
