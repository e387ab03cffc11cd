#include "camloc/sync.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "camloc/error.hpp"

namespace camloc {

void SyncConfig::validate() const {
  if (!(window > 0.0)) throw Error(ErrorCode::ConfigError, "sync window must be positive");
  if (max_open_sets < 1) throw Error(ErrorCode::ConfigError, "sync max_open_sets must be >= 1");
}

Synchronizer::Synchronizer(SyncConfig config, std::vector<int> known_cameras)
    : config_(config),
      window_ns_(seconds_to_ns(config.window)),
      known_cameras_(known_cameras.begin(), known_cameras.end()) {
  config_.validate();
}

bool Synchronizer::complete(const OpenSet& s) const {
  if (known_cameras_.empty()) return false;
  return std::all_of(known_cameras_.begin(), known_cameras_.end(),
                     [&](int id) { return s.set.per_camera.count(id) > 0; });
}

void Synchronizer::emit_through(std::size_t last, std::vector<FrameSet>& out) {
  for (std::size_t i = 0; i <= last; ++i) {
    last_emitted_ = open_[i].set.anchor_stamp_ns;
    out.push_back(std::move(open_[i].set));
  }
  open_.erase(open_.begin(), open_.begin() + static_cast<std::ptrdiff_t>(last + 1));
}

void Synchronizer::open_new(const DetectionMessage& message, std::vector<FrameSet>& out) {
  if (last_emitted_ && message.stamp_ns <= *last_emitted_) {
    ++stale_;
    return;
  }
  OpenSet s{FrameSet{message.stamp_ns, {}}, message.stamp_ns, message.stamp_ns};
  s.set.per_camera.emplace(message.camera_id, message);
  auto pos = std::upper_bound(open_.begin(), open_.end(), message.stamp_ns,
                              [](std::int64_t t, const OpenSet& o) { return t < o.set.anchor_stamp_ns; });
  pos = open_.insert(pos, std::move(s));
  const auto idx = static_cast<std::size_t>(pos - open_.begin());
  if (complete(open_[idx])) {
    emit_through(idx, out);
  } else if (static_cast<int>(open_.size()) > config_.max_open_sets) {
    emit_through(0, out);
  }
}

std::vector<FrameSet> Synchronizer::ingest(const DetectionMessage& message) {
  std::vector<FrameSet> out;
  if (last_emitted_ && message.stamp_ns < *last_emitted_ - window_ns_) {
    ++stale_;
    return out;
  }

  // Sets whose earliest member is more than a window older than this
  // message can no longer grow.
  std::optional<std::size_t> elapsed;
  for (std::size_t i = 0; i < open_.size(); ++i) {
    if (message.stamp_ns - open_[i].min_ns > window_ns_) elapsed = i;
  }
  if (elapsed) emit_through(*elapsed, out);

  std::optional<std::size_t> best;
  std::int64_t best_gap = 0;
  for (std::size_t i = 0; i < open_.size(); ++i) {
    const auto& s = open_[i];
    const std::int64_t lo = std::min(s.min_ns, message.stamp_ns);
    const std::int64_t hi = std::max(s.max_ns, message.stamp_ns);
    if (hi - lo > window_ns_) continue;
    const std::int64_t gap = std::abs(message.stamp_ns - s.set.anchor_stamp_ns);
    if (!best || gap < best_gap) {
      best = i;
      best_gap = gap;
    }
  }

  if (!best) {
    open_new(message, out);
    return out;
  }
  if (open_[*best].set.per_camera.count(message.camera_id) > 0) {
    emit_through(*best, out);
    open_new(message, out);
    return out;
  }
  auto& s = open_[*best];
  s.set.per_camera.emplace(message.camera_id, message);
  s.min_ns = std::min(s.min_ns, message.stamp_ns);
  s.max_ns = std::max(s.max_ns, message.stamp_ns);
  if (complete(s)) emit_through(*best, out);
  return out;
}

std::vector<FrameSet> Synchronizer::flush() {
  std::vector<FrameSet> out;
  if (!open_.empty()) emit_through(open_.size() - 1, out);
  return out;
}

std::string to_jsonl(const DetectionMessage& message) {
  nlohmann::ordered_json j;
  j["type"] = "detections";
  j["camera_id"] = message.camera_id;
  j["stamp_ns"] = message.stamp_ns;
  auto kps = nlohmann::ordered_json::array();
  for (const auto& k : message.keypoints) {
    nlohmann::ordered_json e;
    e["id"] = k.index;
    e["u"] = k.pixel.x();
    e["v"] = k.pixel.y();
    e["conf"] = k.confidence;
    kps.push_back(std::move(e));
  }
  j["keypoints"] = std::move(kps);
  return j.dump();
}

DetectionMessage parse_detection_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  try {
    if (!j.is_object() || j.at("type").get<std::string>() != "detections") {
      throw Error(ErrorCode::ParseError, "record is not a detections message");
    }
    DetectionMessage m;
    m.camera_id = j.at("camera_id").get<int>();
    if (!j.at("stamp_ns").is_number_integer()) throw Error(ErrorCode::ParseError, "stamp_ns must be an integer");
    m.stamp_ns = j.at("stamp_ns").get<std::int64_t>();
    std::set<int> seen;
    for (const auto& e : j.at("keypoints")) {
      KeypointDetection k;
      k.index = e.at("id").get<int>();
      k.pixel = {e.at("u").get<double>(), e.at("v").get<double>()};
      k.confidence = e.at("conf").get<double>();
      if (!seen.insert(k.index).second) throw Error(ErrorCode::ParseError, "duplicate keypoint id");
      if (!(k.confidence >= 0.0 && k.confidence <= 1.0)) throw Error(ErrorCode::ParseError, "confidence outside [0,1]");
      if (!k.pixel.allFinite()) throw Error(ErrorCode::ParseError, "non-finite pixel");
      m.keypoints.push_back(k);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

void write_jsonl(std::ostream& out, std::span<const DetectionMessage> messages) {
  for (const auto& m : messages) out << to_jsonl(m) << '\n';
}

std::vector<DetectionMessage> read_jsonl(std::istream& in) {
  std::vector<DetectionMessage> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_detection_line(line));
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace camloc
