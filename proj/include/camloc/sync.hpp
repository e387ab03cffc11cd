#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "camloc/observation.hpp"

namespace camloc {

struct SyncConfig {
  double window = 0.05;  // seconds
  int max_open_sets = 16;

  void validate() const;
};

/// Groups per-camera detection messages into frame-sets by timestamp.
///
/// A message joins the open set with the nearest anchor when the set's
/// stamp span stays within `window`. A set is emitted once every known
/// camera contributed, when a second message from a camera already in the
/// set arrives, or when a newer message lies more than `window` past the
/// set's earliest member. Emitted anchors are strictly increasing; a
/// message that could only open a set at or before the last emitted
/// anchor, or that is older than that anchor minus `window`, is dropped
/// and counted as stale.
///
/// Not thread-safe: producers must serialize calls to ingest().
class Synchronizer {
 public:
  explicit Synchronizer(SyncConfig config = {}, std::vector<int> known_cameras = {});

  std::vector<FrameSet> ingest(const DetectionMessage& message);
  std::vector<FrameSet> flush();

  [[nodiscard]] std::size_t stale_count() const { return stale_; }
  [[nodiscard]] std::size_t open_count() const { return open_.size(); }
  [[nodiscard]] const SyncConfig& config() const { return config_; }

 private:
  struct OpenSet {
    FrameSet set;
    std::int64_t min_ns;
    std::int64_t max_ns;
  };

  void emit_through(std::size_t last, std::vector<FrameSet>& out);
  [[nodiscard]] bool complete(const OpenSet& s) const;
  void open_new(const DetectionMessage& message, std::vector<FrameSet>& out);

  SyncConfig config_;
  std::int64_t window_ns_;
  std::set<int> known_cameras_;
  std::vector<OpenSet> open_;  // sorted by anchor
  std::optional<std::int64_t> last_emitted_;
  std::size_t stale_ = 0;
};

/// One JSONL record: {"type":"detections","camera_id":..,"stamp_ns":..,
/// "keypoints":[{"id":..,"u":..,"v":..,"conf":..},...]}
std::string to_jsonl(const DetectionMessage& message);

/// Throws ParseError on malformed records.
DetectionMessage parse_detection_line(std::string_view line);

void write_jsonl(std::ostream& out, std::span<const DetectionMessage> messages);

/// Reads a whole stream; blank lines are skipped. Throws ParseError whose
/// message names the offending "line <n>:".
std::vector<DetectionMessage> read_jsonl(std::istream& in);

}  // namespace camloc
