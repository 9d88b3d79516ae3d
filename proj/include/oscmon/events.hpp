#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "oscmon/cluster.hpp"

namespace oscmon::events {

struct OscillationEvent {
  std::int64_t event_id = 0;
  std::int64_t detected_at = 0;  // ms since epoch, end of the confirming window
  std::vector<cluster::SystemMode> system_modes;
  // Detector name -> number of member-channel windows it ran on in the
  // confirming stride.
  std::map<std::string, int> detectors_run;
  std::string config_hash;
};

nlohmann::json to_json(const cluster::SystemMode& mode);
cluster::SystemMode system_mode_from_json(const nlohmann::json& j);
nlohmann::json to_json(const OscillationEvent& event);
OscillationEvent event_from_json(const nlohmann::json& j);

/// One log line, no trailing newline.
std::string serialize(const OscillationEvent& event);
/// Throws Error(Parse) on malformed input.
OscillationEvent parse_line(const std::string& line);

/// Append-only newline-delimited event log. One writer, any number of
/// readers; readers open the file independently and never take the writer's
/// lock.
class EventStore {
 public:
  explicit EventStore(std::filesystem::path path, bool truncate = false);

  /// Writes and fsyncs one line. Events still queued from an earlier failure
  /// are written first. On failure the event stays queued and
  /// Error(Storage) is thrown. Throws Error(InvalidArgument) when event_id
  /// does not increase.
  void append(const OscillationEvent& event);
  /// Retries queued events; returns how many remain queued.
  std::size_t flush_pending();
  std::size_t pending() const;

  /// Events with detected_at in [from, to], chronological. Unparseable lines
  /// are skipped and described in `warnings` when given.
  std::vector<OscillationEvent> read_range(std::int64_t from, std::int64_t to,
                                           std::vector<std::string>* warnings = nullptr) const;
  std::vector<OscillationEvent> read_all(std::vector<std::string>* warnings = nullptr) const;

  std::int64_t last_event_id() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  void write_line(const std::string& line);

  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::deque<OscillationEvent> queue_;
  std::int64_t last_id_ = 0;
};

}  // namespace oscmon::events
