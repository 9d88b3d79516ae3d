#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "oscmon/core.hpp"
#include "oscmon/dataset.hpp"
#include "oscmon/events.hpp"
#include "oscmon/pipeline.hpp"

namespace oscmon::service {

struct ConfigSnapshot {
  std::uint64_t version = 0;
  DetectorConfig config;
  std::string hash;
};

nlohmann::json to_json(const ConfigSnapshot& snap);

/// Versioned detector config. Updates are staged as pending and become
/// active only when the pipeline starts its next stride.
class ConfigManager {
 public:
  explicit ConfigManager(DetectorConfig initial = {});

  std::shared_ptr<const ConfigSnapshot> active() const;
  /// Null when nothing is staged.
  std::shared_ptr<const ConfigSnapshot> pending() const;

  struct PutResult {
    bool accepted = false;
    std::vector<FieldError> errors;
    std::shared_ptr<const ConfigSnapshot> pending;
  };
  /// Merges a partial config onto the pending config (or the active one if
  /// nothing is staged). Rejected updates leave both untouched.
  PutResult put(const nlohmann::json& patch);

  /// Promotes the pending config, if any, and returns the snapshot the
  /// stride about to start must use.
  std::shared_ptr<const ConfigSnapshot> begin_stride();

  /// {"active": snapshot, "pending": snapshot | null}
  nlohmann::json to_json() const;

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const ConfigSnapshot> active_;
  std::shared_ptr<const ConfigSnapshot> pending_;
  std::uint64_t next_version_ = 2;
};

/// Bounded per-subscriber message queue. When full, the oldest message is
/// dropped and the next pop() returns a gap marker first.
class Subscription {
 public:
  explicit Subscription(std::size_t capacity);

  void push(std::string message);
  /// Next message, or nullopt when empty.
  std::optional<std::string> pop();
  std::size_t size() const;
  std::uint64_t dropped_total() const;

  /// Called (outside the lock) after every push.
  void set_notify(std::function<void()> fn);

 private:
  mutable std::mutex mu_;
  std::deque<std::string> queue_;
  std::size_t capacity_;
  std::uint64_t missed_ = 0;
  std::uint64_t dropped_total_ = 0;
  std::function<void()> notify_;
};

/// Fan-out of stream messages to every live subscriber.
class EventHub {
 public:
  explicit EventHub(std::size_t queue_capacity = 256);

  std::shared_ptr<Subscription> subscribe();
  void unsubscribe(const std::shared_ptr<Subscription>& sub);
  void publish(const std::string& message);
  std::size_t subscriber_count() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::shared_ptr<Subscription>> subs_;
  std::size_t capacity_;
};

std::string event_message(const events::OscillationEvent& event);
std::string status_message(const pipeline::StrideReport& report, std::uint64_t config_version);
std::string gap_message(std::uint64_t missed);

/// Shared state behind the HTTP API.
struct ServiceContext {
  explicit ServiceContext(DetectorConfig initial = {},
                          std::unique_ptr<events::EventStore> event_store = nullptr,
                          std::size_t queue_capacity = 256)
      : config(std::move(initial)), hub(queue_capacity), store(std::move(event_store)) {}

  ConfigManager config;
  EventHub hub;
  std::unique_ptr<events::EventStore> store;

  mutable std::mutex status_mu;
  std::vector<std::string> channel_ids;
  double sample_rate = 0.0;
  std::int64_t strides = 0;
  bool source_done = false;

  nlohmann::json status_json() const;
};

/// Row-at-a-time detection loop: framing, stride-boundary config
/// promotion, engine, event log, then the live feed.
class LiveRunner {
 public:
  LiveRunner(ServiceContext& ctx, std::vector<std::string> channel_ids, double sample_rate,
             pipeline::EngineOptions options = {});

  /// Feeds one row. Returns the report when it completed a stride.
  std::optional<pipeline::StrideReport> push(std::int64_t t_ms, std::span<const double> values,
                                             bool gap = false);
  std::int64_t strides() const { return strides_; }

 private:
  ServiceContext& ctx_;
  pipeline::StreamFramer framer_;
  pipeline::Engine engine_;
  std::int64_t strides_ = 0;
};

/// Replays a recorded dataset through a LiveRunner, paced at
/// speed x real time (speed <= 0: no pacing). Returns strides processed.
std::int64_t replay_dataset(ServiceContext& ctx, const Dataset& data, double speed,
                            const std::atomic<bool>& stop, pipeline::EngineOptions options = {});

/// Tails a CSV that another process is still appending to. Missing rows
/// (timestamp jumps) are fed as gaps. Runs until `stop` is set.
std::int64_t follow_csv(ServiceContext& ctx, const std::filesystem::path& path,
                        const std::atomic<bool>& stop, pipeline::EngineOptions options = {},
                        int poll_ms = 100);

struct ServerOptions {
  std::string address = "0.0.0.0";
  unsigned short port = 8080;  // 0 picks a free port
  int io_threads = 1;
};

/// HTTP + WebSocket front end:
///   GET  /api/config
///   PUT  /api/config            partial config JSON
///   GET  /api/history?from=&to= ms since epoch
///   GET  /api/status
///   GET  /api/stream            websocket upgrade
class Server {
 public:
  Server(ServiceContext& ctx, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts serving on background threads.
  void start();
  void stop();
  unsigned short port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace oscmon::service
