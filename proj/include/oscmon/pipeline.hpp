#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "oscmon/cluster.hpp"
#include "oscmon/core.hpp"
#include "oscmon/dataset.hpp"
#include "oscmon/ensemble.hpp"
#include "oscmon/events.hpp"

namespace oscmon::pipeline {

enum class Strategy { Voting, Crosscheck };
const char* to_string(Strategy s);
Strategy parse_strategy(const std::string& s);

struct WindowPlan {
  std::size_t length = 0;  // samples
  std::size_t stride = 0;  // samples
  std::size_t count = 0;   // complete windows in the dataset
  std::size_t start_of(std::size_t index) const { return index * stride; }
};

/// W = round(window_seconds * fs), stride = round(stride_seconds * fs);
/// trailing partial windows are dropped. Throws Error(InvalidArgument) when
/// W < 2 or the stride is zero.
WindowPlan plan_windows(std::size_t sample_count, double sample_rate, double window_seconds,
                        double stride_seconds);

/// One window per channel at `index`, quality already assigned (gapped when
/// the window covers a missing row, otherwise preprocess::validate).
std::vector<ChannelWindow> window_batch(const Dataset& data, const WindowPlan& plan,
                                        std::size_t index);

/// Every batch, in stride order.
std::vector<std::vector<ChannelWindow>> windows(const Dataset& data, double window_seconds,
                                                double stride_seconds);

/// Detector invocation counts and stride timings.
struct CostCounters {
  std::uint64_t prony_calls = 0;
  std::uint64_t htls_calls = 0;
  std::uint64_t ekf_calls = 0;
  std::uint64_t prony_approvals = 0;
  std::uint64_t windows = 0;     // channel windows seen
  std::uint64_t ok_windows = 0;  // channel windows that reached detection
  std::uint64_t strides = 0;
  std::size_t channels = 0;      // N_PMU
  double stride_seconds = 0.0;   // t
  std::vector<double> stride_wall_seconds;

  std::uint64_t total_calls() const { return prony_calls + htls_calls + ekf_calls; }
  double monitored_seconds() const { return static_cast<double>(strides) * stride_seconds; }  // T
  /// N_PMU * T / t.
  std::uint64_t n_total() const { return static_cast<std::uint64_t>(channels) * strides; }
  double prony_fp_rate() const {
    return prony_calls ? static_cast<double>(prony_approvals) / static_cast<double>(prony_calls) : 0.0;
  }
  double max_stride_wall() const;
  double mean_stride_wall() const;
};

struct QualityCounts {
  int ok = 0, stale = 0, flat = 0, gapped = 0, invalid = 0;
  void add(Quality q);
};

struct StrideReport {
  std::int64_t index = 0;
  std::int64_t window_start = 0;  // ms
  std::int64_t window_end = 0;    // ms, exclusive
  QualityCounts quality;
  std::vector<events::OscillationEvent> events;
  std::vector<DetectionResult> results;  // per channel, batch order
  std::string config_hash;
  double wall_seconds = 0.0;
};

/// Fixed set of worker threads running index-parallel loops.
class WorkerPool {
 public:
  /// threads <= 1 runs everything on the caller.
  explicit WorkerPool(int threads);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  int size() const { return static_cast<int>(workers_.size()) + 1; }
  /// Calls fn(i) for i in [0, n) and waits for all of them.
  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

 private:
  void worker_loop();

  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(std::size_t)>* job_ = nullptr;
  std::size_t job_size_ = 0;
  std::size_t next_ = 0;
  std::size_t finished_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

struct EngineOptions {
  Strategy strategy = Strategy::Voting;
  int threads = -1;  // -1: take config.threads; 0: hardware concurrency
  std::int64_t first_event_id = 1;
  bool keep_results = false;
  ensemble::Detectors detectors = ensemble::Detectors::standard();
};

/// Stateful per-stride processor: preprocess, vote, time-series filter,
/// clustering and system-level de-duplication.
class Engine {
 public:
  explicit Engine(EngineOptions options = {});

  /// Processes one stride. `batch` holds one window per channel; the
  /// config is fixed for the whole stride.
  StrideReport process(const std::vector<ChannelWindow>& batch, const DetectorConfig& config);

  const CostCounters& counters() const { return counters_; }
  std::int64_t next_event_id() const { return next_event_id_; }
  std::int64_t strides_done() const { return stride_index_; }

 private:
  EngineOptions options_;
  std::optional<WorkerPool> pool_;
  ensemble::TsFilter filter_;
  std::vector<double> active_system_freqs_;
  // Per channel, filter lifetimes covered by a reported event, with the
  // stride they were last seen in and their frequency then.
  struct Reported {
    std::uint64_t lifetime;
    std::int64_t last_stride;
    double frequency_hz;
  };
  std::map<std::string, std::vector<Reported>> reported_;
  CostCounters counters_;
  std::int64_t next_event_id_ = 1;
  std::int64_t stride_index_ = 0;
};

struct RunResult {
  std::vector<events::OscillationEvent> events;
  CostCounters counters;
  std::vector<QualityCounts> quality;  // per stride
};

RunResult run(const Dataset& data, const DetectorConfig& config, EngineOptions options = {});
RunResult bench(const Dataset& data, Strategy strategy, const DetectorConfig& config,
                int threads = -1);

/// Row-at-a-time framing for live input: emits a batch every stride once a
/// full window is buffered. Window and stride come from the config passed
/// to poll(), so a config change takes effect at the next boundary.
class StreamFramer {
 public:
  StreamFramer(std::vector<std::string> channel_ids, double sample_rate);

  void push(std::int64_t t_ms, std::span<const double> values, bool gap = false);
  /// True when poll(config) would emit a batch.
  bool ready(const DetectorConfig& config) const;
  std::optional<std::vector<ChannelWindow>> poll(const DetectorConfig& config);

  const std::vector<std::string>& channel_ids() const { return ids_; }
  double sample_rate() const { return fs_; }

 private:
  struct Row {
    std::int64_t t_ms;
    std::vector<double> values;
    bool gap;
  };
  std::vector<std::string> ids_;
  double fs_;
  std::deque<Row> rows_;
  std::size_t since_emit_ = 0;
  bool emitted_ = false;
};

}  // namespace oscmon::pipeline
