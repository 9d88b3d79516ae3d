#include "oscmon/service.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <thread>

#include "oscmon/config_io.hpp"

namespace oscmon::service {
namespace {

std::shared_ptr<const ConfigSnapshot> make_snapshot(std::uint64_t version, const DetectorConfig& c) {
  return std::make_shared<const ConfigSnapshot>(ConfigSnapshot{version, c, config_hash(c)});
}

nlohmann::json quality_json(const pipeline::QualityCounts& q) {
  return {{"ok", q.ok}, {"stale", q.stale}, {"flat", q.flat}, {"gapped", q.gapped},
          {"invalid", q.invalid}};
}

}  // namespace

nlohmann::json to_json(const ConfigSnapshot& snap) {
  return {{"version", snap.version}, {"hash", snap.hash}, {"config", oscmon::to_json(snap.config)}};
}

ConfigManager::ConfigManager(DetectorConfig initial) {
  const auto errs = initial.validate();
  if (!errs.empty()) {
    throw Error(ErrorKind::InvalidConfig, "initial config: " + errs.front().field + " " +
                                              errs.front().message);
  }
  active_ = make_snapshot(1, initial);
}

std::shared_ptr<const ConfigSnapshot> ConfigManager::active() const {
  std::lock_guard lock(mu_);
  return active_;
}

std::shared_ptr<const ConfigSnapshot> ConfigManager::pending() const {
  std::lock_guard lock(mu_);
  return pending_;
}

ConfigManager::PutResult ConfigManager::put(const nlohmann::json& patch) {
  PutResult res;
  std::lock_guard lock(mu_);
  const auto& base = pending_ ? pending_->config : active_->config;
  auto merged = merge_json(base, patch, res.errors);
  if (!res.errors.empty()) {
    res.pending = pending_;
    return res;
  }
  pending_ = make_snapshot(next_version_++, merged);
  res.accepted = true;
  res.pending = pending_;
  return res;
}

std::shared_ptr<const ConfigSnapshot> ConfigManager::begin_stride() {
  std::lock_guard lock(mu_);
  if (pending_) {
    active_ = std::move(pending_);
    pending_.reset();
  }
  return active_;
}

nlohmann::json ConfigManager::to_json() const {
  std::lock_guard lock(mu_);
  return {{"active", service::to_json(*active_)},
          {"pending", pending_ ? service::to_json(*pending_) : nlohmann::json(nullptr)}};
}

Subscription::Subscription(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 1)) {}

void Subscription::push(std::string message) {
  std::function<void()> notify;
  {
    std::lock_guard lock(mu_);
    if (queue_.size() >= capacity_) {
      queue_.pop_front();
      ++missed_;
      ++dropped_total_;
    }
    queue_.push_back(std::move(message));
    notify = notify_;
  }
  if (notify) notify();
}

std::optional<std::string> Subscription::pop() {
  std::lock_guard lock(mu_);
  if (missed_ > 0) {
    const auto n = missed_;
    missed_ = 0;
    return gap_message(n);
  }
  if (queue_.empty()) return std::nullopt;
  auto m = std::move(queue_.front());
  queue_.pop_front();
  return m;
}

std::size_t Subscription::size() const {
  std::lock_guard lock(mu_);
  return queue_.size() + (missed_ > 0 ? 1 : 0);
}

std::uint64_t Subscription::dropped_total() const {
  std::lock_guard lock(mu_);
  return dropped_total_;
}

void Subscription::set_notify(std::function<void()> fn) {
  std::lock_guard lock(mu_);
  notify_ = std::move(fn);
}

EventHub::EventHub(std::size_t queue_capacity) : capacity_(queue_capacity) {}

std::shared_ptr<Subscription> EventHub::subscribe() {
  auto sub = std::make_shared<Subscription>(capacity_);
  std::lock_guard lock(mu_);
  subs_.push_back(sub);
  return sub;
}

void EventHub::unsubscribe(const std::shared_ptr<Subscription>& sub) {
  std::lock_guard lock(mu_);
  std::erase(subs_, sub);
}

void EventHub::publish(const std::string& message) {
  std::vector<std::shared_ptr<Subscription>> subs;
  {
    std::lock_guard lock(mu_);
    subs = subs_;
  }
  for (const auto& s : subs) s->push(message);
}

std::size_t EventHub::subscriber_count() const {
  std::lock_guard lock(mu_);
  return subs_.size();
}

std::string event_message(const events::OscillationEvent& event) {
  return nlohmann::json{{"type", "event"}, {"event", events::to_json(event)}}.dump();
}

std::string status_message(const pipeline::StrideReport& report, std::uint64_t config_version) {
  return nlohmann::json{{"type", "status"},
                        {"stride", report.index},
                        {"window_start", report.window_start},
                        {"window_end", report.window_end},
                        {"quality", quality_json(report.quality)},
                        {"events", report.events.size()},
                        {"config_version", config_version},
                        {"config_hash", report.config_hash},
                        {"wall_ms", report.wall_seconds * 1e3}}
      .dump();
}

std::string gap_message(std::uint64_t missed) {
  return nlohmann::json{{"type", "gap"}, {"missed", missed}}.dump();
}

nlohmann::json ServiceContext::status_json() const {
  std::lock_guard lock(status_mu);
  return {{"channels", channel_ids},
          {"sample_rate", sample_rate},
          {"strides", strides},
          {"source_done", source_done},
          {"subscribers", hub.subscriber_count()}};
}

LiveRunner::LiveRunner(ServiceContext& ctx, std::vector<std::string> channel_ids,
                       double sample_rate, pipeline::EngineOptions options)
    : ctx_(ctx), framer_(channel_ids, sample_rate), engine_([&] {
        if (ctx.store) options.first_event_id = ctx.store->last_event_id() + 1;
        return options;
      }()) {
  std::lock_guard lock(ctx_.status_mu);
  ctx_.channel_ids = std::move(channel_ids);
  ctx_.sample_rate = sample_rate;
  ctx_.strides = 0;
  ctx_.source_done = false;
}

std::optional<pipeline::StrideReport> LiveRunner::push(std::int64_t t_ms,
                                                        std::span<const double> values, bool gap) {
  framer_.push(t_ms, values, gap);
  auto staged = ctx_.config.pending();
  if (!framer_.ready(staged ? staged->config : ctx_.config.active()->config)) return std::nullopt;
  const auto snap = ctx_.config.begin_stride();
  auto batch = framer_.poll(snap->config);
  if (!batch) return std::nullopt;

  auto report = engine_.process(*batch, snap->config);
  ++strides_;
  if (ctx_.store) {
    try {
      ctx_.store->flush_pending();
      for (const auto& e : report.events) ctx_.store->append(e);
    } catch (const Error& e) {
      std::cerr << "event log: " << e.what() << " (kept in memory for retry)\n";
    }
  }
  for (const auto& e : report.events) ctx_.hub.publish(event_message(e));
  ctx_.hub.publish(status_message(report, snap->version));
  {
    std::lock_guard lock(ctx_.status_mu);
    ctx_.strides = strides_;
  }
  return report;
}

std::int64_t replay_dataset(ServiceContext& ctx, const Dataset& data, double speed,
                            const std::atomic<bool>& stop, pipeline::EngineOptions options) {
  LiveRunner runner(ctx, data.channel_ids, data.sample_rate, options);
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> row(data.channel_count());
  for (std::size_t k = 0; k < data.sample_count() && !stop.load(); ++k) {
    if (speed > 0.0) {
      const auto due = t0 + std::chrono::duration<double>(static_cast<double>(k) /
                                                          (data.sample_rate * speed));
      std::this_thread::sleep_until(
          std::chrono::time_point_cast<std::chrono::steady_clock::duration>(due));
    }
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = data.channels[c][k];
    const bool gap = !data.gap_rows.empty() && data.gap_rows[k] != 0;
    runner.push(data.timestamp_of(k), row, gap);
  }
  std::lock_guard lock(ctx.status_mu);
  ctx.source_done = true;
  return runner.strides();
}

std::int64_t follow_csv(ServiceContext& ctx, const std::filesystem::path& path,
                        const std::atomic<bool>& stop, pipeline::EngineOptions options,
                        int poll_ms) {
  std::ifstream in;
  std::string pending;  // partial line not yet terminated by '\n'
  std::size_t line_no = 0;
  const auto sleep = [&] { std::this_thread::sleep_for(std::chrono::milliseconds(poll_ms)); };

  // Complete lines only; a line still being written stays buffered.
  const auto next_line = [&](std::string& line) -> bool {
    for (;;) {
      if (!in.is_open()) {
        in.open(path);
        if (!in.is_open()) return false;
      }
      char ch;
      while (in.get(ch)) {
        if (ch == '\n') {
          line = std::move(pending);
          pending.clear();
          ++line_no;
          if (!line.empty() && line.back() == '\r') line.pop_back();
          return true;
        }
        pending.push_back(ch);
      }
      in.clear();
      return false;
    }
  };

  std::string line;
  while (!stop.load() && !next_line(line)) sleep();
  if (stop.load()) return 0;
  CsvRowReader reader(line);

  // The rate comes from the span of the first rows: integer-ms timestamps
  // make a single interval too coarse (33 ms at 30 Hz). Rates within 1% of
  // an integer are taken as that integer.
  constexpr std::size_t kHeadRows = 31;
  std::vector<CsvRowReader::Row> head;
  while (!stop.load() && head.size() < kHeadRows) {
    if (next_line(line)) {
      if (!line.empty()) head.push_back(reader.parse(line, line_no));
    } else {
      sleep();
    }
  }
  if (stop.load()) return 0;
  double fs = 1000.0 * static_cast<double>(head.size() - 1) /
              static_cast<double>(head.back().t_ms - head.front().t_ms);
  if (std::abs(fs - std::round(fs)) <= 0.01 * fs) fs = std::round(fs);
  const double period = 1000.0 / fs;
  LiveRunner runner(ctx, reader.channel_ids(), fs, options);

  std::int64_t last_t = 0;
  bool have_last = false;
  const std::vector<double> nan_row(reader.channel_ids().size(),
                                    std::numeric_limits<double>::quiet_NaN());
  const auto feed = [&](const CsvRowReader::Row& r) {
    if (have_last) {
      // One NaN row per missing sample period.
      const auto missing = static_cast<long>(std::llround(static_cast<double>(r.t_ms - last_t) / period)) - 1;
      for (long i = 1; i <= missing; ++i) {
        runner.push(last_t + std::llround(static_cast<double>(i) * period), nan_row, true);
      }
    }
    runner.push(r.t_ms, r.values, false);
    last_t = r.t_ms;
    have_last = true;
  };
  for (const auto& r : head) feed(r);
  while (!stop.load()) {
    if (next_line(line)) {
      if (!line.empty()) feed(reader.parse(line, line_no));
    } else {
      sleep();
    }
  }
  return runner.strides();
}

}  // namespace oscmon::service
