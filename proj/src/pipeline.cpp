#include "oscmon/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>

#include "oscmon/config_io.hpp"
#include "oscmon/preprocess.hpp"

namespace oscmon::pipeline {

const char* to_string(Strategy s) { return s == Strategy::Voting ? "voting" : "crosscheck"; }

Strategy parse_strategy(const std::string& s) {
  if (s == "voting") return Strategy::Voting;
  if (s == "crosscheck") return Strategy::Crosscheck;
  throw Error(ErrorKind::InvalidArgument, "unknown strategy '" + s + "' (voting|crosscheck)");
}

WindowPlan plan_windows(std::size_t sample_count, double sample_rate, double window_seconds,
                        double stride_seconds) {
  const double w = std::round(window_seconds * sample_rate);
  const double s = std::round(stride_seconds * sample_rate);
  if (!(w >= 2.0)) {
    throw Error(ErrorKind::InvalidArgument, "window must span at least 2 samples");
  }
  if (!(s >= 1.0)) throw Error(ErrorKind::InvalidArgument, "stride must span at least 1 sample");
  WindowPlan plan;
  plan.length = static_cast<std::size_t>(w);
  plan.stride = static_cast<std::size_t>(s);
  plan.count = sample_count < plan.length ? 0 : (sample_count - plan.length) / plan.stride + 1;
  return plan;
}

std::vector<ChannelWindow> window_batch(const Dataset& data, const WindowPlan& plan,
                                        std::size_t index) {
  const std::size_t start = plan.start_of(index);
  if (index >= plan.count || start + plan.length > data.sample_count()) {
    throw Error(ErrorKind::InvalidArgument, "window index out of range");
  }
  bool gapped = false;
  if (!data.gap_rows.empty()) {
    for (std::size_t k = start; k < start + plan.length; ++k) gapped = gapped || data.gap_rows[k];
  }
  std::vector<ChannelWindow> batch(data.channel_count());
  for (std::size_t c = 0; c < batch.size(); ++c) {
    auto& w = batch[c];
    w.channel_id = data.channel_ids[c];
    w.start_time = data.timestamp_of(start);
    w.sample_rate = data.sample_rate;
    const auto first = data.channels[c].begin() + static_cast<std::ptrdiff_t>(start);
    w.samples.assign(first, first + static_cast<std::ptrdiff_t>(plan.length));
    w.quality = gapped ? Quality::Gapped : preprocess::validate(w);
  }
  return batch;
}

std::vector<std::vector<ChannelWindow>> windows(const Dataset& data, double window_seconds,
                                                double stride_seconds) {
  const auto plan = plan_windows(data.sample_count(), data.sample_rate, window_seconds, stride_seconds);
  std::vector<std::vector<ChannelWindow>> out;
  out.reserve(plan.count);
  for (std::size_t i = 0; i < plan.count; ++i) out.push_back(window_batch(data, plan, i));
  return out;
}

double CostCounters::max_stride_wall() const {
  return stride_wall_seconds.empty()
             ? 0.0
             : *std::max_element(stride_wall_seconds.begin(), stride_wall_seconds.end());
}

double CostCounters::mean_stride_wall() const {
  if (stride_wall_seconds.empty()) return 0.0;
  return std::accumulate(stride_wall_seconds.begin(), stride_wall_seconds.end(), 0.0) /
         static_cast<double>(stride_wall_seconds.size());
}

void QualityCounts::add(Quality q) {
  switch (q) {
    case Quality::Ok: ++ok; break;
    case Quality::Stale: ++stale; break;
    case Quality::Flat: ++flat; break;
    case Quality::Gapped: ++gapped; break;
    case Quality::Invalid: ++invalid; break;
  }
}

WorkerPool::WorkerPool(int threads) {
  for (int i = 1; i < threads; ++i) workers_.emplace_back([this] { worker_loop(); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  wake_.notify_all();
  for (auto& t : workers_) t.join();
}

void WorkerPool::parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  if (workers_.empty() || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mu;
  const std::function<void(std::size_t)> guarded = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      std::lock_guard lock(failure_mu);
      if (!failure) failure = std::current_exception();
    }
  };
  {
    std::lock_guard lock(mu_);
    job_ = &guarded;
    job_size_ = n;
    next_ = 0;
    finished_ = 0;
    ++generation_;
  }
  wake_.notify_all();
  for (;;) {
    std::size_t i;
    {
      std::lock_guard lock(mu_);
      if (next_ >= job_size_) break;
      i = next_++;
    }
    guarded(i);
    std::lock_guard lock(mu_);
    ++finished_;
  }
  std::unique_lock lock(mu_);
  done_.wait(lock, [&] { return finished_ == job_size_; });
  job_ = nullptr;
  lock.unlock();
  if (failure) std::rethrow_exception(failure);
}

void WorkerPool::worker_loop() {
  std::uint64_t seen = 0;
  std::unique_lock lock(mu_);
  for (;;) {
    wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
    if (stop_) return;
    seen = generation_;
    while (next_ < job_size_) {
      const std::size_t i = next_++;
      const auto* job = job_;
      lock.unlock();
      (*job)(i);
      lock.lock();
      if (++finished_ == job_size_) done_.notify_all();
    }
  }
}

Engine::Engine(EngineOptions options)
    : options_(std::move(options)), next_event_id_(options_.first_event_id) {}

StrideReport Engine::process(const std::vector<ChannelWindow>& batch, const DetectorConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!pool_) {
    int threads = options_.threads >= 0 ? options_.threads : config.threads;
    if (threads == 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    pool_.emplace(threads);
  }

  struct Outcome {
    Quality quality = Quality::Ok;
    DetectionResult result;
    bool first_approved = false;
  };
  std::vector<Outcome> out(batch.size());
  pool_->parallel_for(batch.size(), [&](std::size_t i) {
    const auto& w = batch[i];
    auto& o = out[i];
    o.quality = preprocess::validate(w);
    if (o.quality == Quality::Ok) {
      try {
        auto [nw, stats] = preprocess::normalize(w);
        auto [r, trace] = options_.strategy == Strategy::Voting
                              ? ensemble::vote(nw, config, options_.detectors)
                              : ensemble::crosscheck(nw, config, options_.detectors);
        o.result = std::move(r);
        o.first_approved = trace.a_verdict == Verdict::Oscillation;
        return;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::FlatChannel) throw;
        o.quality = Quality::Flat;
      }
    }
    o.result.channel_id = w.channel_id;
    o.result.start_time = w.start_time;
    o.result.diagnostic = to_string(o.quality);
  });

  StrideReport rep;
  rep.index = stride_index_;
  rep.config_hash = config_hash(config);
  if (!batch.empty()) {
    const auto& w0 = batch.front();
    rep.window_start = w0.start_time;
    rep.window_end = w0.start_time + std::llround(static_cast<double>(w0.samples.size()) * 1000.0 /
                                                  w0.sample_rate);
  }

  counters_.strides += 1;
  counters_.channels = std::max(counters_.channels, batch.size());
  counters_.stride_seconds = config.stride_seconds;
  std::vector<cluster::ChannelMode> snapshot;
  // Lifetime of each active mode, keyed by channel and exact frequency.
  std::map<std::string, std::vector<std::pair<double, std::uint64_t>>> lifetimes;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& o = out[i];
    rep.quality.add(o.quality);
    counters_.windows += 1;
    if (o.quality == Quality::Ok) counters_.ok_windows += 1;
    const auto& run = o.result.detectors_run;
    if (run.contains(DetectorKind::Prony)) counters_.prony_calls += 1;
    if (run.contains(DetectorKind::Htls)) counters_.htls_calls += 1;
    if (run.contains(DetectorKind::Ekf)) counters_.ekf_calls += 1;
    if (o.first_approved) counters_.prony_approvals += 1;

    const auto& id = batch[i].channel_id;
    filter_.update(id, stride_index_, o.result, config);
    if (const auto* entries = filter_.entries(id)) {
      for (const auto& e : *entries) {
        if (!e.fired || e.last_index != stride_index_) continue;
        snapshot.push_back({id, e.mode});
        lifetimes[id].emplace_back(e.mode.angular_frequency, e.lifetime);
      }
    }
  }

  auto system_modes =
      cluster::cluster_modes(snapshot, config.sensitivity, config.classification_boundary_hz);
  auto lifetime_of = [&](const std::string& id, const Mode& m) -> std::uint64_t {
    for (const auto& [w, l] : lifetimes[id])
      if (w == m.angular_frequency) return l;
    return 0;
  };
  // A system mode is already reported when it sits near one from the last
  // stride, or when a member continues a reported lifetime. A member also
  // counts as continuing when its channel's reported mode lapsed within the
  // last ts_filter_depth strides and the re-fired mode is within twice the
  // match tolerance of it: short windows scatter the estimate enough to break
  // the filter's run without the oscillation going away.
  auto continues = [&](const std::string& id, const Mode& m, std::uint64_t l) {
    const auto it = reported_.find(id);
    if (it == reported_.end()) return false;
    const auto& live = lifetimes[id];
    for (const auto& r : it->second) {
      if (r.lifetime == l) return true;
      const bool lapsed = std::none_of(live.begin(), live.end(), [&](const auto& p) { return p.second == r.lifetime; });
      if (lapsed && stride_index_ - r.last_stride <= config.ts_filter_depth &&
          freqs_match(r.frequency_hz, m.frequency_hz(), 2.0 * config.sensitivity))
        return true;
    }
    return false;
  };
  std::vector<cluster::SystemMode> fresh;
  for (const auto& sm : system_modes) {
    bool known = std::any_of(active_system_freqs_.begin(), active_system_freqs_.end(),
                             [&](double f) { return freqs_match(f, sm.frequency_hz, config.sensitivity); });
    for (const auto& [id, m] : sm.members) known = known || continues(id, m, lifetime_of(id, m));
    if (!known) fresh.push_back(sm);
  }
  for (auto& [id, rs] : reported_) {
    std::erase_if(rs, [&](const Reported& r) { return stride_index_ - r.last_stride >= config.ts_filter_depth; });
  }
  for (const auto& sm : system_modes) {
    for (const auto& [id, m] : sm.members) {
      auto& rs = reported_[id];
      const auto l = lifetime_of(id, m);
      std::erase_if(rs, [&](const Reported& r) { return r.lifetime == l; });
      rs.push_back({l, stride_index_, m.frequency_hz()});
    }
  }
  active_system_freqs_.clear();
  for (const auto& sm : system_modes) active_system_freqs_.push_back(sm.frequency_hz);

  if (!fresh.empty()) {
    events::OscillationEvent ev;
    ev.event_id = next_event_id_++;
    ev.detected_at = rep.window_end;
    ev.config_hash = rep.config_hash;
    for (const auto& sm : fresh) {
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (!sm.members.count(batch[i].channel_id)) continue;
        for (auto d : out[i].result.detectors_run.list()) ev.detectors_run[to_string(d)] += 1;
      }
    }
    ev.system_modes = std::move(fresh);
    rep.events.push_back(std::move(ev));
  }

  if (options_.keep_results) {
    rep.results.reserve(out.size());
    for (auto& o : out) rep.results.push_back(std::move(o.result));
  }
  ++stride_index_;
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  counters_.stride_wall_seconds.push_back(rep.wall_seconds);
  return rep;
}

RunResult run(const Dataset& data, const DetectorConfig& config, EngineOptions options) {
  RunResult res;
  res.counters.channels = data.channel_count();
  res.counters.stride_seconds = config.stride_seconds;
  if (data.sample_count() == 0 || !(data.sample_rate > 0.0)) return res;
  const auto plan =
      plan_windows(data.sample_count(), data.sample_rate, config.window_seconds, config.stride_seconds);
  Engine engine(std::move(options));
  for (std::size_t i = 0; i < plan.count; ++i) {
    auto rep = engine.process(window_batch(data, plan, i), config);
    res.quality.push_back(rep.quality);
    for (auto& e : rep.events) res.events.push_back(std::move(e));
  }
  if (plan.count > 0) res.counters = engine.counters();
  return res;
}

RunResult bench(const Dataset& data, Strategy strategy, const DetectorConfig& config, int threads) {
  EngineOptions opts;
  opts.strategy = strategy;
  opts.threads = threads;
  return run(data, config, std::move(opts));
}

StreamFramer::StreamFramer(std::vector<std::string> channel_ids, double sample_rate)
    : ids_(std::move(channel_ids)), fs_(sample_rate) {}

void StreamFramer::push(std::int64_t t_ms, std::span<const double> values, bool gap) {
  if (values.size() != ids_.size()) {
    throw Error(ErrorKind::InvalidArgument, "framer: row width does not match channel count");
  }
  rows_.push_back({t_ms, std::vector<double>(values.begin(), values.end()), gap});
  if (emitted_) ++since_emit_;
}

bool StreamFramer::ready(const DetectorConfig& config) const {
  const auto plan = plan_windows(rows_.size(), fs_, config.window_seconds, config.stride_seconds);
  if (rows_.size() < plan.length) return false;
  return !emitted_ || since_emit_ >= plan.stride;
}

std::optional<std::vector<ChannelWindow>> StreamFramer::poll(const DetectorConfig& config) {
  if (!ready(config)) return std::nullopt;
  const auto plan = plan_windows(rows_.size(), fs_, config.window_seconds, config.stride_seconds);
  while (rows_.size() > plan.length) rows_.pop_front();

  bool gapped = false;
  for (const auto& r : rows_) gapped = gapped || r.gap;
  std::vector<ChannelWindow> batch(ids_.size());
  for (std::size_t c = 0; c < ids_.size(); ++c) {
    auto& w = batch[c];
    w.channel_id = ids_[c];
    w.start_time = rows_.front().t_ms;
    w.sample_rate = fs_;
    w.samples.reserve(rows_.size());
    for (const auto& r : rows_) w.samples.push_back(r.values[c]);
    w.quality = gapped ? Quality::Gapped : preprocess::validate(w);
  }
  emitted_ = true;
  since_emit_ = 0;
  return batch;
}

}  // namespace oscmon::pipeline
