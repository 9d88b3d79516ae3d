#include "oscmon/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <tuple>

#include "oscmon/ekf.hpp"
#include "oscmon/htls.hpp"
#include "oscmon/prony.hpp"

namespace oscmon::ensemble {
namespace {

DetectionResult run_member(const DetectorFn& fn, DetectorKind kind, const ChannelWindow& window,
                           const DetectorConfig& config) {
  try {
    auto r = fn(window, config);
    r.detectors_run = {};
    r.detectors_run.insert(kind);
    if (r.modes.empty()) r.verdict = Verdict::NoOscillation;
    return r;
  } catch (const std::exception& e) {
    return make_result(window, kind, {}, e.what());
  }
}

Mode merge(const Mode& a, const Mode& b) {
  const auto ph = std::polar(1.0, a.phase) + std::polar(1.0, b.phase);
  return Mode{0.5 * (a.amplitude + b.amplitude), 0.5 * (a.damping_factor + b.damping_factor),
              0.5 * (a.angular_frequency + b.angular_frequency),
              std::abs(ph) > 0.0 ? wrap_phase(std::arg(ph)) : a.phase};
}

DetectionResult finish(const ChannelWindow& window, std::vector<Mode> modes, DetectorSet run,
                       std::string diagnostic = {}) {
  DetectionResult r;
  r.channel_id = window.channel_id;
  r.start_time = window.start_time;
  r.verdict = modes.empty() ? Verdict::NoOscillation : Verdict::Oscillation;
  r.modes = std::move(modes);
  r.detectors_run = run;
  r.diagnostic = std::move(diagnostic);
  return r;
}

}  // namespace

Detectors Detectors::standard() {
  return {prony::prony_detect, htls::htls_detect,
          [](const ChannelWindow& w, const DetectorConfig& c) { return ekf::ekf_detect(w, c); }};
}

std::vector<Mode> merge_matched(const std::vector<Mode>& a, const std::vector<Mode>& b,
                                double rel_tol) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (modes_match(a[i], b[j], rel_tol)) {
        pairs.emplace_back(std::abs(a[i].frequency_hz() - b[j].frequency_hz()), i, j);
      }
    }
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<bool> used_a(a.size()), used_b(b.size());
  std::vector<Mode> out;
  for (const auto& [d, i, j] : pairs) {
    if (used_a[i] || used_b[j]) continue;
    used_a[i] = used_b[j] = true;
    out.push_back(merge(a[i], b[j]));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Mode& x, const Mode& y) { return x.amplitude > y.amplitude; });
  return out;
}

std::pair<DetectionResult, VoteTrace> vote(const ChannelWindow& window, const DetectorConfig& config,
                                           const Detectors& detectors) {
  VoteTrace trace;
  DetectorSet run;

  const auto a = run_member(detectors.first, DetectorKind::Prony, window, config);
  run.insert(DetectorKind::Prony);
  trace.detectors_run.push_back(DetectorKind::Prony);
  trace.a_verdict = a.verdict;
  if (!a.oscillating()) {
    trace.final_verdict = Verdict::NoOscillation;
    return {finish(window, {}, run, a.diagnostic), trace};
  }

  const auto b = run_member(detectors.second, DetectorKind::Htls, window, config);
  run.insert(DetectorKind::Htls);
  trace.detectors_run.push_back(DetectorKind::Htls);
  auto agreed = merge_matched(a.modes, b.modes, config.sensitivity);
  trace.b_verdict = agreed.empty() ? Verdict::NoOscillation : Verdict::Oscillation;
  if (!agreed.empty()) {
    trace.final_verdict = Verdict::Oscillation;
    return {finish(window, std::move(agreed), run), trace};
  }

  const auto c = run_member(detectors.third, DetectorKind::Ekf, window, config);
  run.insert(DetectorKind::Ekf);
  trace.detectors_run.push_back(DetectorKind::Ekf);
  trace.c_verdict = c.verdict;
  trace.final_verdict = c.verdict;
  return {finish(window, c.modes, run, c.diagnostic), trace};
}

std::pair<DetectionResult, VoteTrace> crosscheck(const ChannelWindow& window,
                                                 const DetectorConfig& config,
                                                 const Detectors& detectors) {
  const auto a = run_member(detectors.first, DetectorKind::Prony, window, config);
  const auto b = run_member(detectors.second, DetectorKind::Htls, window, config);
  const auto c = run_member(detectors.third, DetectorKind::Ekf, window, config);
  DetectorSet run;
  run.insert(DetectorKind::Prony);
  run.insert(DetectorKind::Htls);
  run.insert(DetectorKind::Ekf);

  VoteTrace trace;
  trace.detectors_run = {DetectorKind::Prony, DetectorKind::Htls, DetectorKind::Ekf};
  trace.a_verdict = a.verdict;
  trace.b_verdict = b.verdict;
  trace.c_verdict = c.verdict;

  const int approvals = int{a.oscillating()} + int{b.oscillating()} + int{c.oscillating()};
  std::vector<Mode> modes;
  if (approvals >= 2) {
    // Report the modes of the first agreeing pair, in voting order.
    const DetectionResult* members[] = {&a, &b, &c};
    for (int i = 0; i < 3 && modes.empty(); ++i) {
      for (int j = i + 1; j < 3 && modes.empty(); ++j) {
        if (members[i]->oscillating() && members[j]->oscillating()) {
          modes = merge_matched(members[i]->modes, members[j]->modes, config.sensitivity);
        }
      }
    }
    if (modes.empty() && c.oscillating()) modes = c.modes;
  }
  trace.final_verdict = modes.empty() ? Verdict::NoOscillation : Verdict::Oscillation;
  return {finish(window, std::move(modes), run), trace};
}

std::vector<Mode> TsFilter::update(const std::string& channel, std::int64_t window_index,
                                   const DetectionResult& result, const DetectorConfig& config) {
  auto& st = channels_[channel];
  if (st.last_index && window_index <= *st.last_index) {
    throw Error(ErrorKind::Sequencing, "ts filter: window index " + std::to_string(window_index) +
                                           " does not follow " + std::to_string(*st.last_index) +
                                           " on channel '" + channel + "'");
  }
  st.last_index = window_index;

  std::vector<Entry> previous;
  for (auto& e : st.entries) {
    if (e.last_index == window_index - 1) previous.push_back(e);
  }

  // Closest-frequency pairs first, one-to-one.
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < result.modes.size(); ++i) {
    for (std::size_t j = 0; j < previous.size(); ++j) {
      if (modes_match(result.modes[i], previous[j].mode, config.sensitivity)) {
        pairs.emplace_back(
            std::abs(result.modes[i].frequency_hz() - previous[j].mode.frequency_hz()), i, j);
      }
    }
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<int> matched_to(result.modes.size(), -1);
  std::vector<bool> prev_used(previous.size(), false);
  for (const auto& [d, i, j] : pairs) {
    if (matched_to[i] >= 0 || prev_used[j]) continue;
    matched_to[i] = static_cast<int>(j);
    prev_used[j] = true;
  }

  std::vector<Entry> next;
  std::vector<Mode> confirmed;
  for (std::size_t i = 0; i < result.modes.size(); ++i) {
    const Mode& m = result.modes[i];
    Entry e;
    if (matched_to[i] >= 0) {
      e = previous[static_cast<std::size_t>(matched_to[i])];
      e.count += 1;
      e.mode.amplitude = 0.5 * (e.mode.amplitude + m.amplitude);
      e.mode.damping_factor = 0.5 * (e.mode.damping_factor + m.damping_factor);
      e.mode.angular_frequency = 0.5 * (e.mode.angular_frequency + m.angular_frequency);
      // Phase is referenced to each window's start, so only the latest is meaningful.
      e.mode.phase = m.phase;
    } else {
      e.mode = m;
      e.count = 1;
      e.lifetime = next_lifetime_++;
    }
    e.last_index = window_index;
    if (!e.fired && e.count >= config.ts_filter_depth) {
      e.fired = true;
      confirmed.push_back(e.mode);
    }
    next.push_back(e);
  }
  st.entries = std::move(next);
  return confirmed;
}

std::vector<Mode> TsFilter::active(const std::string& channel) const {
  std::vector<Mode> out;
  auto it = channels_.find(channel);
  if (it == channels_.end()) return out;
  for (const auto& e : it->second.entries) {
    if (e.fired && it->second.last_index && e.last_index == *it->second.last_index) {
      out.push_back(e.mode);
    }
  }
  return out;
}

const std::vector<TsFilter::Entry>* TsFilter::entries(const std::string& channel) const {
  auto it = channels_.find(channel);
  return it == channels_.end() ? nullptr : &it->second.entries;
}

}  // namespace oscmon::ensemble
