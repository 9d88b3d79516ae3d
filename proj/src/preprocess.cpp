#include "oscmon/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace oscmon::preprocess {

WindowStats compute_stats(std::span<const double> samples) {
  WindowStats s;
  double sum = 0.0;
  std::size_t finite = 0;
  int run = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double v = samples[i];
    if (!std::isfinite(v)) {
      ++s.nan_count;
      run = 0;
      continue;
    }
    sum += v;
    ++finite;
    run = (i > 0 && samples[i - 1] == v) ? run + 1 : 1;
    s.longest_repeat_run = std::max(s.longest_repeat_run, run);
  }
  if (finite == 0) return s;
  s.mean = sum / static_cast<double>(finite);
  double ss = 0.0;
  for (double v : samples) {
    if (std::isfinite(v)) ss += (v - s.mean) * (v - s.mean);
  }
  s.std_dev = std::sqrt(ss / static_cast<double>(finite));
  return s;
}

bool is_flat(const WindowStats& stats) {
  return stats.std_dev < 1e-9 * std::abs(stats.mean) + 1e-12;
}

bool detect_stale(const ChannelWindow& window, std::optional<int> max_repeat) {
  const auto& x = window.samples;
  const auto n = x.size();
  if (n == 0) return false;
  const int block = std::max(1, static_cast<int>(std::lround(window.sample_rate)));
  const int limit = max_repeat.value_or(block);

  if (compute_stats(x).longest_repeat_run >= limit) return true;

  // Replayed history: the whole window repeats with some period p >= 1 s.
  for (std::size_t p = static_cast<std::size_t>(block); 2 * p <= n; ++p) {
    bool periodic = true;
    for (std::size_t k = p; k < n && periodic; ++k) periodic = x[k] == x[k - p];
    if (periodic) return true;
  }
  return false;
}

Quality validate(const ChannelWindow& window) {
  if (window.quality == Quality::Gapped) return Quality::Gapped;
  for (double v : window.samples) {
    if (!std::isfinite(v)) return Quality::Invalid;
  }
  if (window.samples.empty()) return Quality::Invalid;
  if (detect_stale(window)) return Quality::Stale;
  if (is_flat(compute_stats(window.samples))) return Quality::Flat;
  return Quality::Ok;
}

std::pair<ChannelWindow, WindowStats> normalize(const ChannelWindow& window) {
  const auto stats = compute_stats(window.samples);
  if (is_flat(stats)) {
    throw Error(ErrorKind::FlatChannel, "normalize: channel '" + window.channel_id + "' is flat");
  }
  ChannelWindow out = window;
  for (auto& v : out.samples) v = (v - stats.mean) / stats.std_dev;
  return {std::move(out), stats};
}

std::vector<double> denormalize(std::span<const double> samples, const WindowStats& stats) {
  std::vector<double> out(samples.begin(), samples.end());
  for (auto& v : out) v = v * stats.std_dev + stats.mean;
  return out;
}

}  // namespace oscmon::preprocess
