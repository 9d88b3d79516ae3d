#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "oscmon/core.hpp"

namespace oscmon::preprocess {

struct WindowStats {
  double mean = 0.0;
  double std_dev = 0.0;  // population
  int nan_count = 0;
  int longest_repeat_run = 0;
};

WindowStats compute_stats(std::span<const double> samples);

/// True when a value is frozen for `max_repeat` consecutive samples, or when
/// the window is a periodic replay of an earlier block at least one second
/// long. `max_repeat` defaults to one second of samples.
bool detect_stale(const ChannelWindow& window, std::optional<int> max_repeat = std::nullopt);

/// Classifies a window: invalid (non-finite), stale, flat, or ok. A window
/// already marked gapped stays gapped.
Quality validate(const ChannelWindow& window);

/// Zero-mean, unit-variance copy of an ok window. Throws Error(FlatChannel)
/// below the flat threshold.
std::pair<ChannelWindow, WindowStats> normalize(const ChannelWindow& window);

std::vector<double> denormalize(std::span<const double> samples, const WindowStats& stats);

bool is_flat(const WindowStats& stats);

}  // namespace oscmon::preprocess
