#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "oscmon/core.hpp"
#include "oscmon/synth.hpp"

namespace testing {

// Small hand-rolled generator for property tests.
struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng); }
  bool coin() { return integer(0, 1) == 1; }

  oscmon::Mode mode(double f_lo = 0.2, double f_hi = 2.4) {
    return oscmon::Mode::from_hz(uniform(0.5, 2.0), uniform(0.0, 0.3), uniform(f_lo, f_hi),
                                 uniform(-3.0, 3.0));
  }
  std::vector<double> noise(std::size_t n, double sd = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = sd * normal();
    return v;
  }
};

inline oscmon::ChannelWindow window_of(std::vector<double> samples, double fs = 30.0,
                                       std::string id = "ch") {
  oscmon::ChannelWindow w;
  w.channel_id = std::move(id);
  w.sample_rate = fs;
  w.samples = std::move(samples);
  return w;
}

inline oscmon::ChannelWindow tone(const std::vector<oscmon::Mode>& modes, double fs = 30.0,
                                  double seconds = 5.0) {
  return window_of(oscmon::synth::render(modes, fs, static_cast<std::size_t>(fs * seconds + 0.5)), fs);
}

}  // namespace testing
