#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oscmon/core.hpp"
#include "oscmon/dataset.hpp"

namespace oscmon::synth {

/// Ground-truth signal description. Each channel carries its own list of
/// modes; channels that share a system mode use the same sigma/omega with
/// their own amplitude and phase.
struct SynthSpec {
  std::vector<std::vector<Mode>> channel_modes;
  std::vector<std::string> channel_ids;  // optional; defaults to ch0, ch1, ...
  std::vector<double> offsets;           // optional per-channel DC level
  double sample_rate = 30.0;
  double duration = 5.0;
  std::optional<double> snr_db;
  std::uint64_t seed = 0;
  std::int64_t start_time = 0;
};

/// Sum of damped cosines sampled at k / sample_rate, k = 0..count-1.
std::vector<double> render(std::span<const Mode> modes, double sample_rate, std::size_t count);

Dataset generate(const SynthSpec& spec);

/// Adds zero-mean white Gaussian noise at the requested SNR relative to the
/// mean power of `samples`.
std::vector<double> add_noise(std::span<const double> samples, double snr_db, std::uint64_t seed);

/// Adds white Gaussian noise of fixed standard deviation in place.
void add_white_noise(std::span<double> samples, double stddev, std::uint64_t seed);

struct TruthMode {
  double frequency_hz = 0.0;
  double damping_factor = 0.0;
  std::vector<std::string> channels;
  std::vector<double> phases;  // per member channel, same order
};

struct BenchmarkCase {
  std::string id;
  Dataset data;
  std::vector<TruthMode> truth;
};

struct CaseOptions {
  std::optional<std::size_t> channels;
  std::optional<double> duration;
  std::optional<double> sample_rate;
  std::uint64_t seed = 1;
};

inline constexpr std::string_view kBenchmarkCases[] = {"local_1p4", "interarea_0p37",
                                                       "ambient", "mixed"};

/// Synthetic analogs of two sustained-oscillation library cases (a 1.4 Hz
/// local mode on 13 buses, a 0.37 Hz inter-area mode on 5 buses), plain
/// ambient noise, and both modes together. Throws on unknown ids.
BenchmarkCase make_benchmark_case(std::string_view case_id, const CaseOptions& opts = {});

std::string bus_id(int bus);

}  // namespace oscmon::synth
