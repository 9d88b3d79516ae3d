#include "oscmon/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace oscmon::synth {
namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

constexpr int kLocalBuses[] = {4, 10, 11, 14, 22, 40, 53, 68, 87, 106, 131, 147, 165};
constexpr int kInterAreaBuses[] = {6, 9, 13, 47, 79};

constexpr double kLocalHz = 1.4010;
constexpr double kInterAreaHz = 0.3703;

struct Layout {
  std::size_t channels;
  double duration;
  double sample_rate;
  double noise_std;
};

Layout default_layout(std::string_view id) {
  if (id == "ambient") return {144, 60.0, 25.0, 0.05};
  return {179, 10.0, 30.0, 0.1};
}

// Seeds one system mode onto the listed buses. Members are split into two
// coherent groups swinging against each other.
TruthMode seed_mode(SynthSpec& spec, std::span<const int> buses, double freq_hz, double sigma,
                    double phase_b) {
  TruthMode t;
  t.frequency_hz = freq_hz;
  t.damping_factor = sigma;
  const std::size_t group_a = (buses.size() + 1) / 2;
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const auto c = static_cast<std::size_t>(buses[i] - 1);
    if (c >= spec.channel_modes.size()) continue;
    const double amp = 0.5 + 0.5 * static_cast<double>((i * 7) % buses.size()) /
                                 static_cast<double>(buses.size());
    const double phase = wrap_phase((i < group_a ? 0.0 : phase_b) + 0.05 * static_cast<double>(i % 3));
    spec.channel_modes[c].push_back(Mode::from_hz(amp, sigma, freq_hz, phase));
    t.channels.push_back(spec.channel_ids[c]);
    t.phases.push_back(phase);
  }
  return t;
}

}  // namespace

std::string bus_id(int bus) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "bus_%03d", bus);
  return buf;
}

std::vector<double> render(std::span<const Mode> modes, double sample_rate, std::size_t count) {
  std::vector<double> y(count, 0.0);
  for (const auto& m : modes) {
    for (std::size_t k = 0; k < count; ++k) {
      const double t = static_cast<double>(k) / sample_rate;
      y[k] += m.amplitude * std::exp(-m.damping_factor * t) *
              std::cos(m.angular_frequency * t + m.phase);
    }
  }
  return y;
}

void add_white_noise(std::span<double> samples, double stddev, std::uint64_t seed) {
  if (stddev <= 0.0) return;
  auto rng = make_rng(seed, 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : samples) v += dist(rng);
}

std::vector<double> add_noise(std::span<const double> samples, double snr_db, std::uint64_t seed) {
  if (samples.empty()) throw Error(ErrorKind::InvalidArgument, "add_noise: empty signal");
  double power = 0.0;
  for (double v : samples) power += v * v;
  power /= static_cast<double>(samples.size());
  if (!(power > 0.0)) throw Error(ErrorKind::UndefinedSnr, "add_noise: all-zero signal has no SNR");
  std::vector<double> out(samples.begin(), samples.end());
  if (std::isinf(snr_db) && snr_db > 0) return out;
  add_white_noise(out, std::sqrt(power / std::pow(10.0, snr_db / 10.0)), seed);
  return out;
}

Dataset generate(const SynthSpec& spec) {
  if (!(spec.sample_rate > 0.0) || spec.duration * spec.sample_rate < 2.0) {
    throw Error(ErrorKind::InvalidArgument, "generate: need duration * sample_rate >= 2");
  }
  const auto count = static_cast<std::size_t>(std::llround(spec.duration * spec.sample_rate));
  Dataset ds;
  ds.sample_rate = spec.sample_rate;
  ds.start_time = spec.start_time;
  ds.gap_rows.assign(count, 0);
  const std::size_t m_count = spec.channel_modes.size();
  for (std::size_t m = 0; m < m_count; ++m) {
    ds.channel_ids.push_back(m < spec.channel_ids.size() ? spec.channel_ids[m]
                                                         : "ch" + std::to_string(m));
    auto y = render(spec.channel_modes[m], spec.sample_rate, count);
    if (spec.snr_db) y = add_noise(y, *spec.snr_db, spec.seed * 1000003ULL + m);
    if (m < spec.offsets.size()) {
      for (auto& v : y) v += spec.offsets[m];
    }
    ds.channels.push_back(std::move(y));
  }
  return ds;
}

BenchmarkCase make_benchmark_case(std::string_view case_id, const CaseOptions& opts) {
  if (std::find(std::begin(kBenchmarkCases), std::end(kBenchmarkCases), case_id) ==
      std::end(kBenchmarkCases)) {
    throw Error(ErrorKind::InvalidArgument, "unknown benchmark case '" + std::string(case_id) + "'");
  }
  const Layout base = default_layout(case_id);
  const std::size_t channels = opts.channels.value_or(base.channels);
  SynthSpec spec;
  spec.sample_rate = opts.sample_rate.value_or(base.sample_rate);
  spec.duration = opts.duration.value_or(base.duration);
  spec.seed = opts.seed;
  spec.channel_modes.assign(channels, {});
  for (std::size_t c = 0; c < channels; ++c) {
    spec.channel_ids.push_back(bus_id(static_cast<int>(c) + 1));
    spec.offsets.push_back(1.0 + 0.01 * static_cast<double>(c % 7));
  }

  BenchmarkCase bc;
  bc.id = std::string(case_id);
  if (case_id == "local_1p4" || case_id == "mixed") {
    bc.truth.push_back(seed_mode(spec, kLocalBuses, kLocalHz, 0.05, std::numbers::pi));
  }
  if (case_id == "interarea_0p37" || case_id == "mixed") {
    bc.truth.push_back(seed_mode(spec, kInterAreaBuses, kInterAreaHz, 0.03, std::numbers::pi));
  }
  bc.data = generate(spec);
  for (std::size_t c = 0; c < channels; ++c) {
    add_white_noise(bc.data.channels[c], base.noise_std, opts.seed * 7919ULL + c);
  }
  return bc;
}

}  // namespace oscmon::synth
