#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "oscmon/ekf.hpp"
#include "oscmon/synth.hpp"
#include "support.hpp"

using namespace oscmon;

namespace {

double tone_amplitude(const std::vector<double>& y, double fs, double f) {
  return std::abs(ekf::dft_amplitude(y, fs, f));
}

double peak_in_band(std::vector<double> y, double fs) {
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  for (auto& v : y) v -= mean;
  const auto sp = ekf::band_spectrum(y, fs, 0.1, 2.5);
  return *std::max_element(sp.magnitude.begin(), sp.magnitude.end());
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("rendered values") {
  synth::SynthSpec spec;
  spec.channel_modes = {{Mode::from_hz(1.0, 0.0, 1.4, 0.0)}, {}};
  spec.sample_rate = 30.0;
  spec.duration = 2.0;
  const auto ds = synth::generate(spec);
  REQUIRE(ds.channel_count() == 2);
  REQUIRE(ds.sample_count() == 60);
  CHECK(ds.channels[0][0] == 1.0);
  CHECK(ds.channels[0][30] == doctest::Approx(-0.8090169943749474).epsilon(1e-12));
  for (double v : ds.channels[1]) CHECK(v == 0.0);
  CHECK(ds.channel_ids == std::vector<std::string>{"ch0", "ch1"});
}

TEST_CASE("render is a sum of damped cosines") {
  testing::Gen g(21);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Mode> modes;
    for (int i = 0; i < 3; ++i) modes.push_back(g.mode());
    const auto y = synth::render(modes, 25.0, 100);
    for (std::size_t k = 0; k < y.size(); k += 7) {
      double expect = 0.0;
      const double t = static_cast<double>(k) / 25.0;
      for (const auto& m : modes) {
        expect += m.amplitude * std::exp(-m.damping_factor * t) * std::cos(m.angular_frequency * t + m.phase);
      }
      CHECK(y[k] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("noise at a requested SNR") {
  const std::size_t n = 200000;
  std::vector<double> y(n);
  for (std::size_t k = 0; k < n; ++k) y[k] = std::sqrt(2.0) * std::cos(0.37 * static_cast<double>(k));
  double p = 0.0;
  for (double v : y) p += v * v;
  p /= static_cast<double>(n);

  const auto noisy = synth::add_noise(y, 20.0, 5);
  double var = 0.0;
  for (std::size_t k = 0; k < n; ++k) var += (noisy[k] - y[k]) * (noisy[k] - y[k]);
  var /= static_cast<double>(n);
  CHECK(var == doctest::Approx(0.01 * p).epsilon(0.05));

  CHECK(synth::add_noise(y, 20.0, 5) == noisy);
  CHECK(synth::add_noise(y, 20.0, 6) != noisy);
  CHECK(synth::add_noise(y, INFINITY, 5) == y);
  CHECK_THROWS_AS(synth::add_noise(std::vector<double>(10, 0.0), 20.0, 1), Error);

  synth::SynthSpec spec;
  spec.channel_modes = {{Mode::from_hz(1.0, 0.0, 1.0)}};
  CHECK(synth::generate(spec).channels[0] == synth::render(spec.channel_modes[0], 30.0, 150));
}

TEST_CASE("benchmark cases seed the expected channels") {
  for (auto [id, hz, members] : {std::tuple{"local_1p4", 1.4010, 13}, std::tuple{"interarea_0p37", 0.3703, 5}}) {
    const auto bc = synth::make_benchmark_case(id);
    REQUIRE(bc.truth.size() == 1);
    CHECK(bc.truth[0].frequency_hz == hz);
    CHECK(bc.truth[0].channels.size() == static_cast<std::size_t>(members));
    const std::set<std::string> seeded(bc.truth[0].channels.begin(), bc.truth[0].channels.end());
    int found = 0;
    for (std::size_t c = 0; c < bc.data.channel_count(); ++c) {
      auto y = bc.data.channels[c];
      const bool has = tone_amplitude(y, bc.data.sample_rate, hz) > 0.2;
      CHECK(has == (seeded.count(bc.data.channel_ids[c]) == 1));
      found += has;
    }
    CHECK(found == members);
  }
  const auto mixed = synth::make_benchmark_case("mixed");
  CHECK(mixed.truth.size() == 2);
  CHECK_THROWS_AS(synth::make_benchmark_case("nope"), Error);
}

TEST_CASE("ambient case looks like white noise in band") {
  // Compare the mean in-band spectral peak of ambient channels with that of
  // equally scaled white noise.
  double amb = 0.0, ref = 0.0;
  int n = 0;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    synth::CaseOptions o;
    o.seed = seed;
    o.duration = 5.0;
    const auto bc = synth::make_benchmark_case("ambient", o);
    CHECK(bc.truth.empty());
    for (std::size_t c = 0; c < bc.data.channel_count(); ++c) {
      amb += peak_in_band(bc.data.channels[c], bc.data.sample_rate);
      std::vector<double> w(bc.data.sample_count(), 0.0);
      synth::add_white_noise(w, 0.05, 1000 * seed + c + 17);
      ref += peak_in_band(w, bc.data.sample_rate);
      ++n;
    }
  }
  CHECK(amb / n == doctest::Approx(ref / n).epsilon(0.05));
}

TEST_CASE("benchmark cases are deterministic per seed") {
  synth::CaseOptions o;
  o.channels = 20;
  const auto a = synth::make_benchmark_case("local_1p4", o);
  const auto b = synth::make_benchmark_case("local_1p4", o);
  CHECK(a.data.channels == b.data.channels);
  o.seed = 2;
  CHECK(synth::make_benchmark_case("local_1p4", o).data.channels != a.data.channels);
}

}  // TEST_SUITE
