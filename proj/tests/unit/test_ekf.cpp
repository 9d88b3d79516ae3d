#include <doctest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "oscmon/ekf.hpp"
#include "oscmon/preprocess.hpp"
#include "oscmon/prony.hpp"
#include "oscmon/synth.hpp"
#include "support.hpp"

using namespace oscmon;
using namespace oscmon::ekf;

namespace {

EkfState random_state(testing::Gen& g) {
  auto s = EkfState::zeros(g.integer(1, 3), g.integer(1, 3), 30.0);
  for (int l = 0; l < s.modes; ++l) {
    s.x(s.omega_index(l)) = g.uniform(0.5, 15.0);
    s.x(s.sigma_index(l)) = g.uniform(-0.5, 1.0);
    for (int m = 0; m < s.channels; ++m) {
      s.x(s.re_index(l, m)) = g.uniform(-2.0, 2.0);
      s.x(s.im_index(l, m)) = g.uniform(-2.0, 2.0);
    }
  }
  return s;
}

// Elementwise error scaled by max(1, |entry|).
double jacobian_error(const EkfState& s) {
  const double h = 1e-6;
  const auto j = transition_jacobian(s, s.x);
  double worst = 0.0;
  for (Eigen::Index c = 0; c < s.dim(); ++c) {
    Eigen::VectorXd xp = s.x, xm = s.x;
    xp(c) += h;
    xm(c) -= h;
    const Eigen::VectorXd col = (transition(s, xp) - transition(s, xm)) / (2.0 * h);
    for (Eigen::Index r = 0; r < s.dim(); ++r) {
      worst = std::max(worst, std::abs(col(r) - j(r, c)) / std::max(1.0, std::abs(j(r, c))));
    }
  }
  return worst;
}

bool symmetric_psd(const Eigen::MatrixXd& p) {
  const double scale = std::max(1.0, p.cwiseAbs().maxCoeff());
  if ((p - p.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p);
  return es.eigenvalues().minCoeff() >= -1e-9 * scale;
}

}  // namespace

TEST_SUITE("ekf") {

TEST_CASE("transition rotates and decays each phasor") {
  auto s = EkfState::zeros(1, 1, 30.0);
  s.x << kTwoPi * 1.4, 0.1, 1.0, 0.0;
  const auto next = transition(s, s.x);
  const auto expect = std::exp(std::complex<double>(-0.1, kTwoPi * 1.4) / 30.0);
  CHECK(next(2) == doctest::Approx(expect.real()));
  CHECK(next(3) == doctest::Approx(expect.imag()));
  CHECK(next(0) == s.x(0));
  CHECK(next(1) == s.x(1));
  const auto h = observation_matrix(s);
  CHECK(h(0, 2) == 1.0);
  CHECK(h.sum() == 1.0);
}

TEST_CASE("jacobian agrees with central differences") {
  testing::Gen g(61);
  for (int i = 0; i < 100; ++i) {
    const auto s = random_state(g);
    CHECK(jacobian_error(s) < 1e-5);
  }
}

TEST_CASE("trigger") {
  DetectorConfig c;
  testing::Gen g(62);
  auto w = testing::tone({Mode::from_hz(1.0, 0.0, 1.4)});
  w.samples = synth::add_noise(w.samples, 20.0, 3);
  const auto cands = fft_trigger(w, c);
  REQUIRE(!cands.empty());
  const double bin = 30.0 / (4.0 * 150.0);
  CHECK(std::abs(cands.front() - 1.4) <= bin);

  int fired = 0;
  const int trials = 1000;
  for (int i = 0; i < trials; ++i) fired += !fft_trigger(testing::window_of(g.noise(150)), c).empty();
  MESSAGE("white-noise trigger rate " << fired / double(trials));
  CHECK(fired < trials * 5 / 100);

  CHECK(fft_trigger(testing::window_of(std::vector<double>(150, 1.0)), c).empty());
  CHECK(static_cast<int>(fft_trigger(testing::tone({Mode::from_hz(1, 0, 0.4), Mode::from_hz(1, 0, 0.9),
                                                    Mode::from_hz(1, 0, 1.5), Mode::from_hz(1, 0, 2.1)}),
                                     c)
                             .size()) <= c.trigger_max_candidates);
}

TEST_CASE("dft amplitude against direct correlation") {
  testing::Gen g(63);
  for (int i = 0; i < 30; ++i) {
    const Mode m = Mode::from_hz(g.uniform(0.5, 2.0), 0.0, g.uniform(0.5, 2.0), g.uniform(-3, 3));
    const auto w = testing::tone({m}, 30.0, 10.0);
    const auto a = dft_amplitude(w.samples, 30.0, m.frequency_hz());
    CHECK(std::abs(a) == doctest::Approx(m.amplitude).epsilon(0.02));
    CHECK(std::abs(std::arg(a * std::polar(1.0, -m.phase))) < 0.05);
  }
}

TEST_CASE("initialization") {
  DetectorConfig c;
  const auto w = testing::tone({Mode::from_hz(1.0, 0.0, 1.4, 0.5)});
  const std::vector<double> cand{1.4};
  auto s = ekf_init(w, cand, c);
  CHECK(s.omega(0) == doctest::Approx(kTwoPi * 1.4));
  CHECK(s.sigma(0) == 0.0);
  CHECK(symmetric_psd(s.P));
  const double innov = ekf_step(s, w.samples[0]);
  CHECK(std::abs(innov) < 0.1);
  CHECK_THROWS_AS(ekf_init(w, std::vector<double>{}, c), Error);
}

TEST_CASE("exact model gives vanishing innovations") {
  const Mode m = Mode::from_hz(1.0, 0.1, 1.4, 0.3);
  const auto w = testing::tone({m});
  auto s = EkfState::zeros(1, 1, 30.0);
  const auto z = std::polar(1.0, m.phase) * std::exp(std::complex<double>(m.damping_factor, -m.angular_frequency) / 30.0);
  s.x << m.angular_frequency, m.damping_factor, z.real(), z.imag();
  s.P.diagonal().setConstant(1e-12);
  s.R(0, 0) = 1e-2;
  for (double y : w.samples) CHECK(std::abs(ekf_step(s, y)) < 1e-6);
}

TEST_CASE("huge measurement noise freezes the update") {
  auto s = EkfState::zeros(1, 1, 30.0);
  s.x << 8.0, 0.1, 0.5, -0.2;
  s.P.setIdentity();
  s.R(0, 0) = 1e30;
  auto predicted = transition(s, s.x);
  ekf_step(s, 100.0);
  CHECK((s.x - predicted).cwiseAbs().maxCoeff() < 1e-20);
}

TEST_CASE("covariance stays symmetric PSD through tracking") {
  testing::Gen g(65);
  DetectorConfig c;
  for (int trial = 0; trial < 20; ++trial) {
    auto w = testing::tone({g.mode(0.3, 2.3)});
    for (auto& v : w.samples) v += 0.2 * g.normal();
    auto [nw, st] = preprocess::normalize(w);
    int steps = 0, bad = 0;
    ekf_detect(nw, c, [&](const EkfState& s) {
      ++steps;
      bad += !symmetric_psd(s.P);
    });
    CHECK(bad == 0);
    CHECK(steps > 0);
  }
}

TEST_CASE("noiseless single mode") {
  DetectorConfig c;
  const auto w = testing::tone({Mode::from_hz(1.0, 0.1, 1.4, 0.2)});
  const auto r = ekf_detect(w, c);
  REQUIRE(r.oscillating());
  CHECK(r.modes[0].frequency_hz() == doctest::Approx(1.4).epsilon(1e-4));
}

TEST_CASE("accuracy at 20 dB matches or beats prony") {
  DetectorConfig c;
  double se_e = 0.0, se_p = 0.0;
  int n = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto w = testing::tone({Mode::from_hz(1.0, 0.1, 1.4, 0.3 * static_cast<double>(seed))});
    w.samples = synth::add_noise(w.samples, 20.0, seed);
    auto [nw, st] = preprocess::normalize(w);
    const auto e = ekf_detect(nw, c);
    const auto p = prony::prony_detect(nw, c);
    REQUIRE(e.oscillating());
    REQUIRE(p.oscillating());
    se_e += std::pow(e.modes[0].frequency_hz() - 1.4, 2);
    se_p += std::pow(p.modes[0].frequency_hz() - 1.4, 2);
    ++n;
  }
  MESSAGE("rmse ekf " << std::sqrt(se_e / n) << " prony " << std::sqrt(se_p / n));
  CHECK(se_e <= se_p);
}

TEST_CASE("white noise is rejected") {
  DetectorConfig c;
  testing::Gen g(66);
  int approvals = 0;
  const int trials = 500;
  for (int i = 0; i < trials; ++i) {
    auto [w, st] = preprocess::normalize(testing::window_of(g.noise(150)));
    approvals += ekf_detect(w, c).oscillating();
  }
  CHECK(approvals < trials / 100);
}

}  // TEST_SUITE
