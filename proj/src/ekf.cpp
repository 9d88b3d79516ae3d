#include "oscmon/ekf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace oscmon::ekf {
namespace {

// Candidate peaks must also reach this fraction of the strongest peak, which
// keeps window side lobes of a clean tone out of the candidate list.
constexpr double kRelativePeakFloor = 0.1;
constexpr double kConvergenceTail = 0.2;
constexpr double kConvergenceSpread = 0.01;

double hann(std::size_t k, std::size_t n) {
  if (n < 2) return 1.0;
  return 0.5 * (1.0 - std::cos(kTwoPi * static_cast<double>(k) / static_cast<double>(n - 1)));
}

std::complex<double> weighted_dft(std::span<const double> x, double fs, double f) {
  const double step = kTwoPi * f / fs;
  const std::complex<double> rot(std::cos(step), -std::sin(step));
  std::complex<double> ph(1.0, 0.0);
  std::complex<double> acc(0.0, 0.0);
  for (std::size_t k = 0; k < x.size(); ++k) {
    acc += hann(k, x.size()) * x[k] * ph;
    ph *= rot;
  }
  return acc;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

void require_finite(const EkfState& s) {
  if (!s.x.allFinite() || !s.P.allFinite()) {
    throw Error(ErrorKind::Divergence, "ekf: non-finite state or covariance");
  }
  for (int l = 0; l < s.modes; ++l) {
    if (!(s.omega(l) > 0.0)) throw Error(ErrorKind::Divergence, "ekf: omega left (0, inf)");
  }
}

}  // namespace

EkfState EkfState::zeros(int modes, int channels, double sample_rate) {
  EkfState s;
  s.modes = modes;
  s.channels = channels;
  s.sample_rate = sample_rate;
  const Eigen::Index n = 2 * modes + 2 * modes * channels;
  s.x = Eigen::VectorXd::Zero(n);
  s.P = Eigen::MatrixXd::Zero(n, n);
  s.Q = Eigen::MatrixXd::Zero(n, n);
  s.R = Eigen::MatrixXd::Zero(channels, channels);
  return s;
}

Eigen::VectorXd transition(const EkfState& s, const Eigen::VectorXd& x) {
  Eigen::VectorXd out = x;
  const double dt = 1.0 / s.sample_rate;
  for (int l = 0; l < s.modes; ++l) {
    const double a = std::exp(-x(s.sigma_index(l)) * dt);
    const double c = std::cos(x(s.omega_index(l)) * dt);
    const double sn = std::sin(x(s.omega_index(l)) * dt);
    for (int m = 0; m < s.channels; ++m) {
      const double re = x(s.re_index(l, m));
      const double im = x(s.im_index(l, m));
      out(s.re_index(l, m)) = a * (c * re - sn * im);
      out(s.im_index(l, m)) = a * (sn * re + c * im);
    }
  }
  return out;
}

Eigen::MatrixXd transition_jacobian(const EkfState& s, const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd f = Eigen::MatrixXd::Identity(n, n);
  const double dt = 1.0 / s.sample_rate;
  for (int l = 0; l < s.modes; ++l) {
    const auto wi = s.omega_index(l);
    const auto si = s.sigma_index(l);
    const double a = std::exp(-x(si) * dt);
    const double c = std::cos(x(wi) * dt);
    const double sn = std::sin(x(wi) * dt);
    for (int m = 0; m < s.channels; ++m) {
      const auto ri = s.re_index(l, m);
      const auto ii = s.im_index(l, m);
      const double re = x(ri);
      const double im = x(ii);
      const double re_next = a * (c * re - sn * im);
      const double im_next = a * (sn * re + c * im);
      f(ri, ri) = a * c;
      f(ri, ii) = -a * sn;
      f(ii, ri) = a * sn;
      f(ii, ii) = a * c;
      f(ri, wi) = -dt * im_next;
      f(ii, wi) = dt * re_next;
      f(ri, si) = -dt * re_next;
      f(ii, si) = -dt * im_next;
    }
  }
  return f;
}

Eigen::MatrixXd observation_matrix(const EkfState& s) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(s.channels, s.dim());
  for (int m = 0; m < s.channels; ++m) {
    for (int l = 0; l < s.modes; ++l) h(m, s.re_index(l, m)) = 1.0;
  }
  return h;
}

Spectrum band_spectrum(std::span<const double> samples, double fs, double f_min, double f_max) {
  Spectrum sp;
  if (samples.size() < 2) return sp;
  const double df = fs / (4.0 * static_cast<double>(samples.size()));
  for (double f = f_min; f <= f_max + 1e-12; f += df) {
    sp.freqs.push_back(f);
    sp.magnitude.push_back(std::abs(weighted_dft(samples, fs, f)));
  }
  return sp;
}

std::complex<double> dft_amplitude(std::span<const double> samples, double fs, double freq_hz) {
  double wsum = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) wsum += hann(k, samples.size());
  if (wsum == 0.0) return {};
  // X(f) ~ (A/2) e^{j phi} sum(w); the conjugate term is off-peak.
  return 2.0 * weighted_dft(samples, fs, freq_hz) / wsum;
}

std::vector<double> fft_trigger(const ChannelWindow& window, const DetectorConfig& config) {
  // Without the mean a constant window has an all-zero spectrum instead of
  // rounding noise that can poke above the floor.
  std::vector<double> centred(window.samples.begin(), window.samples.end());
  if (!centred.empty()) {
    const double mean = std::accumulate(centred.begin(), centred.end(), 0.0) / static_cast<double>(centred.size());
    for (auto& v : centred) v -= mean;
  }
  const auto sp = band_spectrum(centred, window.sample_rate, config.freq_min, config.freq_max);
  const auto& mag = sp.magnitude;
  if (mag.size() < 3) return {};
  const double floor = config.trigger_factor * median(mag);

  struct Peak {
    double freq;
    double mag;
  };
  std::vector<Peak> peaks;
  for (std::size_t i = 1; i + 1 < mag.size(); ++i) {
    if (!(mag[i] > mag[i - 1] && mag[i] >= mag[i + 1])) continue;
    if (mag[i] < floor) continue;
    // Parabolic refinement of the peak location on the grid.
    const double a = mag[i - 1], b = mag[i], c = mag[i + 1];
    const double denom = a - 2.0 * b + c;
    const double shift = denom != 0.0 ? 0.5 * (a - c) / denom : 0.0;
    const double df = sp.freqs[1] - sp.freqs[0];
    peaks.push_back({sp.freqs[i] + std::clamp(shift, -0.5, 0.5) * df, b});
  }
  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& p, const Peak& q) { return p.mag > q.mag; });
  std::vector<double> out;
  for (const auto& p : peaks) {
    if (static_cast<int>(out.size()) >= config.trigger_max_candidates) break;
    if (p.mag < kRelativePeakFloor * peaks.front().mag) break;
    out.push_back(p.freq);
  }
  return out;
}

EkfState ekf_init(const ChannelWindow& window, std::span<const double> candidates_hz,
                  const DetectorConfig& config) {
  if (candidates_hz.empty()) {
    throw Error(ErrorKind::TriggerMissing, "ekf_init: no trigger candidates");
  }
  const int modes = static_cast<int>(candidates_hz.size());
  auto s = EkfState::zeros(modes, 1, window.sample_rate);
  const double dt = 1.0 / window.sample_rate;
  for (int l = 0; l < modes; ++l) {
    const double f = candidates_hz[static_cast<std::size_t>(l)];
    const double omega = kTwoPi * f;
    s.x(s.omega_index(l)) = omega;
    s.x(s.sigma_index(l)) = 0.0;
    // Back off one sample so the first prediction lands on k = 0.
    const auto z0 = dft_amplitude(window.samples, window.sample_rate, f);
    const auto z = z0 * std::polar(1.0, -omega * dt);
    s.x(s.re_index(l, 0)) = z.real();
    s.x(s.im_index(l, 0)) = z.imag();

    s.P(s.omega_index(l), s.omega_index(l)) = config.ekf_p0_omega;
    s.P(s.sigma_index(l), s.sigma_index(l)) = config.ekf_p0_sigma;
    s.Q(s.omega_index(l), s.omega_index(l)) = config.ekf_q_parameter;
    s.Q(s.sigma_index(l), s.sigma_index(l)) = config.ekf_q_parameter;
    for (auto i : {s.re_index(l, 0), s.im_index(l, 0)}) {
      s.P(i, i) = config.ekf_p0_amplitude;
      s.Q(i, i) = config.ekf_q_oscillatory;
    }
  }
  s.R(0, 0) = config.ekf_r;
  return s;
}

Eigen::VectorXd ekf_step(EkfState& s, std::span<const double> y) {
  if (static_cast<int>(y.size()) != s.channels) {
    throw Error(ErrorKind::InvalidArgument, "ekf_step: measurement size mismatch");
  }
  const Eigen::MatrixXd f = transition_jacobian(s, s.x);
  s.x = transition(s, s.x);
  s.P = f * s.P * f.transpose() + s.Q;

  const Eigen::MatrixXd h = observation_matrix(s);
  const Eigen::Map<const Eigen::VectorXd> meas(y.data(), static_cast<Eigen::Index>(y.size()));
  const Eigen::VectorXd innovation = meas - h * s.x;
  const Eigen::MatrixXd pht = s.P * h.transpose();
  const Eigen::MatrixXd innov_cov = h * pht + s.R;
  const Eigen::MatrixXd gain = innov_cov.ldlt().solve(pht.transpose()).transpose();
  s.x += gain * innovation;

  // Joseph form, then explicit symmetrization.
  const Eigen::MatrixXd ikh = Eigen::MatrixXd::Identity(s.dim(), s.dim()) - gain * h;
  s.P = ikh * s.P * ikh.transpose() + gain * s.R * gain.transpose();
  s.P = 0.5 * (s.P + s.P.transpose()).eval();

  if (!innovation.allFinite()) throw Error(ErrorKind::Divergence, "ekf: non-finite innovation");
  require_finite(s);
  return innovation;
}

double ekf_step(EkfState& s, double y) {
  return ekf_step(s, std::span<const double>(&y, 1))(0);
}

Track run_track(const ChannelWindow& window, EkfState init, const StepObserver& observer) {
  Track t;
  t.final_state = std::move(init);
  auto& s = t.final_state;
  const std::size_t n = window.samples.size();
  const std::size_t mid = n / 2;
  t.omega_history.assign(static_cast<std::size_t>(s.modes), {});
  std::vector<std::complex<double>> mid_phasor(static_cast<std::size_t>(s.modes));

  for (std::size_t k = 0; k < n; ++k) {
    t.innovations.push_back(ekf_step(s, window.samples[k]));
    if (observer) observer(s);
    for (int l = 0; l < s.modes; ++l) {
      t.omega_history[static_cast<std::size_t>(l)].push_back(s.omega(l));
      if (k == mid) mid_phasor[static_cast<std::size_t>(l)] = s.phasor(l);
    }
  }

  const double fs = window.sample_rate;
  const auto tail_begin = static_cast<std::size_t>(std::floor((1.0 - kConvergenceTail) * static_cast<double>(n)));
  for (int l = 0; l < s.modes; ++l) {
    const auto& hist = t.omega_history[static_cast<std::size_t>(l)];
    const std::span<const double> tail(hist.begin() + static_cast<std::ptrdiff_t>(tail_begin), hist.end());
    const double mean = std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(tail.size());
    double var = 0.0;
    for (double w : tail) var += (w - mean) * (w - mean);
    const double spread = std::sqrt(var / static_cast<double>(tail.size()));
    const bool ok = mean > 0.0 && spread < kConvergenceSpread * mean;
    t.converged.push_back(ok);
    if (!ok) continue;

    const double sigma = s.sigma(l);
    const double omega = s.omega(l);
    const double amplitude =
        std::abs(mid_phasor[static_cast<std::size_t>(l)]) * std::exp(sigma * static_cast<double>(mid) / fs);
    // Phasor at the window start, propagated back from the final estimate.
    const double back = static_cast<double>(n - 1) / fs;
    const auto z0 = s.phasor(l) * std::exp(std::complex<double>(sigma * back, -omega * back));
    t.modes.push_back(Mode{amplitude, sigma, omega, wrap_phase(std::arg(z0))});
  }
  return t;
}

DetectionResult ekf_detect(const ChannelWindow& window, const DetectorConfig& config) {
  return ekf_detect(window, config, {});
}

DetectionResult ekf_detect(const ChannelWindow& window, const DetectorConfig& config,
                           const StepObserver& observer) {
  const auto candidates = fft_trigger(window, config);
  if (candidates.empty()) {
    return make_result(window, DetectorKind::Ekf, {}, "trigger-missing");
  }
  try {
    auto track = run_track(window, ekf_init(window, candidates, config), observer);
    for (int pass = 0; pass < config.ekf_refine_passes; ++pass) {
      // Re-seed from the previous pass; the innovation level over its second
      // half stands in for the measurement noise.
      const auto& prev = track.final_state;
      std::vector<double> freqs;
      for (int l = 0; l < prev.modes; ++l) freqs.push_back(prev.omega(l) / kTwoPi);
      auto seed = ekf_init(window, freqs, config);
      for (int l = 0; l < prev.modes; ++l) seed.x(seed.sigma_index(l)) = prev.sigma(l);
      const std::size_t half = track.innovations.size() / 2;
      double ms = 0.0;
      for (std::size_t k = half; k < track.innovations.size(); ++k) {
        ms += track.innovations[k] * track.innovations[k];
      }
      ms /= static_cast<double>(std::max<std::size_t>(1, track.innovations.size() - half));
      seed.R(0, 0) = std::max(config.ekf_r, ms);
      track = run_track(window, std::move(seed), observer);
    }
    const bool any = std::any_of(track.converged.begin(), track.converged.end(), [](bool b) { return b; });
    auto kept = screen_modes(track.modes, config, window.duration_seconds());
    return make_result(window, DetectorKind::Ekf, keep_significant(window, std::move(kept), config),
                       any ? std::string{} : "not-converged");
  } catch (const Error& e) {
    return make_result(window, DetectorKind::Ekf, {}, e.what());
  }
}

}  // namespace oscmon::ekf
