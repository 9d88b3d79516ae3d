#pragma once

#include <complex>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "oscmon/core.hpp"

namespace oscmon::ekf {

/// Extended Kalman filter state for L modes observed on M channels.
///
/// Layout of `x`: [omega_0, sigma_0, ..., omega_{L-1}, sigma_{L-1}] followed
/// by one (re, im) pair per (mode, channel). The pair is the complex phasor
/// z[k] = A exp((-sigma + j omega) k / fs) exp(j phi); its real part is the
/// mode's contribution to the channel, so one step of the model is a complex
/// rotation-and-decay and the observation is the sum of real parts.
struct EkfState {
  int modes = 0;
  int channels = 1;
  double sample_rate = 0.0;
  Eigen::VectorXd x;
  Eigen::MatrixXd P;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;

  static EkfState zeros(int modes, int channels, double sample_rate);

  Eigen::Index dim() const { return x.size(); }
  Eigen::Index omega_index(int l) const { return 2 * l; }
  Eigen::Index sigma_index(int l) const { return 2 * l + 1; }
  Eigen::Index re_index(int l, int m) const { return 2 * modes + 2 * (l * channels + m); }
  Eigen::Index im_index(int l, int m) const { return re_index(l, m) + 1; }

  double omega(int l) const { return x(omega_index(l)); }
  double sigma(int l) const { return x(sigma_index(l)); }
  std::complex<double> phasor(int l, int m = 0) const {
    return {x(re_index(l, m)), x(im_index(l, m))};
  }
};

/// Model transition f(x).
Eigen::VectorXd transition(const EkfState& state, const Eigen::VectorXd& x);
/// Analytic Jacobian of f at x.
Eigen::MatrixXd transition_jacobian(const EkfState& state, const Eigen::VectorXd& x);
/// Observation selector: row m sums the real parts of every mode on channel m.
Eigen::MatrixXd observation_matrix(const EkfState& state);

/// Hann-tapered DFT magnitude on a 4x-refined grid over the frequency band.
struct Spectrum {
  std::vector<double> freqs;
  std::vector<double> magnitude;
};
Spectrum band_spectrum(std::span<const double> samples, double sample_rate, double f_min,
                       double f_max);

/// Complex amplitude A exp(j phi) of a component at `freq_hz`, from the
/// Hann-weighted DFT.
std::complex<double> dft_amplitude(std::span<const double> samples, double sample_rate,
                                   double freq_hz);

/// In-band spectral peaks at least trigger_factor x the in-band median,
/// strongest first, at most trigger_max_candidates.
std::vector<double> fft_trigger(const ChannelWindow& window, const DetectorConfig& config);

/// Single-channel initialization from trigger candidates. The returned state
/// is positioned one sample before the window so that the first predict lands
/// on sample 0. Throws Error(TriggerMissing) for an empty candidate list.
EkfState ekf_init(const ChannelWindow& window, std::span<const double> candidates_hz,
                  const DetectorConfig& config);

/// One predict + update cycle. Returns the innovation vector (size M).
/// Throws Error(Divergence) on non-finite values or a non-positive omega.
Eigen::VectorXd ekf_step(EkfState& state, std::span<const double> y);
double ekf_step(EkfState& state, double y);

struct Track {
  EkfState final_state;
  std::vector<std::vector<double>> omega_history;  // [mode][k]
  std::vector<double> innovations;
  std::vector<bool> converged;                     // per mode
  std::vector<Mode> modes;                         // converged modes, unscreened
};

/// Called with the state after every ekf_step.
using StepObserver = std::function<void(const EkfState&)>;

/// Runs the filter over the whole window starting from `init`.
Track run_track(const ChannelWindow& window, EkfState init, const StepObserver& observer = {});

DetectionResult ekf_detect(const ChannelWindow& window, const DetectorConfig& config);
DetectionResult ekf_detect(const ChannelWindow& window, const DetectorConfig& config,
                           const StepObserver& observer);

}  // namespace oscmon::ekf
