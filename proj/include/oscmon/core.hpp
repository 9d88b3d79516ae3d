#pragma once

#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace oscmon {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

enum class ErrorKind {
  InvalidMode,
  InvalidArgument,
  InsufficientData,
  NumericalDegeneracy,
  FlatChannel,
  UndefinedSnr,
  TriggerMissing,
  Divergence,
  Sequencing,
  Parse,
  Storage,
  InvalidConfig,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// One damped sinusoid: A * exp(-sigma t) * cos(omega t + phase), t measured
/// from the start of the analysed window.
struct Mode {
  double amplitude = 0.0;
  double damping_factor = 0.0;     // 1/s, positive decays
  double angular_frequency = 0.0;  // rad/s
  double phase = 0.0;              // rad, (-pi, pi]

  double frequency_hz() const { return angular_frequency / kTwoPi; }
  static Mode from_hz(double amplitude, double sigma, double freq_hz,
                      double phase = 0.0) {
    return Mode{amplitude, sigma, kTwoPi * freq_hz, phase};
  }
};

/// zeta = sigma / sqrt(sigma^2 + omega^2). Negative for growing modes.
double damping_ratio(const Mode& mode);

/// |f_a - f_b| <= rel_tol * min(f_a, f_b).
bool modes_match(const Mode& a, const Mode& b, double rel_tol);

bool freqs_match(double fa, double fb, double rel_tol);

/// Wraps an angle into (-pi, pi].
double wrap_phase(double phase);

enum class Quality { Ok, Stale, Flat, Gapped, Invalid };
const char* to_string(Quality q);

struct ChannelWindow {
  std::string channel_id;
  std::int64_t start_time = 0;  // ms since epoch
  double sample_rate = 0.0;
  std::vector<double> samples;
  Quality quality = Quality::Ok;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

struct FieldError {
  std::string field;
  std::string message;
};

struct DetectorConfig {
  double freq_min = 0.1;
  double freq_max = 2.5;
  double sensitivity = 0.03;
  double amplitude_threshold = 0.2;
  double damping_ratio_alarm = 0.05;
  int ts_filter_depth = 2;
  double window_seconds = 5.0;
  double stride_seconds = 1.0;

  // Detector internals.
  double strong_damping_ratio_max = 0.3;  // ceiling for the strong-mode branch
  int prony_max_order = 24;
  bool refit_residues = true;
  // Verification floor for the second and third voters, see mode_significance.
  double min_mode_significance = 30.0;
  double htls_rank_tau = 0.05;
  int htls_max_modes = 5;
  double trigger_factor = 4.0;
  int trigger_max_candidates = 3;
  double ekf_q_oscillatory = 1e-6;
  double ekf_q_parameter = 1e-8;
  double ekf_r = 1e-2;
  double ekf_p0_amplitude = 1.0;
  double ekf_p0_omega = (kTwoPi * 0.1) * (kTwoPi * 0.1);
  double ekf_p0_sigma = 1.0;
  int ekf_refine_passes = 1;
  double classification_boundary_hz = 0.8;
  int threads = 0;  // 0 = hardware concurrency

  std::vector<FieldError> validate() const;
  bool operator==(const DetectorConfig&) const = default;
};

enum class Verdict { NoOscillation, Oscillation };
const char* to_string(Verdict v);

enum class DetectorKind : std::uint8_t { Prony = 1, Htls = 2, Ekf = 4 };
const char* to_string(DetectorKind d);

/// Small bit set over DetectorKind.
class DetectorSet {
 public:
  void insert(DetectorKind d) { bits_ |= static_cast<std::uint8_t>(d); }
  bool contains(DetectorKind d) const {
    return (bits_ & static_cast<std::uint8_t>(d)) != 0;
  }
  bool empty() const { return bits_ == 0; }
  DetectorSet& operator|=(DetectorSet o) {
    bits_ |= o.bits_;
    return *this;
  }
  std::vector<DetectorKind> list() const;
  bool operator==(const DetectorSet&) const = default;

 private:
  std::uint8_t bits_ = 0;
};

struct DetectionResult {
  std::string channel_id;
  std::int64_t start_time = 0;
  Verdict verdict = Verdict::NoOscillation;
  std::vector<Mode> modes;
  DetectorSet detectors_run;
  std::string diagnostic;

  bool oscillating() const { return verdict == Verdict::Oscillation; }
};

/// Builds a result whose verdict follows from whether any mode survived.
DetectionResult make_result(const ChannelWindow& window, DetectorKind by,
                            std::vector<Mode> modes, std::string diagnostic = {});

/// Amplitude of the undamped sinusoid carrying the same energy as `mode`
/// over a window of `window_seconds`: A * sqrt(mean of exp(-2 sigma t)).
double window_amplitude(const Mode& mode, double window_seconds);

/// Mode screening shared by every detector: in-band, window amplitude above
/// the threshold, and either lightly damped or strong (3x threshold with
/// damping ratio under strong_damping_ratio_max).
/// Sorted by amplitude, largest first.
std::vector<Mode> screen_modes(const std::vector<Mode>& candidates,
                               const DetectorConfig& config, double window_seconds);

/// Energy captured by projecting the window onto the mode's damped cos/sin
/// pair alone, divided by the per-sample variance left over. Zero for a
/// degenerate basis.
double mode_significance(const ChannelWindow& window, const Mode& mode);

/// Keeps modes whose significance reaches config.min_mode_significance.
std::vector<Mode> keep_significant(const ChannelWindow& window, std::vector<Mode> modes,
                                   const DetectorConfig& config);

}  // namespace oscmon
