#include "oscmon/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oscmon {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidMode: return "invalid-mode";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::NumericalDegeneracy: return "numerical-degeneracy";
    case ErrorKind::FlatChannel: return "flat-channel";
    case ErrorKind::UndefinedSnr: return "undefined-snr";
    case ErrorKind::TriggerMissing: return "trigger-missing";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Sequencing: return "sequencing";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Storage: return "storage";
    case ErrorKind::InvalidConfig: return "invalid-config";
  }
  return "unknown";
}

double damping_ratio(const Mode& mode) {
  if (!(mode.angular_frequency > 0.0)) {
    throw Error(ErrorKind::InvalidMode, "damping_ratio: angular frequency must be positive");
  }
  const double s = mode.damping_factor;
  return s / std::hypot(s, mode.angular_frequency);
}

bool freqs_match(double fa, double fb, double rel_tol) {
  // The bound is inclusive; the slack keeps 1.00 vs 1.03 at 3% on the
  // matching side despite rounding in the subtraction.
  const double slack = 1e-12 * std::max(std::abs(fa), std::abs(fb));
  return std::abs(fa - fb) <= rel_tol * std::min(fa, fb) + slack;
}

bool modes_match(const Mode& a, const Mode& b, double rel_tol) {
  return freqs_match(a.frequency_hz(), b.frequency_hz(), rel_tol);
}

double wrap_phase(double phase) {
  double p = std::remainder(phase, kTwoPi);  // [-pi, pi]
  if (p <= -std::numbers::pi) p += kTwoPi;
  return p;
}

const char* to_string(Quality q) {
  switch (q) {
    case Quality::Ok: return "ok";
    case Quality::Stale: return "stale";
    case Quality::Flat: return "flat";
    case Quality::Gapped: return "gapped";
    case Quality::Invalid: return "invalid";
  }
  return "unknown";
}

const char* to_string(Verdict v) {
  return v == Verdict::Oscillation ? "oscillation" : "no_oscillation";
}

const char* to_string(DetectorKind d) {
  switch (d) {
    case DetectorKind::Prony: return "prony";
    case DetectorKind::Htls: return "htls";
    case DetectorKind::Ekf: return "ekf";
  }
  return "unknown";
}

std::vector<DetectorKind> DetectorSet::list() const {
  std::vector<DetectorKind> out;
  for (auto d : {DetectorKind::Prony, DetectorKind::Htls, DetectorKind::Ekf}) {
    if (contains(d)) out.push_back(d);
  }
  return out;
}

std::vector<FieldError> DetectorConfig::validate() const {
  std::vector<FieldError> errs;
  auto need = [&errs](bool ok, const char* field, const char* msg) {
    if (!ok) errs.push_back({field, msg});
  };
  need(std::isfinite(freq_min) && freq_min > 0.0, "freq_band", "f_min must be > 0");
  need(std::isfinite(freq_max) && freq_max > freq_min, "freq_band", "f_max must exceed f_min");
  need(sensitivity > 0.0 && sensitivity <= 1.0, "sensitivity", "must lie in (0, 1]");
  need(std::isfinite(amplitude_threshold) && amplitude_threshold >= 0.0,
       "amplitude_threshold", "must be >= 0");
  need(std::isfinite(damping_ratio_alarm), "damping_ratio_alarm", "must be finite");
  need(ts_filter_depth >= 1, "ts_filter_depth", "must be >= 1");
  need(std::isfinite(window_seconds) && window_seconds > 0.0, "window_seconds", "must be > 0");
  need(stride_seconds > 0.0 && stride_seconds <= window_seconds, "stride_seconds",
       "must lie in (0, window_seconds]");
  need(std::isfinite(strong_damping_ratio_max), "strong_damping_ratio_max", "must be finite");
  need(min_mode_significance >= 0.0, "min_mode_significance", "must be >= 0");
  need(prony_max_order >= 1, "prony_max_order", "must be >= 1");
  need(htls_rank_tau > 0.0 && htls_rank_tau <= 1.0, "htls_rank_tau", "must lie in (0, 1]");
  need(htls_max_modes >= 1, "htls_max_modes", "must be >= 1");
  need(trigger_factor > 0.0, "trigger_factor", "must be > 0");
  need(trigger_max_candidates >= 1, "trigger_max_candidates", "must be >= 1");
  need(ekf_q_oscillatory >= 0.0 && ekf_q_parameter >= 0.0, "ekf_q", "must be >= 0");
  need(ekf_r > 0.0, "ekf_r", "must be > 0");
  need(ekf_p0_amplitude > 0.0 && ekf_p0_omega > 0.0 && ekf_p0_sigma > 0.0, "ekf_p0",
       "must be > 0");
  need(ekf_refine_passes >= 0, "ekf_refine_passes", "must be >= 0");
  need(classification_boundary_hz > 0.0, "classification_boundary_hz", "must be > 0");
  need(threads >= 0, "threads", "must be >= 0");
  return errs;
}

DetectionResult make_result(const ChannelWindow& window, DetectorKind by,
                            std::vector<Mode> modes, std::string diagnostic) {
  DetectionResult r;
  r.channel_id = window.channel_id;
  r.start_time = window.start_time;
  r.verdict = modes.empty() ? Verdict::NoOscillation : Verdict::Oscillation;
  r.modes = std::move(modes);
  r.detectors_run.insert(by);
  r.diagnostic = std::move(diagnostic);
  return r;
}

double window_amplitude(const Mode& mode, double window_seconds) {
  const double x = 2.0 * mode.damping_factor * window_seconds;
  const double gain = std::abs(x) < 1e-12 ? 1.0 : -std::expm1(-x) / x;
  return mode.amplitude * std::sqrt(gain);
}

std::vector<Mode> screen_modes(const std::vector<Mode>& candidates,
                               const DetectorConfig& config, double window_seconds) {
  std::vector<Mode> kept;
  for (const auto& m : candidates) {
    if (!(m.angular_frequency > 0.0) || !std::isfinite(m.amplitude)) continue;
    const double f = m.frequency_hz();
    if (f < config.freq_min || f > config.freq_max) continue;
    const double amp = window_amplitude(m, window_seconds);
    if (!(amp >= config.amplitude_threshold)) continue;
    const double zeta = damping_ratio(m);
    const bool light = zeta < config.damping_ratio_alarm;
    const bool strong = amp >= 3.0 * config.amplitude_threshold && zeta < config.strong_damping_ratio_max;
    if (light || strong) kept.push_back(m);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const Mode& a, const Mode& b) { return a.amplitude > b.amplitude; });
  return kept;
}

double mode_significance(const ChannelWindow& window, const Mode& mode) {
  double cc = 0.0, ss = 0.0, cs = 0.0, yc = 0.0, ys = 0.0, yy = 0.0;
  const std::size_t n = window.samples.size();
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / window.sample_rate;
    const double env = std::exp(-mode.damping_factor * t);
    const double c = env * std::cos(mode.angular_frequency * t);
    const double s = env * std::sin(mode.angular_frequency * t);
    const double y = window.samples[k];
    cc += c * c;
    ss += s * s;
    cs += c * s;
    yc += y * c;
    ys += y * s;
    yy += y * y;
  }
  const double det = cc * ss - cs * cs;
  if (!(det > 1e-12 * cc * ss) || !std::isfinite(det)) return 0.0;
  const double a = (yc * ss - ys * cs) / det;
  const double b = (ys * cc - yc * cs) / det;
  const double captured = a * yc + b * ys;
  const double left = (yy - captured) / static_cast<double>(n);
  if (!(left > 0.0)) return std::numeric_limits<double>::infinity();
  return captured / left;
}

std::vector<Mode> keep_significant(const ChannelWindow& window, std::vector<Mode> modes,
                                   const DetectorConfig& config) {
  std::erase_if(modes, [&](const Mode& m) {
    return !(mode_significance(window, m) >= config.min_mode_significance);
  });
  return modes;
}

}  // namespace oscmon
