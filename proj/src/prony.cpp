#include "oscmon/prony.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace oscmon::prony {
namespace {

constexpr double kMinOmega = 1e-6;
constexpr double kCoincidentPoles = 1e-9;

}  // namespace

LpSystem build_lp_system(std::span<const double> samples, int order) {
  const auto n = static_cast<Eigen::Index>(order);
  const auto count = static_cast<Eigen::Index>(samples.size());
  if (order < 1 || count < 2 * n + 1) {
    throw Error(ErrorKind::InsufficientData,
                "build_lp_system: need N >= 2n+1 (N=" + std::to_string(count) +
                    ", n=" + std::to_string(order) + ")");
  }
  LpSystem sys;
  sys.matrix.resize(count - n, n);
  sys.rhs.resize(count - n);
  for (Eigen::Index r = 0; r < count - n; ++r) {
    for (Eigen::Index i = 0; i < n; ++i) sys.matrix(r, i) = samples[static_cast<std::size_t>(n - 1 - i + r)];
    sys.rhs(r) = samples[static_cast<std::size_t>(n + r)];
  }
  return sys;
}

LpSolution solve_lp(const Eigen::MatrixXd& matrix, const Eigen::VectorXd& rhs) {
  if (matrix.size() == 0 || matrix.cwiseAbs().maxCoeff() == 0.0) {
    throw Error(ErrorKind::NumericalDegeneracy, "solve_lp: all-zero coefficient matrix");
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
  cod.setThreshold(1e-10);
  cod.compute(matrix);
  LpSolution sol;
  sol.coeffs = cod.solve(rhs);
  sol.residual_norm = (matrix * sol.coeffs - rhs).norm();
  sol.rank = cod.rank();
  if (!sol.coeffs.allFinite()) {
    throw Error(ErrorKind::NumericalDegeneracy, "solve_lp: non-finite solution");
  }
  return sol;
}

std::vector<Complex> polynomial_roots(const Eigen::VectorXd& lp_coeffs) {
  const auto n = lp_coeffs.size();
  if (n == 0) return {};
  if (!lp_coeffs.allFinite()) {
    throw Error(ErrorKind::NumericalDegeneracy, "polynomial_roots: non-finite coefficients");
  }
  if (n == 1) return {Complex(lp_coeffs(0), 0.0)};
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
  companion.row(0) = lp_coeffs.transpose();
  companion.diagonal(-1).setOnes();
  Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorKind::NumericalDegeneracy, "polynomial_roots: eigenvalue iteration failed");
  }
  const auto& ev = es.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

std::vector<PoleMode> poles_to_modes(std::span<const Complex> poles, double sample_rate,
                                     int* discarded) {
  std::vector<PoleMode> out;
  int dropped = 0;
  for (const auto& z : poles) {
    if (std::abs(z) == 0.0) {
      ++dropped;
      continue;
    }
    if (!(z.imag() > 0.0)) continue;
    const Complex lambda = sample_rate * std::log(z);
    const double omega = std::abs(lambda.imag());
    if (omega < kMinOmega) continue;
    out.push_back({z, -lambda.real(), omega});
  }
  if (discarded) *discarded = dropped;
  return out;
}

std::vector<PoleMode> roots_to_modes(const Eigen::VectorXd& lp_coeffs, double sample_rate,
                                     int* discarded) {
  const auto roots = polynomial_roots(lp_coeffs);
  return poles_to_modes(roots, sample_rate, discarded);
}

ResidueFit solve_residues(std::span<const double> samples, std::span<const Complex> poles) {
  if (poles.empty()) throw Error(ErrorKind::InvalidArgument, "solve_residues: no poles");
  const auto rows = static_cast<Eigen::Index>(samples.size());
  const auto cols = static_cast<Eigen::Index>(poles.size());
  Eigen::MatrixXcd v(rows, cols);
  Eigen::VectorXd scale(cols);
  for (Eigen::Index i = 0; i < cols; ++i) {
    Complex p(1.0, 0.0);
    const Complex z = poles[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < rows; ++k) {
      v(k, i) = p;
      p *= z;
    }
    scale(i) = v.col(i).norm();
    if (!(scale(i) > 0.0) || !std::isfinite(scale(i))) {
      throw Error(ErrorKind::NumericalDegeneracy, "solve_residues: degenerate pole column");
    }
    v.col(i) /= scale(i);
  }
  Eigen::VectorXcd y(rows);
  for (Eigen::Index k = 0; k < rows; ++k) y(k) = samples[static_cast<std::size_t>(k)];

  Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(v);
  const Eigen::VectorXcd r = qr.solve(y);

  ResidueFit fit;
  const auto diag = qr.matrixQR().diagonal().cwiseAbs();
  fit.condition_number = diag.minCoeff() > 0.0 ? diag.maxCoeff() / diag.minCoeff()
                                               : std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poles.size(); ++i) {
    for (std::size_t j = i + 1; j < poles.size(); ++j) {
      if (std::abs(poles[i] - poles[j]) < kCoincidentPoles) fit.ill_conditioned = true;
    }
  }
  fit.residues.resize(poles.size());
  for (Eigen::Index i = 0; i < cols; ++i) {
    fit.residues[static_cast<std::size_t>(i)] = r(i) / scale(i);
  }
  return fit;
}

std::vector<Mode> assemble_modes(std::span<const Complex> poles, std::span<const Complex> residues,
                                 double sample_rate) {
  std::vector<Mode> modes;
  for (std::size_t i = 0; i < poles.size(); ++i) {
    const Complex z = poles[i];
    if (!(z.imag() > 0.0) || std::abs(z) == 0.0) continue;
    const Complex lambda = sample_rate * std::log(z);
    const double omega = std::abs(lambda.imag());
    if (omega < kMinOmega) continue;
    const Complex r = residues[i];
    modes.push_back(Mode{2.0 * std::abs(r), -lambda.real(), omega, wrap_phase(std::arg(r))});
  }
  return modes;
}

std::vector<Mode> refit_band_modes(std::span<const double> samples, std::span<const Complex> poles,
                                   double sample_rate, const DetectorConfig& config) {
  std::vector<Complex> kept;
  for (const auto& pm : poles_to_modes(poles, sample_rate)) {
    const double f = pm.omega / kTwoPi;
    if (f < config.freq_min || f > config.freq_max) continue;
    kept.push_back(pm.pole);
    kept.push_back(std::conj(pm.pole));
  }
  if (kept.empty()) return {};
  const auto fit = solve_residues(samples, kept);
  return assemble_modes(kept, fit.residues, sample_rate);
}

int default_order(std::size_t sample_count, int cap) {
  const int by_length = static_cast<int>(sample_count / 3);
  return std::max(1, std::min(by_length, cap));
}

PronyModel fit(std::span<const double> samples, double sample_rate, int order) {
  PronyModel model;
  model.order = order;
  const auto sys = build_lp_system(samples, order);
  auto sol = solve_lp(sys.matrix, sys.rhs);
  model.lp_coeffs = std::move(sol.coeffs);
  model.lp_residual = sol.residual_norm;
  for (const auto& z : polynomial_roots(model.lp_coeffs)) {
    if (std::abs(z) == 0.0) continue;
    model.poles.push_back(z);
  }
  if (model.poles.empty()) {
    throw Error(ErrorKind::NumericalDegeneracy, "prony: every root is zero");
  }
  model.residues = solve_residues(samples, model.poles).residues;
  for (const auto& z : model.poles) model.exponents.push_back(sample_rate * std::log(z));
  return model;
}

DetectionResult prony_detect(const ChannelWindow& window, const DetectorConfig& config) {
  try {
    const int order = default_order(window.samples.size(), config.prony_max_order);
    const auto model = fit(window.samples, window.sample_rate, order);
    auto modes = config.refit_residues
                     ? refit_band_modes(window.samples, model.poles, window.sample_rate, config)
                     : assemble_modes(model.poles, model.residues, window.sample_rate);
    return make_result(window, DetectorKind::Prony, screen_modes(modes, config, window.duration_seconds()));
  } catch (const Error& e) {
    return make_result(window, DetectorKind::Prony, {}, e.what());
  }
}

}  // namespace oscmon::prony
