#include "oscmon/htls.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace oscmon::htls {

Eigen::Index hankel_rows(std::size_t sample_count) {
  return static_cast<Eigen::Index>(std::ceil(0.6 * static_cast<double>(sample_count)));
}

Eigen::MatrixXd build_hankel(std::span<const double> samples, Eigen::Index rows) {
  const auto count = static_cast<Eigen::Index>(samples.size());
  if (count < 4) {
    throw Error(ErrorKind::InsufficientData, "build_hankel: need at least 4 samples");
  }
  if (rows < 2 || rows >= count) {
    throw Error(ErrorKind::InvalidArgument, "build_hankel: row count out of range");
  }
  const Eigen::Index cols = count + 1 - rows;
  Eigen::MatrixXd h(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) h(i, j) = samples[static_cast<std::size_t>(i + j)];
  }
  return h;
}

Eigen::MatrixXd build_hankel(std::span<const double> samples) {
  return build_hankel(samples, std::min<Eigen::Index>(hankel_rows(samples.size()),
                                                      static_cast<Eigen::Index>(samples.size()) - 1));
}

HankelDecomposition truncate_rank(const Eigen::MatrixXd& hankel, double tau, Eigen::Index max_rank) {
  if (hankel.size() == 0 || hankel.cwiseAbs().maxCoeff() == 0.0) {
    throw Error(ErrorKind::NumericalDegeneracy, "truncate_rank: all-zero Hankel matrix");
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(hankel, Eigen::ComputeThinU);
  HankelDecomposition d;
  d.rows = hankel.rows();
  d.cols = hankel.cols();
  d.singular_values = svd.singularValues();
  const double s1 = d.singular_values(0);
  Eigen::Index n = 0;
  while (n < d.singular_values.size() && d.singular_values(n) >= tau * s1) ++n;
  n = std::min({n, max_rank, d.rows - 1, d.cols});
  d.rank = std::max<Eigen::Index>(n, 1);
  d.u_hat = svd.matrixU().leftCols(d.rank);
  return d;
}

ShiftSolution shift_solve(const Eigen::MatrixXd& u_hat, double sample_rate) {
  const Eigen::Index l = u_hat.rows();
  const Eigen::Index n = u_hat.cols();
  if (n < 1 || l < n + 1) {
    throw Error(ErrorKind::InvalidArgument, "shift_solve: need n >= 1 and L >= n + 1");
  }
  const Eigen::MatrixXd down = u_hat.topRows(l - 1);
  const Eigen::MatrixXd up = u_hat.bottomRows(l - 1);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
  cod.setThreshold(1e-12);
  cod.compute(down);
  if (cod.rank() < n) {
    throw Error(ErrorKind::NumericalDegeneracy, "shift_solve: rank-deficient shifted subspace");
  }
  ShiftSolution sol;
  sol.z_tilde = cod.solve(up);
  Eigen::EigenSolver<Eigen::MatrixXd> es(sol.z_tilde, false);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorKind::NumericalDegeneracy, "shift_solve: eigenvalue iteration failed");
  }
  const auto& ev = es.eigenvalues();
  sol.poles.assign(ev.data(), ev.data() + ev.size());
  sol.modes = prony::poles_to_modes(sol.poles, sample_rate);
  return sol;
}

ShiftSolution shift_solve(const HankelDecomposition& decomp, double sample_rate) {
  return shift_solve(decomp.u_hat, sample_rate);
}

DetectionResult htls_detect(const ChannelWindow& window, const DetectorConfig& config) {
  try {
    const auto h = build_hankel(window.samples);
    const auto decomp = truncate_rank(h, config.htls_rank_tau, 2 * config.htls_max_modes);
    const auto sol = shift_solve(decomp, window.sample_rate);
    std::vector<prony::Complex> poles;
    for (const auto& z : sol.poles) {
      if (std::abs(z) > 0.0) poles.push_back(z);
    }
    if (poles.empty()) return make_result(window, DetectorKind::Htls, {}, "no poles");
    std::vector<Mode> modes;
    if (config.refit_residues) {
      modes = prony::refit_band_modes(window.samples, poles, window.sample_rate, config);
    } else {
      const auto fit = prony::solve_residues(window.samples, poles);
      modes = prony::assemble_modes(poles, fit.residues, window.sample_rate);
    }
    return make_result(window, DetectorKind::Htls,
                       keep_significant(window, screen_modes(modes, config, window.duration_seconds()), config));
  } catch (const Error& e) {
    return make_result(window, DetectorKind::Htls, {}, e.what());
  }
}

}  // namespace oscmon::htls
