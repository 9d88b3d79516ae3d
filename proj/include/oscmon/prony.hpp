#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oscmon/core.hpp"

namespace oscmon::prony {

using Complex = std::complex<double>;

/// Linear-prediction system y(n+r) = sum_i a_i y(n-i+r), r = 0..N-n-1.
struct LpSystem {
  Eigen::MatrixXd matrix;  // (N-n) x n
  Eigen::VectorXd rhs;     // N-n
};

struct LpSolution {
  Eigen::VectorXd coeffs;
  double residual_norm = 0.0;
  Eigen::Index rank = 0;
};

/// A discrete pole with its continuous-time damping and frequency.
struct PoleMode {
  Complex pole;
  double sigma = 0.0;  // -Re(fs ln z)
  double omega = 0.0;  // |Im(fs ln z)|
};

struct ResidueFit {
  std::vector<Complex> residues;
  double condition_number = 0.0;
  bool ill_conditioned = false;
};

struct PronyModel {
  int order = 0;
  Eigen::VectorXd lp_coeffs;
  std::vector<Complex> poles;
  std::vector<Complex> residues;
  std::vector<Complex> exponents;  // fs * ln(z), principal branch
  double lp_residual = 0.0;
};

LpSystem build_lp_system(std::span<const double> samples, int order);

/// Minimum-norm least-squares solve through a rank-revealing complete
/// orthogonal decomposition.
LpSolution solve_lp(const Eigen::MatrixXd& matrix, const Eigen::VectorXd& rhs);

/// Roots of z^n - (a_1 z^{n-1} + ... + a_n) from companion-matrix eigenvalues.
std::vector<Complex> polynomial_roots(const Eigen::VectorXd& lp_coeffs);

/// Maps poles to (sigma, omega), keeping the upper member of each conjugate
/// pair and dropping real poles. Zero poles are skipped and counted in
/// `discarded` when given.
std::vector<PoleMode> poles_to_modes(std::span<const Complex> poles, double sample_rate,
                                     int* discarded = nullptr);

std::vector<PoleMode> roots_to_modes(const Eigen::VectorXd& lp_coeffs, double sample_rate,
                                     int* discarded = nullptr);

/// Least-squares residues of the Vandermonde system y(k) = sum_i R_i z_i^k.
ResidueFit solve_residues(std::span<const double> samples, std::span<const Complex> poles);

/// Collapses conjugate pairs into real modes: A = 2|R|, phase = arg R.
std::vector<Mode> assemble_modes(std::span<const Complex> poles, std::span<const Complex> residues,
                                 double sample_rate);

/// Second pass: keeps the poles whose frequency lies in the configured band
/// and re-solves residues with only those poles (and their conjugates), so
/// amplitudes are not inflated by cancelling out-of-band poles.
std::vector<Mode> refit_band_modes(std::span<const double> samples, std::span<const Complex> poles,
                                   double sample_rate, const DetectorConfig& config);

int default_order(std::size_t sample_count, int cap = 24);

PronyModel fit(std::span<const double> samples, double sample_rate, int order);

/// Full Prony detection on one normalized, ok-quality window.
DetectionResult prony_detect(const ChannelWindow& window, const DetectorConfig& config);

}  // namespace oscmon::prony
