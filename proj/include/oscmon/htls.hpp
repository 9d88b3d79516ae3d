#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "oscmon/core.hpp"
#include "oscmon/prony.hpp"

namespace oscmon::htls {

/// Truncated SVD of a Hankel matrix: the leading left singular vectors span
/// the signal subspace.
struct HankelDecomposition {
  Eigen::Index rows = 0;  // L
  Eigen::Index cols = 0;  // M = N + 1 - L
  Eigen::Index rank = 0;  // n
  Eigen::MatrixXd u_hat;  // L x n
  Eigen::VectorXd singular_values;  // all of them, nonincreasing
};

struct ShiftSolution {
  Eigen::MatrixXd z_tilde;  // n x n
  std::vector<prony::Complex> poles;
  std::vector<prony::PoleMode> modes;
};

/// Row count used for a window of `sample_count` samples: ceil(0.6 * count).
Eigen::Index hankel_rows(std::size_t sample_count);

/// H(i, j) = x(i + j), L x (count - L + 1).
Eigen::MatrixXd build_hankel(std::span<const double> samples);
Eigen::MatrixXd build_hankel(std::span<const double> samples, Eigen::Index rows);

/// Keeps singular values with s_i / s_1 >= tau, at most `max_rank` of them.
HankelDecomposition truncate_rank(const Eigen::MatrixXd& hankel, double tau = 0.05,
                                  Eigen::Index max_rank = 10);

/// Solves U_down * Z = U_up in least squares and returns the eigenvalues of Z.
ShiftSolution shift_solve(const Eigen::MatrixXd& u_hat, double sample_rate);
ShiftSolution shift_solve(const HankelDecomposition& decomp, double sample_rate);

DetectionResult htls_detect(const ChannelWindow& window, const DetectorConfig& config);

}  // namespace oscmon::htls
