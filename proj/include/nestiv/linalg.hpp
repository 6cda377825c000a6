#pragma once

#include <Eigen/Dense>

namespace nestiv {

struct CholResult {
  Eigen::MatrixXd lower;
  double jitter = 0.0;  // diagonal inflation that was actually needed
  int attempts = 1;
};

// Cholesky with escalating diagonal jitter: tries eps in
// {0, j0, 10 j0, ..., 1e6 j0} and returns the first factorization that
// succeeds. Throws std::runtime_error when the matrix is not PSD even
// after the largest jitter.
CholResult chol_jitter(const Eigen::MatrixXd& m, double jitter0 = 1e-10);

// SPD solve built on chol_jitter (used for IRLS steps and Gram inverses).
Eigen::MatrixXd solve_spd(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                          double jitter0 = 1e-10);

}  // namespace nestiv
