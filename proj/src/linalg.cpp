#include "nestiv/linalg.hpp"

#include <stdexcept>

namespace nestiv {

CholResult chol_jitter(const Eigen::MatrixXd& m, double jitter0) {
  if (m.rows() != m.cols()) throw std::invalid_argument("chol_jitter: matrix not square");
  const auto n = m.rows();
  double eps = 0.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::MatrixXd work = m;
    if (eps > 0.0) work.diagonal().array() += eps;
    Eigen::LLT<Eigen::MatrixXd> llt(work);
    if (llt.info() == Eigen::Success) {
      return CholResult{llt.matrixL(), eps, attempt + 1};
    }
    eps = (eps == 0.0) ? jitter0 : eps * 10.0;
  }
  throw std::runtime_error("chol_jitter: matrix not PSD within jitter budget");
  (void)n;
}

Eigen::MatrixXd solve_spd(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                          double jitter0) {
  CholResult c = chol_jitter(a, jitter0);
  Eigen::MatrixXd y = c.lower.triangularView<Eigen::Lower>().solve(b);
  return c.lower.transpose().triangularView<Eigen::Upper>().solve(y);
}

}  // namespace nestiv
