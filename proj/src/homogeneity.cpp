#include "nestiv/homogeneity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nestiv/linalg.hpp"
#include "nestiv/rng.hpp"
#include "nestiv/stats.hpp"

namespace nestiv {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("alpha must lie strictly between 0 and 1");
  }
}

// Fold-partitioned view of a contrast sample: positions into the retained
// arrays, grouped by fold. Every fold must contribute at least one row for
// the cross-fitted averages to make sense.
std::vector<std::vector<int>> group_by_fold(const ContrastRows& r, int k_folds) {
  std::vector<std::vector<int>> groups(static_cast<std::size_t>(k_folds));
  for (std::size_t pos = 0; pos < r.rows.size(); ++pos) {
    const int k = r.fold_of[pos];
    if (k < 0 || k >= k_folds) {
      throw std::runtime_error("fold index out of range in contrast sample");
    }
    groups[static_cast<std::size_t>(k)].push_back(static_cast<int>(pos));
  }
  for (int k = 0; k < k_folds; ++k) {
    if (groups[static_cast<std::size_t>(k)].empty()) {
      throw std::runtime_error("fold " + std::to_string(k) +
                               " has no rows clearing the pointwise mass floor");
    }
  }
  return groups;
}

}  // namespace

ContrastSpec contrast_spec(int contrast_id) {
  switch (contrast_id) {
    case 1:
      return {Estimand::ACOATE, Estimand::SWATE};
    case 2:
      return {Estimand::ACOATE, Estimand::COATE};
    case 3:
      return {Estimand::SWATE, Estimand::COATE};
    default:
      throw std::invalid_argument("contrast id must be 1, 2, or 3");
  }
}

const char* contrast_label(int contrast_id) {
  switch (contrast_id) {
    case 1:
      return "aco-vs-sw";
    case 2:
      return "aco-vs-co";
    case 3:
      return "sw-vs-co";
    default:
      throw std::invalid_argument("contrast id must be 1, 2, or 3");
  }
}

const char* test_kind_label(TestKind k) {
  return k == TestKind::ProjectionWald ? "projection-wald" : "ks";
}

ComponentValue component_value(const ObservationTable& t, const CrossFitNuisances& nuis,
                               Estimand which, int row) {
  const RowScores s = row_scores(t, nuis, which, row);
  ComponentValue v;
  v.den = s.den;
  v.theta = s.num / s.den;
  v.grad = (s.s_y - v.theta * s.s_d) / s.den;
  return v;
}

ContrastRows contrast_rows(const ObservationTable& t, const CrossFitNuisances& nuis,
                           int contrast_id, double denom_point_tol) {
  const ContrastSpec spec = contrast_spec(contrast_id);
  if (!(denom_point_tol > 0.0)) {
    throw std::invalid_argument("denom_point_tol must be positive");
  }
  const int n = t.n();
  if (nuis.pi_hat.rows() != n) {
    throw std::invalid_argument("nuisance caches do not match the table");
  }

  std::vector<double> theta, grad;
  ContrastRows out;
  theta.reserve(static_cast<std::size_t>(n));
  grad.reserve(static_cast<std::size_t>(n));
  out.rows.reserve(static_cast<std::size_t>(n));
  out.fold_of.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const ComponentValue lhs = component_value(t, nuis, spec.lhs, i);
    const ComponentValue rhs = component_value(t, nuis, spec.rhs, i);
    if (std::abs(lhs.den) < denom_point_tol || std::abs(rhs.den) < denom_point_tol) {
      ++out.n_excluded;
      continue;
    }
    theta.push_back(lhs.theta - rhs.theta);
    grad.push_back(lhs.grad - rhs.grad);
    out.rows.push_back(i);
    out.fold_of.push_back(nuis.folds.fold_of[static_cast<std::size_t>(i)]);
  }
  out.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(),
                                                static_cast<Eigen::Index>(theta.size()));
  out.grad = Eigen::Map<const Eigen::VectorXd>(grad.data(),
                                               static_cast<Eigen::Index>(grad.size()));
  return out;
}

TestReport projection_test(const ObservationTable& t, const CrossFitNuisances& nuis,
                           int contrast_id, double alpha, double denom_point_tol) {
  check_alpha(alpha);
  const ContrastRows r = contrast_rows(t, nuis, contrast_id, denom_point_tol);
  const int n = static_cast<int>(r.rows.size());
  const int p = t.dim_x() + 1;
  if (n <= p) {
    throw std::runtime_error("too few usable rows for the projection test");
  }

  Eigen::MatrixXd xbar(n, p);
  Eigen::VectorXd target(n);
  for (int pos = 0; pos < n; ++pos) {
    xbar(pos, 0) = 1.0;
    xbar.row(pos).tail(p - 1) = t.x.row(r.rows[static_cast<std::size_t>(pos)]);
    target[pos] = r.theta[pos] + r.grad[pos];
  }

  const Eigen::MatrixXd gram = xbar.transpose() * xbar / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() < 1e-8) {
    throw std::runtime_error("projection basis Gram matrix is numerically singular");
  }
  const Eigen::VectorXd moment = xbar.transpose() * target / static_cast<double>(n);
  const Eigen::VectorXd beta = solve_spd(gram, moment, 0.0);

  TestReport rep;
  rep.contrast = contrast_id;
  rep.kind = TestKind::ProjectionWald;
  rep.alpha = alpha;
  rep.beta_hat = beta;
  rep.n_used = n;
  rep.n_excluded = r.n_excluded;
  rep.df_or_quantile = static_cast<double>(p);

  const auto folds = group_by_fold(r, nuis.folds.k);
  rep.fold_betas.resize(folds.size());
  for (std::size_t k = 0; k < folds.size(); ++k) {
    const int nk = static_cast<int>(folds[k].size());
    if (nk <= p) continue;
    Eigen::MatrixXd xk(nk, p);
    Eigen::VectorXd tk(nk);
    for (int j = 0; j < nk; ++j) {
      xk.row(j) = xbar.row(folds[k][static_cast<std::size_t>(j)]);
      tk[j] = target[folds[k][static_cast<std::size_t>(j)]];
    }
    try {
      rep.fold_betas[k] = solve_spd(xk.transpose() * xk / nk, xk.transpose() * tk / nk, 1e-10);
    } catch (const std::runtime_error&) {
      // fold left empty; diagnostics only
    }
  }

  // Coefficient scores premultiplied by the inverse Gram; their sample mean is
  // zero at beta by the normal equations, and their second moment matrix over
  // folds estimates n times the coefficient variance.
  const Eigen::VectorXd resid = target - xbar * beta;
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(p, p);
  for (const auto& fold : folds) {
    Eigen::MatrixXd mk = Eigen::MatrixXd::Zero(p, p);
    for (int pos : fold) {
      const Eigen::VectorXd score = xbar.row(pos).transpose() * resid[pos];
      mk.noalias() += score * score.transpose();
    }
    second += mk;  // size-weighted fold average collapses to the plain sum
  }
  second /= static_cast<double>(n);
  if (!(second.norm() > 0.0)) {
    throw std::runtime_error("projection score covariance is degenerate");
  }
  const Eigen::MatrixXd graminv = solve_spd(gram, Eigen::MatrixXd::Identity(p, p), 0.0);
  const Eigen::MatrixXd var_beta = graminv * second * graminv / static_cast<double>(n);
  Eigen::VectorXd weighted;
  try {
    weighted = solve_spd(var_beta, beta, 0.0);
  } catch (const std::runtime_error&) {
    throw std::runtime_error("projection coefficient covariance is degenerate");
  }
  rep.statistic = beta.dot(weighted);
  rep.p_value = chi2_sf(rep.statistic, static_cast<double>(p));
  rep.reject = rep.p_value < alpha;
  return rep;
}

namespace {

// Shared assembly for the cumulative-contrast pieces: per-fold plug-in and
// one-step means at each threshold, plus the centered per-row values that
// feed the covariance. thresholds has one candidate c per row.
struct OmegaPieces {
  Eigen::VectorXd omega;          // fold-averaged one-step estimate per threshold
  Eigen::MatrixXd sigma;          // (1/K) sum of per-fold second moments
  std::vector<int> fold_sizes;
};

OmegaPieces omega_pieces(const ObservationTable& t, const ContrastRows& r, int k_folds,
                         const Eigen::MatrixXd& thresholds, bool want_sigma, Exec exec) {
  const int n = static_cast<int>(r.rows.size());
  const int g = static_cast<int>(thresholds.rows());
  if (n == 0) throw std::runtime_error("no usable rows for the cumulative contrast");
  if (g == 0) throw std::runtime_error("threshold grid is empty");
  if (thresholds.cols() != t.dim_x()) {
    throw std::invalid_argument("threshold columns do not match the covariates");
  }

  Eigen::MatrixXd ind(n, g);
  parallel_for(0, g, exec, [&](int c) {
    for (int pos = 0; pos < n; ++pos) {
      const int row = r.rows[static_cast<std::size_t>(pos)];
      ind(pos, c) =
          (t.x.row(row).array() <= thresholds.row(c).array()).all() ? 1.0 : 0.0;
    }
  });

  const Eigen::VectorXd target = r.theta + r.grad;
  const auto folds = group_by_fold(r, k_folds);

  OmegaPieces out;
  out.omega = Eigen::VectorXd::Zero(g);
  if (want_sigma) out.sigma = Eigen::MatrixXd::Zero(g, g);
  for (const auto& fold : folds) {
    const int nk = static_cast<int>(fold.size());
    out.fold_sizes.push_back(nk);
    Eigen::MatrixXd ind_k(nk, g);
    Eigen::VectorXd theta_k(nk), target_k(nk);
    for (int j = 0; j < nk; ++j) {
      ind_k.row(j) = ind.row(fold[static_cast<std::size_t>(j)]);
      theta_k[j] = r.theta[fold[static_cast<std::size_t>(j)]];
      target_k[j] = target[fold[static_cast<std::size_t>(j)]];
    }
    // Column-by-column dot products keep each threshold's value independent
    // of the rest of the grid, so enlarging the grid never perturbs existing
    // entries and the supremum is monotone in the grid exactly.
    Eigen::RowVectorXd plug_k(g), os_k(g);
    for (int c = 0; c < g; ++c) {
      plug_k[c] = theta_k.dot(ind_k.col(c)) / static_cast<double>(nk);
      os_k[c] = target_k.dot(ind_k.col(c)) / static_cast<double>(nk);
    }
    out.omega += os_k.transpose();
    if (want_sigma) {
      // Rows are target_i * 1{x_i <= c} centered at the fold plug-in.
      Eigen::MatrixXd dstar = (ind_k.array().colwise() * target_k.array()).matrix();
      dstar.rowwise() -= plug_k;
      out.sigma.noalias() += dstar.transpose() * dstar / static_cast<double>(nk);
    }
  }
  const double k_count = static_cast<double>(folds.size());
  out.omega /= k_count;
  if (want_sigma) out.sigma /= k_count;
  return out;
}

}  // namespace

Eigen::VectorXd omega_hat(const ObservationTable& t, const CrossFitNuisances& nuis,
                          int contrast_id, const Eigen::MatrixXd& thresholds,
                          double denom_point_tol) {
  const ContrastRows r = contrast_rows(t, nuis, contrast_id, denom_point_tol);
  return omega_pieces(t, r, nuis.folds.k, thresholds, false, Exec::Serial).omega;
}

TestReport ks_test(const ObservationTable& t, const CrossFitNuisances& nuis,
                   int contrast_id, double alpha, int m_draws, std::uint64_t seed,
                   int grid_max, double denom_point_tol, double jitter0, Exec exec) {
  check_alpha(alpha);
  if (m_draws < 2) throw std::invalid_argument("m_draws must be at least 2");
  if (grid_max < 1) throw std::invalid_argument("grid_max must be positive");

  const ContrastRows r = contrast_rows(t, nuis, contrast_id, denom_point_tol);
  const int n = static_cast<int>(r.rows.size());
  if (n == 0) throw std::runtime_error("no usable rows for the supremum test");

  // Thresholds are observed covariate rows; past grid_max a seeded subsample
  // stands in for the full set.
  std::vector<int> keep(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) keep[static_cast<std::size_t>(i)] = i;
  if (n > grid_max) {
    Rng grid_rng(seed, "ks-grid", 0);
    grid_rng.shuffle(keep);
    keep.resize(static_cast<std::size_t>(grid_max));
    std::sort(keep.begin(), keep.end());
  }
  const int g = static_cast<int>(keep.size());
  Eigen::MatrixXd thresholds(g, t.dim_x());
  for (int c = 0; c < g; ++c) {
    thresholds.row(c) = t.x.row(r.rows[static_cast<std::size_t>(keep[static_cast<std::size_t>(c)])]);
  }

  const OmegaPieces pieces = omega_pieces(t, r, nuis.folds.k, thresholds, true, exec);

  TestReport rep;
  rep.contrast = contrast_id;
  rep.kind = TestKind::KolmogorovSmirnov;
  rep.alpha = alpha;
  rep.n_used = n;
  rep.n_excluded = r.n_excluded;
  rep.m_draws = m_draws;
  rep.grid = thresholds;
  rep.omega = pieces.omega;
  rep.statistic = std::sqrt(static_cast<double>(n)) * pieces.omega.cwiseAbs().maxCoeff();
  rep.q_alpha = gaussian_sup_quantile(pieces.sigma, m_draws, alpha, seed, jitter0, exec);
  rep.df_or_quantile = rep.q_alpha;
  rep.reject = rep.statistic > rep.q_alpha;
  return rep;
}

double gaussian_sup_quantile(const Eigen::MatrixXd& sigma, int m_draws, double alpha,
                             std::uint64_t seed, double jitter0, Exec exec) {
  check_alpha(alpha);
  if (sigma.rows() != sigma.cols() || sigma.rows() == 0) {
    throw std::invalid_argument("sigma must be square and non-empty");
  }
  if (m_draws < 2) throw std::invalid_argument("m_draws must be at least 2");

  const CholResult chol = chol_jitter(sigma, jitter0);
  const int g = static_cast<int>(sigma.rows());
  std::vector<double> sup(static_cast<std::size_t>(m_draws));
  parallel_for(0, m_draws, exec, [&](int m) {
    Rng rng(seed, "ks", static_cast<std::uint64_t>(m));
    Eigen::VectorXd xi(g);
    for (int i = 0; i < g; ++i) xi[i] = rng.normal();
    sup[static_cast<std::size_t>(m)] =
        (chol.lower.triangularView<Eigen::Lower>() * xi).cwiseAbs().maxCoeff();
  });
  std::sort(sup.begin(), sup.end());
  int idx = static_cast<int>(std::ceil((1.0 - alpha) * m_draws)) - 1;
  idx = std::min(std::max(idx, 0), m_draws - 1);
  return sup[static_cast<std::size_t>(idx)];
}

}  // namespace nestiv
