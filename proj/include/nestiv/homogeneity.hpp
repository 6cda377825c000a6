#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "nestiv/data.hpp"
#include "nestiv/estimators.hpp"
#include "nestiv/nuisance.hpp"
#include "nestiv/parallel.hpp"

namespace nestiv {

// Homogeneity tests compare the conditional effect curves of two latent
// populations. Three pairings are supported, indexed 1..3:
//   1  always-complier vs switcher
//   2  always-complier vs b-complier
//   3  switcher vs b-complier
// Pairing 2 minus pairing 3 recovers pairing 1 row by row.
struct ContrastSpec {
  Estimand lhs = Estimand::ACOATE;
  Estimand rhs = Estimand::SWATE;
};
ContrastSpec contrast_spec(int contrast_id);
const char* contrast_label(int contrast_id);

// Conditional effect ratio and its pointwise canonical gradient for one
// population at one row, computed from the shared row_scores kernel. den is
// the population's conditional mass; callers screen it before trusting theta
// or grad, which are formed regardless and may overflow when den is tiny.
struct ComponentValue {
  double theta = 0.0;
  double grad = 0.0;
  double den = 0.0;
};
ComponentValue component_value(const ObservationTable& t, const CrossFitNuisances& nuis,
                               Estimand which, int row);

// Pointwise contrast curve and gradient over the rows whose conditional
// masses clear denom_point_tol on both sides of the pairing. Excluded rows
// are counted; retained rows keep their original index and fold.
struct ContrastRows {
  Eigen::VectorXd theta;  // lhs ratio minus rhs ratio at each retained row
  Eigen::VectorXd grad;   // matching gradient difference
  std::vector<int> rows;
  std::vector<int> fold_of;
  int n_excluded = 0;
};
ContrastRows contrast_rows(const ObservationTable& t, const CrossFitNuisances& nuis,
                           int contrast_id, double denom_point_tol = 0.01);

enum class TestKind { ProjectionWald, KolmogorovSmirnov };
const char* test_kind_label(TestKind k);

struct TestReport {
  int contrast = 0;
  TestKind kind = TestKind::ProjectionWald;
  double statistic = 0.0;
  // Degrees of freedom for the projection test, simulated critical value for
  // the supremum test.
  double df_or_quantile = 0.0;
  double alpha = 0.05;
  bool reject = false;
  double p_value = 0.0;  // projection test only; supremum draws report q_alpha
  Eigen::VectorXd beta_hat;                // projection coefficients
  std::vector<Eigen::VectorXd> fold_betas; // per-fold diagnostics, empty on failure
  double q_alpha = 0.0;
  int m_draws = 0;
  Eigen::MatrixXd grid;   // threshold rows the supremum scanned
  Eigen::VectorXd omega;  // cumulative contrast estimate at each threshold
  int n_used = 0;
  int n_excluded = 0;
};

// Wald test of the zero function in the linear projection of the contrast
// curve onto (1, x). The projection coefficient solves the pooled cross-fitted
// estimating equation, so the sample mean of the coefficient scores vanishes
// at beta_hat. Basis columns are the table's covariates as given; expand
// categoricals upstream when a richer basis is wanted.
TestReport projection_test(const ObservationTable& t, const CrossFitNuisances& nuis,
                           int contrast_id, double alpha,
                           double denom_point_tol = 0.01);

// One-step estimates of the cumulative contrast Omega(c), the contrast curve
// integrated over rows with x <= c componentwise. One value per threshold row.
Eigen::VectorXd omega_hat(const ObservationTable& t, const CrossFitNuisances& nuis,
                          int contrast_id, const Eigen::MatrixXd& thresholds,
                          double denom_point_tol = 0.01);

// Supremum test: sqrt(n) times the largest |Omega_hat| over observed-row
// thresholds (a seeded subsample of grid_max rows when n exceeds it), compared
// with the simulated quantile of the matching mean-zero Gaussian maximum.
TestReport ks_test(const ObservationTable& t, const CrossFitNuisances& nuis,
                   int contrast_id, double alpha, int m_draws = 2000,
                   std::uint64_t seed = 1, int grid_max = 500,
                   double denom_point_tol = 0.01, double jitter0 = 1e-10,
                   Exec exec = Exec::OpenMP);

// Empirical (1 - alpha) quantile of max_i |H_i| over m_draws draws of
// H ~ N(0, sigma). Each draw has its own substream, so the result does not
// depend on the execution mode or thread count.
double gaussian_sup_quantile(const Eigen::MatrixXd& sigma, int m_draws, double alpha,
                             std::uint64_t seed, double jitter0 = 1e-10,
                             Exec exec = Exec::OpenMP);

}  // namespace nestiv
