#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nestiv/data.hpp"
#include "nestiv/nuisance.hpp"
#include "nestiv/parallel.hpp"

namespace nestiv {

// SWATE contrasts the two strata's complier effects; ACOATE and COATE are the
// single-stratum ratios for the a and b instruments respectively.
enum class Estimand { SWATE, ACOATE, COATE };
enum class Method { Wald, OneStep, EstEq };
enum class WaldSe { Sandwich, Bootstrap };

const char* estimand_label(Estimand e);
const char* method_label(Method m);

struct EstimateOptions {
  Estimand estimand = Estimand::SWATE;
  Method method = Method::EstEq;
  int k_folds = 5;
  std::uint64_t seed = 1;
  double level = 0.95;
  double denom_tol = 0.02;    // below this the weak-instrument flag is raised
  double truncation = 500.0;  // reporting convention for runaway ratios
  WaldSe wald_se = WaldSe::Sandwich;
  int bootstrap_b = 500;
  NuisanceSpec nuisance;
  Exec exec = Exec::OpenMP;
};

struct EstimateReport {
  Estimand estimand = Estimand::SWATE;
  Method method = Method::EstEq;
  double point = 0.0;
  double se = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;
  double level = 0.95;
  std::vector<double> fold_estimates;
  double denom = 0.0;  // estimated stratum-contrast mass in the denominator
  std::vector<std::string> flags;
  int n = 0;
  int k_folds = 0;
};

// Arm contrasts of the regression caches per row: delta is the outcome
// difference between arms within a stratum, eta the uptake difference.
struct ConditionalContrasts {
  Eigen::VectorXd delta_a, delta_b, eta_a, eta_b;
};
ConditionalContrasts conditional_contrasts(const CrossFitNuisances& nuis);

// Four-term inverse-probability residual kernel plus the plug-in contrast for
// one row under an estimand's code signs. Only the row's own code contributes
// to the residual part. The homogeneity tests reuse this exact kernel for
// their pointwise gradients, so there is a single implementation to audit.
struct RowScores {
  double s_y = 0.0;  // IPW residual combination for the outcome
  double s_d = 0.0;  // same combination for treatment uptake
  double num = 0.0;  // plug-in numerator contrast at this row
  double den = 0.0;  // plug-in denominator contrast at this row
};
RowScores row_scores(const ObservationTable& t, const CrossFitNuisances& nuis,
                     Estimand e, int row);

// Influence value at (psi, omega2) for one row; omega2 is the marginal
// denominator the caller evaluates at.
double eif_value(const ObservationTable& t, const CrossFitNuisances& nuis,
                 Estimand e, int row, double psi, double omega2);

// Ratio of instrument-cell group means with sandwich or bootstrap standard
// errors; no nuisance models involved.
EstimateReport wald_estimate(const ObservationTable& t, const EstimateOptions& opt);

// Cross-fitted one-step and estimating-equation estimators. The second
// overload fits folds and nuisances itself from the options' seed; known_pi
// substitutes exact assignment probabilities for the fitted propensity.
EstimateReport cross_fit_estimate(const ObservationTable& t,
                                  const CrossFitNuisances& nuis,
                                  const EstimateOptions& opt);
EstimateReport cross_fit_estimate(const ObservationTable& t, const EstimateOptions& opt,
                                  const PiOracle* known_pi = nullptr);

// Covariate means among switchers and always-compliers, reweighted by the
// per-row stratum masses, plus the masses themselves.
struct StrataProfile {
  std::vector<std::string> names;
  Eigen::VectorXd mean_sw, mean_aco, mean_all;
  double mass_sw = 0.0;
  double mass_aco = 0.0;
};
StrataProfile strata_profile(const ObservationTable& t, const CrossFitNuisances& nuis,
                             const Eigen::MatrixXd* g = nullptr);

}  // namespace nestiv
