#pragma once

#include <array>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "nestiv/data.hpp"
#include "nestiv/glm.hpp"
#include "nestiv/parallel.hpp"

namespace nestiv {

// Exact instrument-assignment probabilities over the four codes, supplied in
// place of a fitted propensity when the assignment mechanism is known by
// design (randomized encouragement, simulation oracles).
using PiOracle = std::function<std::array<double, 4>(const Eigen::RowVectorXd&)>;

struct NuisanceSpec {
  LearnerSpec pi;    // two-stage logistic factorization; family field ignored
  LearnerSpec mu_y;  // outcome regressions, family chosen by the caller
  LearnerSpec mu_d;  // uptake regressions, fit as logistic
  double clip_eps = 0.01;
};

struct FoldModels {
  GlmModel stratum;       // P(stratum b | x)
  GlmModel arm_a, arm_b;  // P(active arm | stratum, x)
  std::array<GlmModel, 4> mu_y;
  std::array<GlmModel, 4> mu_d;
};

// Cross-fitted nuisances with cached out-of-fold predictions: row i's entries
// come from models trained on the complement of i's fold. Columns follow
// code_index order (0a, 1a, 0b, 1b).
struct CrossFitNuisances {
  FoldAssignment folds;
  std::vector<FoldModels> models;
  Eigen::MatrixXd pi_hat;    // clipped to [eps, 1-eps], then renormalized
  Eigen::MatrixXd mu_y_hat;  // outcome scale; honors the row's own offset
  Eigen::MatrixXd mu_d_hat;  // clipped to [eps, 1-eps]
  double clip_eps = 0.01;
  bool known_pi = false;
};

struct RowNuisance {
  std::array<double, 4> pi, mu_y, mu_d;
};

void clip_renormalize(std::array<double, 4>& pi, double eps);

CrossFitNuisances fit_nuisances(const ObservationTable& table,
                                const FoldAssignment& folds, const NuisanceSpec& spec,
                                const PiOracle* known_pi = nullptr,
                                Exec exec = Exec::OpenMP);

RowNuisance predict_nuisance(const CrossFitNuisances& nuis, int row);

}  // namespace nestiv
