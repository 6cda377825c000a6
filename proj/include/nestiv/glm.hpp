#pragma once

#include <vector>

#include <Eigen/Dense>

namespace nestiv {

enum class Family { LinearGaussian, BinomialLogit, PoissonLog };

// Settings for one regression learner. `intercept_only` is honored by the
// cross-fitting layer when it assembles designs; fit_glm itself works on
// whatever design it is handed.
struct LearnerSpec {
  Family family = Family::LinearGaussian;
  double ridge = 1e-6;
  int max_iter = 100;
  double tol = 1e-8;
  bool intercept_only = false;
  bool use_boost = false;
  int boost_trees = 200;
  double boost_shrinkage = 0.1;
};

// Depth-one regression tree for the optional boosting layer. `feature`
// indexes a design column (never the intercept column).
struct Stump {
  int feature = 0;
  double threshold = 0.0;
  double left = 0.0;
  double right = 0.0;
};

struct GlmModel {
  Family family = Family::LinearGaussian;
  Eigen::VectorXd coef;  // aligned with design columns, intercept first
  std::vector<Stump> stumps;
  double shrinkage = 0.0;
  bool converged = false;
  int iterations = 0;
  bool offset_used = false;

  // Mean response per design row. `offset` is the exposure on its natural
  // scale; Poisson only. Stump corrections are additive on the response
  // scale, and the combined prediction is clamped to the family's range.
  Eigen::VectorXd predict(const Eigen::MatrixXd& design,
                          const Eigen::VectorXd* offset = nullptr) const;
};

// Ridge-penalized GLM via IRLS. Column 0 of the design must be the intercept
// column; it is exempt from the penalty, which keeps the Gaussian fit exactly
// equivariant under affine changes of the response. With ridge = 0 a singular
// design is an error rather than a silently regularized fit.
GlmModel fit_glm(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                 const LearnerSpec& spec, const Eigen::VectorXd* offset = nullptr);

Eigen::MatrixXd add_intercept(const Eigen::MatrixXd& x);

}  // namespace nestiv
