#include "nestiv/glm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "nestiv/linalg.hpp"

namespace nestiv {

namespace {

constexpr double kEtaClamp = 30.0;
constexpr int kMinLeaf = 10;

double inv_link(Family f, double eta) {
  switch (f) {
    case Family::LinearGaussian: return eta;
    case Family::BinomialLogit: return 1.0 / (1.0 + std::exp(-eta));
    case Family::PoissonLog: return std::exp(eta);
  }
  return eta;
}

double clamp_mean(Family f, double m) {
  switch (f) {
    case Family::LinearGaussian: return m;
    case Family::BinomialLogit: return std::clamp(m, 0.0, 1.0);
    case Family::PoissonLog: return std::max(m, 0.0);
  }
  return m;
}

Eigen::VectorXd linear_mean(const GlmModel& model, const Eigen::MatrixXd& design,
                            const Eigen::VectorXd* offset) {
  Eigen::VectorXd eta = design * model.coef;
  if (offset) {
    for (int i = 0; i < eta.size(); ++i) eta(i) += std::log((*offset)(i));
  }
  Eigen::VectorXd mu(eta.size());
  // The clamp guards the exponential links against overflow; the identity
  // link must pass through untouched or large outcomes get truncated fits.
  const bool bounded = model.family != Family::LinearGaussian;
  for (int i = 0; i < eta.size(); ++i) {
    const double e = bounded ? std::clamp(eta(i), -kEtaClamp, kEtaClamp) : eta(i);
    mu(i) = inv_link(model.family, e);
  }
  return mu;
}

void check_offset(const Eigen::VectorXd* offset, Family family, Eigen::Index n) {
  if (!offset) return;
  if (family != Family::PoissonLog)
    throw std::invalid_argument("offsets are only supported for the Poisson family");
  if (offset->size() != n)
    throw std::invalid_argument("offset length does not match the design");
  for (int i = 0; i < offset->size(); ++i)
    if (!((*offset)(i) > 0.0))
      throw std::invalid_argument("offsets must be strictly positive");
}

// L2 boosting of the response-scale residual with depth-one trees. Features
// are presorted once; each split scan is a prefix-sum pass.
void fit_stumps(GlmModel& model, const Eigen::MatrixXd& design,
                const Eigen::VectorXd& response, const LearnerSpec& spec,
                const Eigen::VectorXd* offset) {
  const int n = static_cast<int>(design.rows());
  const int p = static_cast<int>(design.cols());
  if (p < 2 || n < 2 * kMinLeaf || spec.boost_trees < 1) return;

  std::vector<std::vector<int>> order(p);
  for (int j = 1; j < p; ++j) {
    order[j].resize(n);
    std::iota(order[j].begin(), order[j].end(), 0);
    std::sort(order[j].begin(), order[j].end(),
              [&](int a, int b) { return design(a, j) < design(b, j); });
  }

  Eigen::VectorXd r = response - linear_mean(model, design, offset);
  model.shrinkage = spec.boost_shrinkage;
  for (int t = 0; t < spec.boost_trees; ++t) {
    double best_gain = 0.0;
    Stump best;
    bool found = false;
    const double total = r.sum();
    const double base = total * total / n;
    for (int j = 1; j < p; ++j) {
      const auto& idx = order[j];
      double left_sum = 0.0;
      for (int m = 1; m < n; ++m) {
        left_sum += r(idx[m - 1]);
        if (m < kMinLeaf || n - m < kMinLeaf) continue;
        const double lo = design(idx[m - 1], j), hi = design(idx[m], j);
        if (!(lo < hi)) continue;
        const double right_sum = total - left_sum;
        const double gain =
            left_sum * left_sum / m + right_sum * right_sum / (n - m) - base;
        if (gain > best_gain) {
          best_gain = gain;
          best.feature = j;
          best.threshold = 0.5 * (lo + hi);
          best.left = left_sum / m;
          best.right = right_sum / (n - m);
          found = true;
        }
      }
    }
    if (!found || best_gain <= 1e-12 * (r.squaredNorm() + 1e-300)) break;
    for (int i = 0; i < n; ++i) {
      const double fit = design(i, best.feature) <= best.threshold ? best.left : best.right;
      r(i) -= spec.boost_shrinkage * fit;
    }
    model.stumps.push_back(best);
  }
}

}  // namespace

Eigen::VectorXd GlmModel::predict(const Eigen::MatrixXd& design,
                                  const Eigen::VectorXd* offset) const {
  if (design.cols() != coef.size())
    throw std::invalid_argument("predict: design width does not match the fit");
  check_offset(offset, family, design.rows());
  Eigen::VectorXd mu = linear_mean(*this, design, offset);
  for (const Stump& s : stumps) {
    if (s.feature >= design.cols())
      throw std::invalid_argument("predict: design too narrow for the stump layer");
    for (int i = 0; i < mu.size(); ++i)
      mu(i) += shrinkage * (design(i, s.feature) <= s.threshold ? s.left : s.right);
  }
  for (int i = 0; i < mu.size(); ++i) mu(i) = clamp_mean(family, mu(i));
  return mu;
}

GlmModel fit_glm(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                 const LearnerSpec& spec, const Eigen::VectorXd* offset) {
  const int n = static_cast<int>(design.rows());
  const int p = static_cast<int>(design.cols());
  if (n == 0 || p == 0) throw std::invalid_argument("fit_glm: empty design");
  if (response.size() != n)
    throw std::invalid_argument("fit_glm: response length does not match the design");
  if (spec.max_iter < 1 || !(spec.tol > 0.0) || spec.ridge < 0.0)
    throw std::invalid_argument("fit_glm: bad learner settings");
  check_offset(offset, spec.family, n);
  if (spec.family == Family::BinomialLogit) {
    if ((response.array() < 0.0).any() || (response.array() > 1.0).any())
      throw std::invalid_argument("fit_glm: binomial response must lie in [0,1]");
  }
  if (spec.family == Family::PoissonLog && (response.array() < 0.0).any())
    throw std::invalid_argument("fit_glm: Poisson response must be nonnegative");

  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(p, spec.ridge);
  penalty(0) = 0.0;  // intercept is never shrunk
  const double jitter0 = spec.ridge == 0.0 ? 0.0 : 1e-10;

  GlmModel model;
  model.family = spec.family;
  model.offset_used = offset != nullptr;

  const auto solve = [&](const Eigen::MatrixXd& h, const Eigen::VectorXd& g) {
    try {
      return solve_spd(h, g, jitter0);
    } catch (const std::runtime_error&) {
      throw std::runtime_error(
          "fit_glm: rank-deficient design; increase ridge or drop a column");
    }
  };

  if (spec.family == Family::LinearGaussian) {
    const Eigen::MatrixXd h =
        design.transpose() * design + Eigen::MatrixXd(penalty.asDiagonal());
    model.coef = solve(h, design.transpose() * response);
    model.converged = true;
    model.iterations = 1;
  } else {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd log_off;
    if (offset) log_off = offset->array().log();
    for (int it = 1; it <= spec.max_iter; ++it) {
      Eigen::VectorXd eta = design * beta;
      if (offset) eta += log_off;
      Eigen::VectorXd mu(n), w(n);
      for (int i = 0; i < n; ++i) {
        const double e = std::clamp(eta(i), -kEtaClamp, kEtaClamp);
        mu(i) = inv_link(spec.family, e);
        w(i) = spec.family == Family::BinomialLogit ? mu(i) * (1.0 - mu(i)) : mu(i);
      }
      const Eigen::VectorXd grad = design.transpose() * (response - mu) -
                                   penalty.cwiseProduct(beta);
      const Eigen::MatrixXd h =
          design.transpose() * w.asDiagonal() * design +
          Eigen::MatrixXd(penalty.asDiagonal());
      const Eigen::VectorXd step = solve(h, grad);
      beta += step;
      model.iterations = it;
      if (step.norm() < spec.tol * std::max(1.0, beta.norm())) {
        model.converged = true;
        break;
      }
    }
    model.coef = beta;
    if (!model.coef.allFinite())
      throw std::runtime_error("fit_glm: coefficients diverged");
  }

  if (spec.use_boost) fit_stumps(model, design, response, spec, offset);
  return model;
}

Eigen::MatrixXd add_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd d(x.rows(), x.cols() + 1);
  d.col(0).setOnes();
  d.rightCols(x.cols()) = x;
  return d;
}

}  // namespace nestiv
