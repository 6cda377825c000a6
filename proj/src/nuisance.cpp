#include "nestiv/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace nestiv {

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<int>(rows.size()), m.cols());
  for (int i = 0; i < out.rows(); ++i) out.row(i) = m.row(rows[i]);
  return out;
}

Eigen::VectorXd take(const Eigen::VectorXd& v, const std::vector<int>& rows) {
  Eigen::VectorXd out(static_cast<int>(rows.size()));
  for (int i = 0; i < out.size(); ++i) out(i) = v(rows[i]);
  return out;
}

LearnerSpec as_logit(LearnerSpec s) {
  s.family = Family::BinomialLogit;
  return s;
}

}  // namespace

void clip_renormalize(std::array<double, 4>& pi, double eps) {
  double sum = 0.0;
  for (double& p : pi) {
    p = std::clamp(p, eps, 1.0 - eps);
    sum += p;
  }
  for (double& p : pi) p /= sum;
}

CrossFitNuisances fit_nuisances(const ObservationTable& table,
                                const FoldAssignment& folds, const NuisanceSpec& spec,
                                const PiOracle* known_pi, Exec exec) {
  const int n = table.n();
  if (static_cast<int>(folds.fold_of.size()) != n)
    throw std::invalid_argument("fit_nuisances: fold assignment does not match the table");
  if (!(spec.clip_eps > 0.0) || spec.clip_eps >= 0.5)
    throw std::invalid_argument("fit_nuisances: clip_eps must lie in (0, 0.5)");
  const bool poisson_y = spec.mu_y.family == Family::PoissonLog;
  if (table.has_offset() && !poisson_y)
    throw std::invalid_argument(
        "fit_nuisances: an offset column requires the Poisson outcome family");

  CrossFitNuisances nuis;
  nuis.folds = folds;
  nuis.clip_eps = spec.clip_eps;
  nuis.known_pi = known_pi != nullptr;
  nuis.models.resize(folds.k);
  nuis.pi_hat.resize(n, 4);
  nuis.mu_y_hat.resize(n, 4);
  nuis.mu_d_hat.resize(n, 4);

  // Component designs differ only in the intercept-only switch, which strips
  // all covariates and leaves the constant column.
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(n, 1);
  const Eigen::MatrixXd full = add_intercept(table.x);
  const Eigen::MatrixXd& design_pi = spec.pi.intercept_only ? ones : full;
  const Eigen::MatrixXd& design_y = spec.mu_y.intercept_only ? ones : full;
  const Eigen::MatrixXd& design_d = spec.mu_d.intercept_only ? ones : full;

  std::vector<std::string> errors(folds.k);
  parallel_for(0, folds.k, exec, [&](int k) {
    std::string stage = "setup";
    try {
      std::vector<int> train, eval;
      for (int i = 0; i < n; ++i) (folds.fold_of[i] == k ? eval : train).push_back(i);

      FoldModels& fm = nuis.models[k];
      if (!known_pi) {
        std::vector<int> rows_a, rows_b;
        Eigen::VectorXd in_b(static_cast<int>(train.size()));
        for (int i = 0; i < static_cast<int>(train.size()); ++i) {
          const Code z = table.z[train[i]];
          in_b(i) = in_stratum_b(z) ? 1.0 : 0.0;
          (in_stratum_b(z) ? rows_b : rows_a).push_back(train[i]);
        }
        const auto arm_response = [&](const std::vector<int>& rows) {
          Eigen::VectorXd r(static_cast<int>(rows.size()));
          for (int i = 0; i < r.size(); ++i)
            r(i) = is_active_arm(table.z[rows[i]]) ? 1.0 : 0.0;
          return r;
        };
        stage = "pi/stratum";
        fm.stratum = fit_glm(take_rows(design_pi, train), in_b, as_logit(spec.pi));
        stage = "pi/arm_a";
        fm.arm_a = fit_glm(take_rows(design_pi, rows_a), arm_response(rows_a),
                           as_logit(spec.pi));
        stage = "pi/arm_b";
        fm.arm_b = fit_glm(take_rows(design_pi, rows_b), arm_response(rows_b),
                           as_logit(spec.pi));
      }

      for (Code z : all_codes) {
        const int c = code_index(z);
        std::vector<int> rows;
        for (int i : train)
          if (table.z[i] == z) rows.push_back(i);
        const std::string label = code_label(z);

        stage = "mu_y/" + label;
        if (poisson_y && table.has_offset()) {
          const Eigen::VectorXd off = take(table.offset, rows);
          fm.mu_y[c] = fit_glm(take_rows(design_y, rows), take(table.y, rows),
                               spec.mu_y, &off);
        } else {
          fm.mu_y[c] = fit_glm(take_rows(design_y, rows), take(table.y, rows),
                               spec.mu_y);
        }

        stage = "mu_d/" + label;
        fm.mu_d[c] = fit_glm(take_rows(design_d, rows), take(table.d, rows),
                             as_logit(spec.mu_d));
      }

      // Out-of-fold predictions for this fold's rows, cached once.
      stage = "predict";
      const Eigen::MatrixXd eval_pi = take_rows(design_pi, eval);
      const Eigen::MatrixXd eval_y = take_rows(design_y, eval);
      const Eigen::MatrixXd eval_d = take_rows(design_d, eval);

      Eigen::VectorXd pb, pa_arm, pb_arm;
      if (!known_pi) {
        const FoldModels& fm2 = nuis.models[k];
        pb = fm2.stratum.predict(eval_pi);
        pa_arm = fm2.arm_a.predict(eval_pi);
        pb_arm = fm2.arm_b.predict(eval_pi);
      }
      for (int i = 0; i < static_cast<int>(eval.size()); ++i) {
        const int row = eval[i];
        std::array<double, 4> pi{};
        if (known_pi) {
          pi = (*known_pi)(table.x.row(row));
        } else {
          pi[code_index(Code::Zero_a)] = (1.0 - pb(i)) * (1.0 - pa_arm(i));
          pi[code_index(Code::One_a)] = (1.0 - pb(i)) * pa_arm(i);
          pi[code_index(Code::Zero_b)] = pb(i) * (1.0 - pb_arm(i));
          pi[code_index(Code::One_b)] = pb(i) * pb_arm(i);
        }
        clip_renormalize(pi, spec.clip_eps);
        for (int c = 0; c < 4; ++c) nuis.pi_hat(row, c) = pi[c];
      }
      for (int c = 0; c < 4; ++c) {
        Eigen::VectorXd my;
        if (poisson_y && table.has_offset()) {
          const Eigen::VectorXd off = take(table.offset, eval);
          my = nuis.models[k].mu_y[c].predict(eval_y, &off);
        } else {
          my = nuis.models[k].mu_y[c].predict(eval_y);
        }
        const Eigen::VectorXd md = nuis.models[k].mu_d[c].predict(eval_d);
        for (int i = 0; i < static_cast<int>(eval.size()); ++i) {
          nuis.mu_y_hat(eval[i], c) = my(i);
          nuis.mu_d_hat(eval[i], c) =
              std::clamp(md(i), spec.clip_eps, 1.0 - spec.clip_eps);
        }
      }
    } catch (const std::exception& e) {
      errors[k] = "fold " + std::to_string(k) + ", " + stage + ": " + e.what();
    }
  });

  for (const std::string& e : errors)
    if (!e.empty()) throw std::runtime_error("fit_nuisances: " + e);
  return nuis;
}

RowNuisance predict_nuisance(const CrossFitNuisances& nuis, int row) {
  if (row < 0 || row >= nuis.pi_hat.rows())
    throw std::invalid_argument("predict_nuisance: row out of range");
  RowNuisance r;
  for (int c = 0; c < 4; ++c) {
    r.pi[c] = nuis.pi_hat(row, c);
    r.mu_y[c] = nuis.mu_y_hat(row, c);
    r.mu_d[c] = nuis.mu_d_hat(row, c);
  }
  return r;
}

}  // namespace nestiv
