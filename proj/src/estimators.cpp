#include "nestiv/estimators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "nestiv/rng.hpp"
#include "nestiv/stats.hpp"

namespace nestiv {

namespace {

// Code signs per estimand, indexed by code_index (0a, 1a, 0b, 1b). Numerator
// and denominator contrasts, the residual kernel, and the Wald group-mean
// combination all share these.
std::array<double, 4> code_signs(Estimand e) {
  switch (e) {
    case Estimand::SWATE: return {1.0, -1.0, -1.0, 1.0};
    case Estimand::ACOATE: return {-1.0, 1.0, 0.0, 0.0};
    case Estimand::COATE: return {0.0, 0.0, -1.0, 1.0};
  }
  return {};
}

const char* weak_flag(Estimand e) {
  return e == Estimand::SWATE ? "WeakNestedIV" : "WeakIV";
}

double z_crit(double level) { return normal_quantile(0.5 + level / 2.0); }

double sample_sd(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / (v.size() - 1));
}

struct CellMeans {
  std::array<double, 4> y{}, d{}, p{};
};

// Group means per instrument cell; false when some cell is empty.
bool cell_means(const ObservationTable& t, const std::vector<int>* rows,
                CellMeans& out) {
  std::array<double, 4> sy{}, sd{}, cnt{};
  const int n = rows ? static_cast<int>(rows->size()) : t.n();
  for (int i = 0; i < n; ++i) {
    const int row = rows ? (*rows)[i] : i;
    const int c = code_index(t.z[row]);
    sy[c] += t.y(row);
    sd[c] += t.d(row);
    cnt[c] += 1.0;
  }
  for (int c = 0; c < 4; ++c) {
    if (cnt[c] == 0.0) return false;
    out.y[c] = sy[c] / cnt[c];
    out.d[c] = sd[c] / cnt[c];
    out.p[c] = cnt[c] / n;
  }
  return true;
}

double wald_point(const CellMeans& m, const std::array<double, 4>& s, double* den_out) {
  double num = 0.0, den = 0.0;
  for (int c = 0; c < 4; ++c) {
    num += s[c] * m.y[c];
    den += s[c] * m.d[c];
  }
  if (den_out) *den_out = den;
  if (std::abs(den) < 1e-12)
    throw std::runtime_error("wald_estimate: degenerate denominator");
  return num / den;
}

void finish_interval(EstimateReport& r, const EstimateOptions& opt) {
  const double z = z_crit(opt.level);
  r.ci_lo = r.point - z * r.se;
  r.ci_hi = r.point + z * r.se;
}

}  // namespace

const char* estimand_label(Estimand e) {
  switch (e) {
    case Estimand::SWATE: return "swate";
    case Estimand::ACOATE: return "acoate";
    case Estimand::COATE: return "coate";
  }
  return "?";
}

const char* method_label(Method m) {
  switch (m) {
    case Method::Wald: return "wald";
    case Method::OneStep: return "onestep";
    case Method::EstEq: return "ee";
  }
  return "?";
}

ConditionalContrasts conditional_contrasts(const CrossFitNuisances& nuis) {
  const auto col = [&](const Eigen::MatrixXd& m, Code z) {
    return m.col(code_index(z));
  };
  ConditionalContrasts c;
  c.delta_a = col(nuis.mu_y_hat, Code::One_a) - col(nuis.mu_y_hat, Code::Zero_a);
  c.delta_b = col(nuis.mu_y_hat, Code::One_b) - col(nuis.mu_y_hat, Code::Zero_b);
  c.eta_a = col(nuis.mu_d_hat, Code::One_a) - col(nuis.mu_d_hat, Code::Zero_a);
  c.eta_b = col(nuis.mu_d_hat, Code::One_b) - col(nuis.mu_d_hat, Code::Zero_b);
  return c;
}

RowScores row_scores(const ObservationTable& t, const CrossFitNuisances& nuis,
                     Estimand e, int row) {
  const std::array<double, 4> s = code_signs(e);
  RowScores r;
  for (int c = 0; c < 4; ++c) {
    if (s[c] == 0.0) continue;
    r.num += s[c] * nuis.mu_y_hat(row, c);
    r.den += s[c] * nuis.mu_d_hat(row, c);
  }
  const int own = code_index(t.z[row]);
  if (s[own] != 0.0) {
    const double w = s[own] / nuis.pi_hat(row, own);
    r.s_y = w * (t.y(row) - nuis.mu_y_hat(row, own));
    r.s_d = w * (t.d(row) - nuis.mu_d_hat(row, own));
  }
  return r;
}

double eif_value(const ObservationTable& t, const CrossFitNuisances& nuis,
                 Estimand e, int row, double psi, double omega2) {
  if (std::abs(omega2) < 1e-300)
    throw std::runtime_error("eif_value: degenerate denominator");
  const RowScores r = row_scores(t, nuis, e, row);
  return (r.s_y + r.num - psi * (r.s_d + r.den)) / omega2;
}

EstimateReport wald_estimate(const ObservationTable& t, const EstimateOptions& opt) {
  const int n = t.n();
  const std::array<double, 4> s = code_signs(opt.estimand);
  CellMeans m;
  if (!cell_means(t, nullptr, m))
    throw std::runtime_error("wald_estimate: empty instrument cell");

  EstimateReport r;
  r.estimand = opt.estimand;
  r.method = Method::Wald;
  r.level = opt.level;
  r.n = n;
  double den = 0.0;
  r.point = wald_point(m, s, &den);
  r.denom = den;

  const bool weak = std::abs(den) < opt.denom_tol;
  if (weak) r.flags.push_back(weak_flag(opt.estimand));
  if (std::abs(r.point) > opt.truncation) r.flags.push_back("Truncated");

  // The sandwich linearizes the ratio of group means; when the denominator is
  // weak that expansion is untrustworthy, so the bootstrap takes over.
  if (opt.wald_se == WaldSe::Sandwich && !weak) {
    Eigen::VectorXd phi(n);
    for (int i = 0; i < n; ++i) {
      const int c = code_index(t.z[i]);
      phi(i) = s[c] / (den * m.p[c]) *
               ((t.y(i) - m.y[c]) - r.point * (t.d(i) - m.d[c]));
    }
    r.se = sample_sd(phi) / std::sqrt(static_cast<double>(n));
  } else {
    std::vector<double> points(opt.bootstrap_b,
                               std::numeric_limits<double>::quiet_NaN());
    parallel_for(0, opt.bootstrap_b, opt.exec, [&](int b) {
      Rng rng(opt.seed, "boot", static_cast<std::uint64_t>(b));
      std::vector<int> rows(n);
      // Resampled cells can come up empty; redraw within the same substream.
      for (int attempt = 0; attempt < 100; ++attempt) {
        for (int i = 0; i < n; ++i) rows[i] = static_cast<int>(rng.below(n));
        CellMeans mb;
        if (!cell_means(t, &rows, mb)) continue;
        try {
          points[b] = wald_point(mb, s, nullptr);
        } catch (const std::runtime_error&) {
          continue;
        }
        break;
      }
    });
    Eigen::VectorXd ok(opt.bootstrap_b);
    int kept = 0;
    for (double p : points)
      if (std::isfinite(p)) ok(kept++) = p;
    if (kept < 2) throw std::runtime_error("wald_estimate: bootstrap failed");
    r.se = sample_sd(ok.head(kept));
  }
  finish_interval(r, opt);
  return r;
}

EstimateReport cross_fit_estimate(const ObservationTable& t,
                                  const CrossFitNuisances& nuis,
                                  const EstimateOptions& opt) {
  if (opt.method == Method::Wald)
    throw std::invalid_argument("cross_fit_estimate: use wald_estimate for the Wald method");
  const int n = t.n();
  const int k = nuis.folds.k;

  Eigen::VectorXd sy(n), sd(n), num(n), den(n);
  for (int i = 0; i < n; ++i) {
    const RowScores rs = row_scores(t, nuis, opt.estimand, i);
    sy(i) = rs.s_y;
    sd(i) = rs.s_d;
    num(i) = rs.num;
    den(i) = rs.den;
  }

  std::vector<double> m_sy(k, 0.0), m_sd(k, 0.0), m_num(k, 0.0), m_den(k, 0.0);
  std::vector<int> fold_n(k, 0);
  for (int i = 0; i < n; ++i) {
    const int f = nuis.folds.fold_of[i];
    m_sy[f] += sy(i);
    m_sd[f] += sd(i);
    m_num[f] += num(i);
    m_den[f] += den(i);
    fold_n[f]++;
  }

  EstimateReport r;
  r.estimand = opt.estimand;
  r.method = opt.method;
  r.level = opt.level;
  r.n = n;
  r.k_folds = k;
  r.fold_estimates.resize(k);

  std::vector<double> omega2(k);
  for (int f = 0; f < k; ++f) {
    if (fold_n[f] == 0) throw std::runtime_error("cross_fit_estimate: empty fold");
    m_sy[f] /= fold_n[f];
    m_sd[f] /= fold_n[f];
    m_num[f] /= fold_n[f];
    m_den[f] /= fold_n[f];
    omega2[f] = m_den[f];
    if (opt.method == Method::EstEq) {
      const double b = m_sd[f] + m_den[f];
      if (std::abs(b) < 1e-12)
        throw std::runtime_error("cross_fit_estimate: degenerate denominator in a fold");
      r.fold_estimates[f] = (m_sy[f] + m_num[f]) / b;
    } else {
      if (std::abs(m_den[f]) < 1e-12)
        throw std::runtime_error("cross_fit_estimate: degenerate denominator in a fold");
      const double plug = m_num[f] / m_den[f];
      r.fold_estimates[f] = plug + (m_sy[f] - plug * m_sd[f]) / m_den[f];
    }
  }
  r.point = 0.0;
  for (double v : r.fold_estimates) r.point += v;
  r.point /= k;
  r.denom = den.mean();

  if (std::abs(r.denom) < opt.denom_tol) r.flags.push_back(weak_flag(opt.estimand));
  if (std::abs(r.point) > opt.truncation) r.flags.push_back("Truncated");

  // Pooled influence sample at each row's own fold estimate and fold
  // denominator; a single variance matching the asymptotic expansion.
  Eigen::VectorXd inf(n);
  for (int i = 0; i < n; ++i) {
    const int f = nuis.folds.fold_of[i];
    inf(i) = (sy(i) + num(i) - r.fold_estimates[f] * (sd(i) + den(i))) / omega2[f];
  }
  r.se = sample_sd(inf) / std::sqrt(static_cast<double>(n));
  finish_interval(r, opt);
  return r;
}

EstimateReport cross_fit_estimate(const ObservationTable& t, const EstimateOptions& opt,
                                  const PiOracle* known_pi) {
  const FoldAssignment folds = make_folds(t, opt.k_folds, opt.seed);
  const CrossFitNuisances nuis =
      fit_nuisances(t, folds, opt.nuisance, known_pi, opt.exec);
  return cross_fit_estimate(t, nuis, opt);
}

StrataProfile strata_profile(const ObservationTable& t, const CrossFitNuisances& nuis,
                             const Eigen::MatrixXd* g) {
  const ConditionalContrasts c = conditional_contrasts(nuis);
  const Eigen::VectorXd w_sw = c.eta_b - c.eta_a;
  const Eigen::VectorXd& w_aco = c.eta_a;

  const Eigen::MatrixXd& vals = g ? *g : t.x;
  if (vals.rows() != t.n())
    throw std::invalid_argument("strata_profile: row count mismatch");

  StrataProfile p;
  p.mass_sw = w_sw.mean();
  p.mass_aco = w_aco.mean();
  if (p.mass_sw <= 0.0 || p.mass_aco <= 0.0)
    throw std::runtime_error("strata_profile: degenerate stratum mass");

  const int d = static_cast<int>(vals.cols());
  p.mean_sw.resize(d);
  p.mean_aco.resize(d);
  p.mean_all.resize(d);
  for (int j = 0; j < d; ++j) {
    p.names.push_back((g ? "g" : "x") + std::to_string(j + 1));
    p.mean_all(j) = vals.col(j).mean();
    p.mean_sw(j) = vals.col(j).cwiseProduct(w_sw).mean() / p.mass_sw;
    p.mean_aco(j) = vals.col(j).cwiseProduct(w_aco).mean() / p.mass_aco;
  }
  return p;
}

}  // namespace nestiv
