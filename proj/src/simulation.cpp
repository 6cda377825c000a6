#include "nestiv/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace nestiv {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double expit(double v) { return 1.0 / (1.0 + std::exp(-v)); }

double indicator(bool b) { return b ? 1.0 : 0.0; }

}  // namespace

const char* stratum_label(Stratum s) {
  switch (s) {
    case Stratum::NeverTaker: return "never-taker";
    case Stratum::SwitcherTaker: return "switcher-taker";
    case Stratum::SwitcherRefuser: return "switcher-refuser";
    case Stratum::ATakerOnly: return "a-taker";
    case Stratum::AlwaysComplier: return "always-complier";
    case Stratum::BTakerOnly: return "b-taker";
    case Stratum::AlwaysTaker: return "always-taker";
  }
  return "?";
}

bool is_switcher(Stratum s) {
  return s == Stratum::SwitcherTaker || s == Stratum::SwitcherRefuser;
}

double treatment_under(Stratum s, Code z) {
  const bool active = is_active_arm(z);
  const bool b_side = in_stratum_b(z);
  switch (s) {
    case Stratum::NeverTaker: return 0.0;
    case Stratum::SwitcherTaker: return b_side ? indicator(active) : 1.0;
    case Stratum::SwitcherRefuser: return b_side ? indicator(active) : 0.0;
    case Stratum::ATakerOnly: return b_side ? 0.0 : 1.0;
    case Stratum::AlwaysComplier: return indicator(active);
    case Stratum::BTakerOnly: return b_side ? 1.0 : 0.0;
    case Stratum::AlwaysTaker: return 1.0;
  }
  throw std::invalid_argument("unknown stratum");
}

std::array<double, kStratumCount> stratum_probabilities(
    const EstimationScenario& s, const Eigen::RowVectorXd& x, double u) {
  if (x.size() < 3) {
    throw std::invalid_argument("estimation design needs at least three covariates");
  }
  const double x1 = x[0], x2 = x[1], x3 = x[2];
  const double a1 = s.sw_alpha[0], a2 = s.sw_alpha[1], a3 = s.sw_alpha[2];
  std::array<double, kStratumCount> w{};
  w[static_cast<int>(Stratum::NeverTaker)] =
      std::exp(1.0 - x2 + 0.7 * x3 + 0.3 * u);
  w[static_cast<int>(Stratum::SwitcherTaker)] =
      std::exp(a1 + a2 * (x1 + 2.0 * x2 - x3) + a3 * u);
  w[static_cast<int>(Stratum::SwitcherRefuser)] =
      std::exp(a1 + a2 * (-x1 - 2.0 * x2) + a3 * u);
  w[static_cast<int>(Stratum::ATakerOnly)] =
      std::exp(1.0 + 0.5 * x1 + x2 + 0.5 * x3 + 0.5 * u);
  w[static_cast<int>(Stratum::AlwaysComplier)] =
      std::exp(1.0 + 0.8 * x1 - 2.0 * x2 + 2.0 * x3 + 0.5 * u);
  w[static_cast<int>(Stratum::BTakerOnly)] =
      std::exp(1.0 - 0.5 * x1 - x2 - 0.5 * x3 - 0.5 * u);
  w[static_cast<int>(Stratum::AlwaysTaker)] =
      std::exp(1.0 + 2.0 * x1 + 2.0 * x3 - u);
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
  return w;
}

std::array<double, kStratumCount> stratum_probabilities(
    const TestingScenario& s, const Eigen::RowVectorXd& x, double u) {
  if (x.size() < 2) {
    throw std::invalid_argument("testing design needs at least two covariates");
  }
  if (!(s.aco_share >= 0.0 && s.aco_share <= 1.0)) {
    throw std::invalid_argument("always-complier share must lie in [0, 1]");
  }
  const double x1 = x[0], x2 = x[1];
  const double h = indicator(u > 0.0);
  const double w_never = std::exp(1.0 - x2 + 0.3 * h);
  const double w_sw = std::exp(3.5 + 0.5 * x1 + x2 + 0.1 * h);
  const double w_a = std::exp(1.0 + 0.5 * x1 + x2 + 0.5 * h);
  const double w_aco = std::exp(1.0 + 0.8 * x1 - 2.0 * x2 + 0.5 * h);
  const double w_b = std::exp(1.0 - 0.5 * x1 - x2 - 0.5 * h);
  const double w_always = std::exp(1.0 + 2.0 * x1 - h);
  const double total = w_never + 2.0 * w_sw + w_a + w_aco + w_b + w_always;
  // The covariate law fixes the combined switcher plus always-complier mass;
  // aco_share only reapportions it between the two groups, so varying the
  // share leaves every other margin of the design untouched.
  const double complier_family = (2.0 * w_sw + w_aco) / total;
  std::array<double, kStratumCount> p{};
  p[static_cast<int>(Stratum::NeverTaker)] = w_never / total;
  p[static_cast<int>(Stratum::SwitcherTaker)] =
      (1.0 - s.aco_share) * complier_family / 2.0;
  p[static_cast<int>(Stratum::SwitcherRefuser)] =
      (1.0 - s.aco_share) * complier_family / 2.0;
  p[static_cast<int>(Stratum::ATakerOnly)] = w_a / total;
  p[static_cast<int>(Stratum::AlwaysComplier)] = s.aco_share * complier_family;
  p[static_cast<int>(Stratum::BTakerOnly)] = w_b / total;
  p[static_cast<int>(Stratum::AlwaysTaker)] = w_always / total;
  return p;
}

namespace {

struct RowDraw {
  Eigen::RowVectorXd x;
  Code z = Code::Zero_a;
  Stratum s = Stratum::NeverTaker;
  double u = 0.0;
  double d = 0.0;
  double y0 = 0.0;
  double y1 = 0.0;
};

Eigen::Matrix3d gaussian_chol() {
  Eigen::Matrix3d cov;
  cov << 1.0, 0.2, -0.3,
         0.2, 1.0, 0.1,
        -0.3, 0.1, 1.0;
  return cov.llt().matrixL();
}

RowDraw draw_estimation_row(const EstimationScenario& sc, Rng& rng) {
  static const Eigen::Matrix3d chol = gaussian_chol();
  static const Eigen::Vector3d center(0.0, 1.0, -0.5);
  RowDraw row;
  row.x.resize(8);
  // Correlated gaussian block, redrawn as a whole until every coordinate
  // lands inside [-4, 4].
  for (;;) {
    const Eigen::Vector3d raw(rng.normal(), rng.normal(), rng.normal());
    const Eigen::Vector3d v = center + chol * raw;
    if (v.cwiseAbs().maxCoeff() <= 4.0) {
      row.x.head(3) = v.transpose();
      break;
    }
  }
  row.x[3] = indicator(rng.bernoulli(0.5));
  row.x[4] = indicator(rng.bernoulli(0.5));
  row.x[5] = indicator(rng.bernoulli(0.5));
  row.x[6] = rng.uniform(-3.0, 3.0);
  row.x[7] = static_cast<double>(rng.binomial(4, 0.5));
  const double x1 = row.x[0], x2 = row.x[1], x3 = row.x[2], x4 = row.x[3];
  const bool in_b = rng.bernoulli(expit(1.0 + 0.2 * x1 - 0.1 * x2 + 0.3 * x3));
  const double p_active = in_b ? expit(0.5 + 0.6 * x1 + 0.3 * x2 + 0.4 * x3)
                               : expit(1.0 + 0.5 * x1 - x2 + 0.7 * x3);
  row.z = make_code(in_b, rng.bernoulli(p_active));
  row.u = rng.normal(0.0, 0.6);
  const auto probs = stratum_probabilities(sc, row.x, row.u);
  row.s = static_cast<Stratum>(rng.categorical(probs.data(), kStratumCount));
  row.d = treatment_under(row.s, row.z);
  const double b1 = sc.sw_beta[0], b2 = sc.sw_beta[1], b3 = sc.sw_beta[2];
  if (sc.outcome == OutcomeKind::Continuous) {
    const double eps = rng.normal();
    row.y0 = 1.0 + x1 + x2 + x3 + x4 + row.u + eps;
    double m1 = 0.0;
    switch (row.s) {
      case Stratum::NeverTaker:
      case Stratum::AlwaysTaker:
        m1 = 1.0 + x1 + 2.0 * x2 + 2.0 * x3 + x4 + row.u;
        break;
      case Stratum::ATakerOnly:
      case Stratum::BTakerOnly:
        m1 = 1.0 + x1 + x2 + 2.0 * x3 + x4 + row.u;
        break;
      case Stratum::SwitcherTaker:
      case Stratum::SwitcherRefuser:
        m1 = b1 + b2 * x1 + 2.0 * x2 + b3 * x3 + x4 + row.u;
        break;
      case Stratum::AlwaysComplier:
        m1 = 1.0 + x1 + 2.0 * x2 + 0.2 * x2 * x2 + x3 + x4 + row.u;
        break;
    }
    // The noise term is shared between the two potential outcomes, so the
    // unit-level effect is the mean difference with no extra variance.
    row.y1 = m1 + eps;
  } else {
    const double x5 = row.x[4], x6 = row.x[5], x7 = row.x[6], x8 = row.x[7];
    double lin0 = 0.0;
    switch (row.s) {
      case Stratum::NeverTaker:
      case Stratum::AlwaysTaker:
        lin0 = 1.0 + x1 + 2.0 * x2 + 2.0 * x3 + x4 + x5 - x6 - x7 + x8 + row.u;
        break;
      case Stratum::ATakerOnly:
      case Stratum::BTakerOnly:
        lin0 = 1.0 + x1 + x2 + 2.0 * x3 + x4 + x5 - x6 - x7 + x8 + row.u;
        break;
      case Stratum::SwitcherTaker:
      case Stratum::SwitcherRefuser:
        lin0 = b1 + b2 * x1 + 2.0 * x2 + x3 + b3 * x6 - x7 + 2.0 * x8 + row.u;
        break;
      case Stratum::AlwaysComplier:
        lin0 = 1.0 + x1 + 2.0 * x2 + 0.2 * x2 * x2 + x3 + x4 + x5 - x6 - x7 +
               x8 + row.u;
        break;
    }
    row.y0 = indicator(rng.bernoulli(expit(lin0)));
    row.y1 = indicator(rng.bernoulli(expit(1.0 + x1 + x2 + x3 + row.u)));
  }
  return row;
}

RowDraw draw_testing_row(const TestingScenario& sc, Rng& rng) {
  RowDraw row;
  row.x.resize(2);
  row.x[0] = rng.normal();
  row.x[1] = rng.normal();
  const double x1 = row.x[0], x2 = row.x[1];
  const double p_side_a =
      expit(0.1 * indicator(x1 > 0.0) - 0.1 * indicator(x2 > 0.0));
  const bool in_b = !rng.bernoulli(p_side_a);
  row.z = make_code(in_b, rng.bernoulli(0.5));
  row.u = rng.normal(-0.3, 0.3);
  const auto probs = stratum_probabilities(sc, row.x, row.u);
  row.s = static_cast<Stratum>(rng.categorical(probs.data(), kStratumCount));
  row.d = treatment_under(row.s, row.z);
  const double eps = rng.normal();
  row.y0 = 1.0 + x1 + x2 + row.u + eps;
  double m1 = 0.0;
  if (is_switcher(row.s)) {
    m1 = sc.sw_beta[0] + sc.sw_beta[1] * x1 + sc.sw_beta[2] * x2 + row.u;
  } else if (row.s == Stratum::AlwaysComplier) {
    m1 = 1.0 + 2.0 * x1 + 2.0 * x2 + row.u;
  } else {
    m1 = 1.0 + x1 + x2 + row.u;
  }
  row.y1 = m1 + eps;
  return row;
}

template <typename DrawOne>
GeneratedData assemble_rows(int n, int dim_x, DrawOne&& draw_one) {
  if (n < 1) throw std::invalid_argument("sample size must be positive");
  GeneratedData out;
  out.table.x.resize(n, dim_x);
  out.table.z.resize(n);
  out.table.d.resize(n);
  out.table.y.resize(n);
  out.stratum.resize(n);
  out.u.resize(n);
  out.y0.resize(n);
  out.y1.resize(n);
  for (int i = 0; i < n; ++i) {
    const RowDraw row = draw_one();
    out.table.x.row(i) = row.x;
    out.table.z[i] = row.z;
    out.table.d[i] = row.d;
    out.table.y[i] = row.d > 0.5 ? row.y1 : row.y0;
    out.stratum[i] = row.s;
    out.u[i] = row.u;
    out.y0[i] = row.y0;
    out.y1[i] = row.y1;
  }
  return out;
}

bool counts_toward(Estimand e, Stratum s) {
  switch (e) {
    case Estimand::SWATE: return is_switcher(s);
    case Estimand::ACOATE: return s == Stratum::AlwaysComplier;
    case Estimand::COATE:
      return is_switcher(s) || s == Stratum::AlwaysComplier;
  }
  return false;
}

template <typename DrawOne>
OracleValue oracle_accumulate(DrawOne&& draw_one, Estimand e, long m) {
  if (m < 1) throw std::invalid_argument("oracle draw count must be positive");
  double sum = 0.0, sumsq = 0.0;
  long count = 0;
  for (long i = 0; i < m; ++i) {
    const RowDraw row = draw_one();
    if (!counts_toward(e, row.s)) continue;
    const double effect = row.y1 - row.y0;
    sum += effect;
    sumsq += effect * effect;
    ++count;
  }
  if (count < 2) {
    throw std::runtime_error("too few qualifying draws for the effect oracle");
  }
  OracleValue out;
  const double cn = static_cast<double>(count);
  out.value = sum / cn;
  const double var = (sumsq - sum * sum / cn) / (cn - 1.0);
  out.mc_se = std::sqrt(std::max(var, 0.0) / cn);
  out.draws = m;
  return out;
}

// Mean after clamping everything into the nearest-rank 5th to 95th
// percentile range.
double winsorized_mean(std::vector<double> v) {
  if (v.empty()) return kNan;
  std::sort(v.begin(), v.end());
  const int n = static_cast<int>(v.size());
  const int lo_idx = std::max(0, static_cast<int>(std::ceil(0.05 * n)) - 1);
  const int hi_idx = std::max(0, static_cast<int>(std::ceil(0.95 * n)) - 1);
  const double lo = v[lo_idx], hi = v[hi_idx];
  double sum = 0.0;
  for (double t : v) sum += std::clamp(t, lo, hi);
  return sum / n;
}

}  // namespace

GeneratedData gen_estimation_data(const EstimationScenario& s, Rng& rng) {
  return assemble_rows(s.n, 8, [&] { return draw_estimation_row(s, rng); });
}

GeneratedData gen_testing_data(const TestingScenario& s, Rng& rng) {
  return assemble_rows(s.n, 2, [&] { return draw_testing_row(s, rng); });
}

OracleValue true_effect_oracle(const EstimationScenario& s, Estimand e, long m,
                               std::uint64_t seed) {
  Rng rng(seed, "oracle", 0);
  return oracle_accumulate([&] { return draw_estimation_row(s, rng); }, e, m);
}

OracleValue true_effect_oracle(const TestingScenario& s, Estimand e, long m,
                               std::uint64_t seed) {
  Rng rng(seed, "oracle", 0);
  return oracle_accumulate([&] { return draw_testing_row(s, rng); }, e, m);
}

MetricsRow run_monte_carlo(const EstimationScenario& s,
                           const MonteCarloOptions& opt, double truth) {
  if (opt.replications < 1) {
    throw std::invalid_argument("replication count must be positive");
  }
  const int r_total = opt.replications;
  std::vector<double> point(r_total, kNan), se(r_total, kNan);
  std::vector<double> ci_lo(r_total, kNan), ci_hi(r_total, kNan);
  std::vector<char> done(r_total, 0);
  parallel_for(0, r_total, opt.exec, [&](int rep) {
    Rng rng(opt.seed, "mc", static_cast<std::uint64_t>(rep));
    EstimateOptions eopt;
    eopt.estimand = opt.estimand;
    eopt.method = opt.method;
    eopt.k_folds = opt.k_folds;
    eopt.nuisance = opt.nuisance;
    eopt.truncation = opt.truncation;
    eopt.level = opt.level;
    // Replications are the parallel unit; everything inside one runs serial.
    eopt.exec = Exec::Serial;
    try {
      const GeneratedData data = gen_estimation_data(s, rng);
      eopt.seed = rng.next_u64();
      const EstimateReport report = opt.method == Method::Wald
                                        ? wald_estimate(data.table, eopt)
                                        : cross_fit_estimate(data.table, eopt);
      point[rep] = report.point;
      se[rep] = report.se;
      ci_lo[rep] = report.ci_lo;
      ci_hi[rep] = report.ci_hi;
      done[rep] = 1;
    } catch (const std::exception&) {
      done[rep] = 0;
    }
  });

  std::vector<double> kept_point, kept_se;
  kept_point.reserve(r_total);
  kept_se.reserve(r_total);
  int covered = 0, degenerate = 0;
  for (int rep = 0; rep < r_total; ++rep) {
    if (!done[rep]) {
      ++degenerate;
      continue;
    }
    if (!std::isfinite(point[rep]) || std::abs(point[rep]) > opt.truncation) {
      continue;
    }
    kept_point.push_back(point[rep]);
    kept_se.push_back(se[rep]);
    if (ci_lo[rep] <= truth && truth <= ci_hi[rep]) ++covered;
  }

  MetricsRow row;
  {
    std::ostringstream name;
    name << method_label(opt.method) << ' ' << estimand_label(opt.estimand)
         << " n=" << s.n;
    row.scenario = name.str();
  }
  row.truth = truth;
  row.replications = r_total;
  row.degenerate = degenerate;
  const int accepted = static_cast<int>(kept_point.size());
  row.acceptance_rate = static_cast<double>(accepted) / r_total;
  if (accepted > 0) {
    double sum = 0.0;
    for (double p : kept_point) sum += p;
    row.mean_estimate = sum / accepted;
    row.bias = row.mean_estimate - truth;
    row.relative_bias = truth != 0.0 ? row.bias / truth : kNan;
    row.coverage = static_cast<double>(covered) / accepted;
    row.se_winsorized_mean = winsorized_mean(kept_se);
  } else {
    row.mean_estimate = kNan;
    row.bias = kNan;
    row.relative_bias = kNan;
    row.coverage = kNan;
    row.se_winsorized_mean = kNan;
  }
  return row;
}

std::string metrics_csv_header() {
  return "scenario,truth,mean_estimate,bias,relative_bias,"
         "se_winsorized_mean,coverage,acceptance_rate,replications,degenerate";
}

std::string metrics_csv_row(const MetricsRow& row) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << row.scenario << ',' << row.truth << ',' << row.mean_estimate << ','
      << row.bias << ',' << row.relative_bias << ','
      << row.se_winsorized_mean << ',' << row.coverage << ','
      << row.acceptance_rate << ',' << row.replications << ','
      << row.degenerate;
  return out.str();
}

TestStudyResult run_test_study(const TestingScenario& s,
                               const TestStudyOptions& opt) {
  if (opt.replications < 1) {
    throw std::invalid_argument("replication count must be positive");
  }
  // Validate the pairing and level once up front; a per-replication throw
  // would otherwise be misreported as degenerate data.
  contrast_spec(opt.contrast_id);
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) {
    throw std::invalid_argument("test level must lie strictly inside (0, 1)");
  }
  const int r_total = opt.replications;
  std::vector<char> done(r_total, 0), rejected(r_total, 0);
  parallel_for(0, r_total, opt.exec, [&](int rep) {
    Rng rng(opt.seed, "mc", static_cast<std::uint64_t>(rep));
    try {
      const GeneratedData data = gen_testing_data(s, rng);
      const std::uint64_t fold_seed = rng.next_u64();
      const std::uint64_t draw_seed = rng.next_u64();
      const FoldAssignment folds = make_folds(data.table, opt.k_folds, fold_seed);
      const CrossFitNuisances nuis =
          fit_nuisances(data.table, folds, opt.nuisance, nullptr, Exec::Serial);
      bool reject = false;
      if (opt.kind == TestKind::ProjectionWald) {
        reject =
            projection_test(data.table, nuis, opt.contrast_id, opt.alpha).reject;
      } else {
        reject = ks_test(data.table, nuis, opt.contrast_id, opt.alpha,
                         opt.m_draws, draw_seed, 500, 0.01, 1e-10, Exec::Serial)
                     .reject;
      }
      done[rep] = 1;
      rejected[rep] = reject ? 1 : 0;
    } catch (const std::exception&) {
      done[rep] = 0;
    }
  });
  TestStudyResult out;
  int rejects = 0;
  for (int rep = 0; rep < r_total; ++rep) {
    if (!done[rep]) continue;
    ++out.completed;
    rejects += rejected[rep];
  }
  out.degenerate = r_total - out.completed;
  out.rejection_rate =
      out.completed > 0 ? static_cast<double>(rejects) / out.completed : 0.0;
  return out;
}

}  // namespace nestiv
