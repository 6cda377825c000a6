#include "nestiv/homogeneity.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "nestiv/estimators.hpp"
#include "nestiv/nuisance.hpp"
#include "nestiv/rng.hpp"
#include "nestiv/stats.hpp"

using namespace nestiv;

namespace {

using CellFn = std::function<double(int row, int code)>;

// Nuisance caches filled from explicit per-row, per-code functions so tests
// can pin every quantity entering the gradients.
CrossFitNuisances lambda_caches(const ObservationTable& t, int k_folds, const CellFn& mu_y,
                                const CellFn& mu_d, double pi = 0.25) {
  CrossFitNuisances nuis;
  nuis.folds.k = k_folds;
  nuis.folds.fold_of.resize(static_cast<std::size_t>(t.n()));
  for (int i = 0; i < t.n(); ++i) {
    nuis.folds.fold_of[static_cast<std::size_t>(i)] = i % k_folds;
  }
  nuis.models.resize(static_cast<std::size_t>(k_folds));
  nuis.pi_hat = Eigen::MatrixXd::Constant(t.n(), 4, pi);
  nuis.mu_y_hat.resize(t.n(), 4);
  nuis.mu_d_hat.resize(t.n(), 4);
  for (int i = 0; i < t.n(); ++i) {
    for (int c = 0; c < 4; ++c) {
      nuis.mu_y_hat(i, c) = mu_y(i, c);
      nuis.mu_d_hat(i, c) = mu_d(i, c);
    }
  }
  nuis.clip_eps = 0.01;
  nuis.known_pi = true;
  return nuis;
}

// Outcome unrelated to uptake, so every pairing of effect curves is zero.
// Uptake rates still differ across codes to keep the masses healthy.
ObservationTable null_effect_table(int n, std::uint64_t seed) {
  Rng r(seed, "null", 0);
  const std::array<double, 4> take{0.15, 0.45, 0.2, 0.8};
  ObservationTable t;
  t.x.resize(n, 1);
  t.z.resize(static_cast<std::size_t>(n));
  t.d.resize(n);
  t.y.resize(n);
  const std::array<double, 4> w{0.25, 0.25, 0.25, 0.25};
  for (int i = 0; i < n; ++i) {
    t.x(i, 0) = r.uniform(-1.0, 1.0);
    t.z[static_cast<std::size_t>(i)] = static_cast<Code>(r.categorical(w.data(), 4));
    t.d(i) = r.bernoulli(take[static_cast<std::size_t>(code_index(
                 t.z[static_cast<std::size_t>(i)]))])
                 ? 1.0
                 : 0.0;
    t.y(i) = 1.0 + t.x(i, 0) + r.normal();
  }
  return t;
}

ObservationTable random_mix_table(int n, std::uint64_t seed) {
  Rng r(seed, "mix", 0);
  ObservationTable t;
  t.x.resize(n, 2);
  t.z.resize(static_cast<std::size_t>(n));
  t.d.resize(n);
  t.y.resize(n);
  const std::array<double, 4> w{0.25, 0.25, 0.25, 0.25};
  for (int i = 0; i < n; ++i) {
    t.x(i, 0) = r.normal();
    t.x(i, 1) = r.normal();
    t.z[static_cast<std::size_t>(i)] = static_cast<Code>(r.categorical(w.data(), 4));
    const double bump = is_active_arm(t.z[static_cast<std::size_t>(i)])
                            ? (in_stratum_b(t.z[static_cast<std::size_t>(i)]) ? 2.5 : 0.9)
                            : 0.0;
    const double p = 1.0 / (1.0 + std::exp(-(-1.2 + 0.3 * t.x(i, 0) + bump)));
    t.d(i) = r.bernoulli(p) ? 1.0 : 0.0;
    t.y(i) = 0.5 + t.x(i, 0) - 0.3 * t.x(i, 1) + 1.5 * t.d(i) + r.normal();
  }
  return t;
}

double median_of(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  return v[mid];
}

}  // namespace

TEST_CASE("contrast pairings, labels, and id validation") {
  CHECK(contrast_spec(1).lhs == Estimand::ACOATE);
  CHECK(contrast_spec(1).rhs == Estimand::SWATE);
  CHECK(contrast_spec(2).lhs == Estimand::ACOATE);
  CHECK(contrast_spec(2).rhs == Estimand::COATE);
  CHECK(contrast_spec(3).lhs == Estimand::SWATE);
  CHECK(contrast_spec(3).rhs == Estimand::COATE);
  CHECK(std::string(contrast_label(1)) == "aco-vs-sw");
  CHECK(std::string(contrast_label(2)) == "aco-vs-co");
  CHECK(std::string(contrast_label(3)) == "sw-vs-co");
  CHECK(std::string(test_kind_label(TestKind::ProjectionWald)) == "projection-wald");
  CHECK(std::string(test_kind_label(TestKind::KolmogorovSmirnov)) == "ks");
  CHECK_THROWS_AS(contrast_spec(0), std::invalid_argument);
  CHECK_THROWS_AS(contrast_spec(4), std::invalid_argument);
  CHECK_THROWS_AS(contrast_label(-1), std::invalid_argument);
}

TEST_CASE("component gradient reproduces the hand value") {
  // One active row with code 1_a: residual 1, assignment probability 0.5,
  // stratum-a mass 0.5, zero outcome contrast. The gradient collapses to
  // (1/0.5) * (1/0.5 * 1) = 4.
  ObservationTable t;
  t.x = Eigen::MatrixXd::Zero(1, 1);
  t.z = {Code::One_a};
  t.y.resize(1);
  t.y(0) = 1.0;
  t.d.resize(1);
  t.d(0) = 1.0;
  // Dyadic uptake values make both stratum masses exactly one half.
  const auto mu_y = [](int, int) { return 0.0; };
  const auto mu_d = [](int, int c) {
    const std::array<double, 4> m{0.25, 0.75, 0.25, 0.75};
    return m[static_cast<std::size_t>(c)];
  };
  const CrossFitNuisances nuis = lambda_caches(t, 1, mu_y, mu_d, 0.5);

  const ComponentValue v = component_value(t, nuis, Estimand::ACOATE, 0);
  CHECK(v.grad == 4.0);
  CHECK(v.theta == 0.0);
  CHECK(v.den == 0.5);

  // Paired against the b-complier component the other side contributes
  // nothing at an a-code row, so the pairing gradient is the same 4.
  const ContrastRows r = contrast_rows(t, nuis, 2);
  REQUIRE(r.rows.size() == 1);
  CHECK(r.grad[0] == 4.0);
  CHECK(r.theta[0] == 0.0);
  CHECK(r.n_excluded == 0);
}

TEST_CASE("zero residuals zero every component gradient") {
  const auto mu_y = [](int i, int c) { return 0.3 * i + 0.25 * c; };
  const auto mu_d = [](int, int c) {
    const std::array<double, 4> m{0.1, 0.6, 0.2, 0.9};
    return m[static_cast<std::size_t>(c)];
  };
  ObservationTable t;
  const int n = 12;
  t.x = Eigen::MatrixXd::Zero(n, 1);
  t.z.resize(n);
  t.d.resize(n);
  t.y.resize(n);
  for (int i = 0; i < n; ++i) {
    t.z[static_cast<std::size_t>(i)] = static_cast<Code>(i % 4);
    t.y(i) = mu_y(i, i % 4);
    t.d(i) = mu_d(i, i % 4);
  }
  const CrossFitNuisances nuis = lambda_caches(t, 2, mu_y, mu_d);
  for (const Estimand e : {Estimand::SWATE, Estimand::ACOATE, Estimand::COATE}) {
    for (int i = 0; i < n; ++i) {
      CHECK(component_value(t, nuis, e, i).grad == 0.0);
    }
  }
}

TEST_CASE("component gradient equals the influence bracket on fitted nuisances") {
  const ObservationTable t = random_mix_table(500, 33);
  const FoldAssignment folds = make_folds(t, 5, 11);
  const CrossFitNuisances nuis = fit_nuisances(t, folds, NuisanceSpec{});
  int checked = 0;
  for (const Estimand e : {Estimand::SWATE, Estimand::ACOATE, Estimand::COATE}) {
    for (int i = 0; i < t.n(); ++i) {
      const RowScores s = row_scores(t, nuis, e, i);
      if (std::abs(s.den) < 0.01) continue;
      const ComponentValue v = component_value(t, nuis, e, i);
      const double theta = s.num / s.den;
      const double bracket = (s.s_y + s.num - theta * (s.s_d + s.den)) / s.den;
      CHECK(v.theta == theta);
      CHECK(v.grad == doctest::Approx(bracket).epsilon(1e-9));
      ++checked;
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("pairing two minus pairing three recovers pairing one") {
  // Dyadic caches make every ratio and gradient exactly representable, so the
  // identity holds with no rounding slack at all.
  const auto mu_y = [](int, int c) {
    const std::array<double, 4> m{1.0, 3.0, 0.5, 3.5};
    return m[static_cast<std::size_t>(c)];
  };
  const auto mu_d = [](int, int c) {
    const std::array<double, 4> m{0.25, 0.75, 0.0, 1.0};
    return m[static_cast<std::size_t>(c)];
  };
  ObservationTable t;
  const int n = 16;
  t.x = Eigen::MatrixXd::Zero(n, 1);
  t.z.resize(n);
  t.d.resize(n);
  t.y.resize(n);
  for (int i = 0; i < n; ++i) {
    t.z[static_cast<std::size_t>(i)] = static_cast<Code>(i % 4);
    t.y(i) = mu_y(i, i % 4) + (i % 3 == 0 ? 0.5 : -0.25);
    t.d(i) = (i % 2 == 0) ? 1.0 : 0.0;
  }
  const CrossFitNuisances nuis = lambda_caches(t, 2, mu_y, mu_d);
  const ContrastRows c1 = contrast_rows(t, nuis, 1);
  const ContrastRows c2 = contrast_rows(t, nuis, 2);
  const ContrastRows c3 = contrast_rows(t, nuis, 3);
  REQUIRE(c1.rows.size() == static_cast<std::size_t>(n));
  REQUIRE(c2.rows.size() == static_cast<std::size_t>(n));
  REQUIRE(c3.rows.size() == static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    CHECK(c2.theta[i] - c3.theta[i] == c1.theta[i]);
    CHECK(c2.grad[i] - c3.grad[i] == c1.grad[i]);
  }
  // Spot the pinned ratio values behind the identity.
  CHECK(c1.theta[0] == 2.0);
  CHECK(c2.theta[0] == 1.0);
  CHECK(c3.theta[0] == -1.0);

  // On fitted nuisances the identity holds to rounding.
  const ObservationTable tr = random_mix_table(400, 91);
  const CrossFitNuisances nr = fit_nuisances(tr, make_folds(tr, 5, 3), NuisanceSpec{});
  const ContrastRows r1 = contrast_rows(tr, nr, 1);
  const ContrastRows r2 = contrast_rows(tr, nr, 2);
  const ContrastRows r3 = contrast_rows(tr, nr, 3);
  std::vector<int> pos2(static_cast<std::size_t>(tr.n()), -1);
  std::vector<int> pos3(static_cast<std::size_t>(tr.n()), -1);
  for (std::size_t p = 0; p < r2.rows.size(); ++p) pos2[static_cast<std::size_t>(r2.rows[p])] = static_cast<int>(p);
  for (std::size_t p = 0; p < r3.rows.size(); ++p) pos3[static_cast<std::size_t>(r3.rows[p])] = static_cast<int>(p);
  int matched = 0;
  for (std::size_t p = 0; p < r1.rows.size(); ++p) {
    const int row = r1.rows[p];
    const int p2 = pos2[static_cast<std::size_t>(row)];
    const int p3 = pos3[static_cast<std::size_t>(row)];
    if (p2 < 0 || p3 < 0) continue;
    CHECK(r2.theta[p2] - r3.theta[p3] ==
          doctest::Approx(r1.theta[static_cast<Eigen::Index>(p)]).epsilon(1e-13));
    ++matched;
  }
  CHECK(matched > 300);
}

TEST_CASE("pointwise mass floor excludes rows per pairing") {
  const int n = 10;
  const auto mu_y = [](int, int) { return 0.0; };
  // Rows 5..9 have a stratum-a mass of 0.005, below the floor; the b-side
  // masses stay healthy everywhere.
  const auto mu_d = [](int i, int c) {
    const double eta_a = i < 5 ? 0.5 : 0.005;
    const std::array<double, 4> m{0.1, 0.1 + eta_a, 0.1, 0.9};
    return m[static_cast<std::size_t>(c)];
  };
  ObservationTable t;
  t.x = Eigen::MatrixXd::Zero(n, 1);
  t.z.resize(n);
  t.d.resize(n);
  t.y.resize(n);
  for (int i = 0; i < n; ++i) {
    t.z[static_cast<std::size_t>(i)] = static_cast<Code>(i % 4);
    t.y(i) = 1.0;
    t.d(i) = 0.0;
  }
  const CrossFitNuisances nuis = lambda_caches(t, 1, mu_y, mu_d);

  const ContrastRows c1 = contrast_rows(t, nuis, 1);
  const ContrastRows c2 = contrast_rows(t, nuis, 2);
  const ContrastRows c3 = contrast_rows(t, nuis, 3);
  CHECK(c1.n_excluded == 5);
  CHECK(c2.n_excluded == 5);
  CHECK(c3.n_excluded == 0);
  REQUIRE(c1.rows.size() == 5);
  for (std::size_t p = 0; p < c1.rows.size(); ++p) CHECK(c1.rows[p] == static_cast<int>(p));
  CHECK(c3.rows.size() == 10);
  CHECK_THROWS_AS(contrast_rows(t, nuis, 1, -0.1), std::invalid_argument);
}

TEST_CASE("projection recovers a linear contrast and rejects") {
  const int n = 4000;
  const auto mu_d = [](int, int c) {
    const std::array<double, 4> m{0.2, 0.7, 0.1, 0.9};
    return m[static_cast<std::size_t>(c)];
  };
  std::vector<double> xs(static_cast<std::size_t>(n));
  const auto mu_y = [&xs](int i, int c) {
    return c == 1 ? 0.5 * (1.0 + 2.0 * xs[static_cast<std::size_t>(i)]) : 0.0;
  };
  Rng r(77, "lin-recover", 0);
  for (auto& v : xs) v = r.uniform(-2.0, 2.0);
  ObservationTable t;
  t.x.resize(n, 1);
  t.z.resize(static_cast<std::size_t>(n));
  t.d.resize(n);
  t.y.resize(n);
  for (int i = 0; i < n; ++i) {
    t.x(i, 0) = xs[static_cast<std::size_t>(i)];
    t.z[static_cast<std::size_t>(i)] = static_cast<Code>(i % 4);
    t.d(i) = r.bernoulli(mu_d(i, i % 4)) ? 1.0 : 0.0;
    t.y(i) = mu_y(i, i % 4) + 0.5 * r.normal();
  }
  const CrossFitNuisances nuis = lambda_caches(t, 5, mu_y, mu_d);

  const TestReport rep = projection_test(t, nuis, 2, 0.05);
  REQUIRE(rep.kind == TestKind::ProjectionWald);
  REQUIRE(rep.beta_hat.size() == 2);
  CHECK(rep.beta_hat[0] == doctest::Approx(1.0).epsilon(0.35));
  CHECK(rep.beta_hat[1] == doctest::Approx(2.0).epsilon(0.35));
  CHECK(rep.df_or_quantile == 2.0);
  CHECK(rep.reject);
  CHECK(rep.p_value < 1e-6);
  CHECK(rep.n_used == n);
  REQUIRE(rep.fold_betas.size() == 5);
  for (const auto& b : rep.fold_betas) {
    REQUIRE(b.size() == 2);
    CHECK(b[1] == doctest::Approx(2.0).epsilon(0.6));
  }
}

TEST_CASE("projection scores average to zero at the reported coefficients") {
  const ObservationTable t = random_mix_table(600, 57);
  const CrossFitNuisances nuis = fit_nuisances(t, make_folds(t, 5, 19), NuisanceSpec{});
  for (int j = 1; j <= 3; ++j) {
    const TestReport rep = projection_test(t, nuis, j, 0.05);
    const ContrastRows r = contrast_rows(t, nuis, j);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
    for (std::size_t p = 0; p < r.rows.size(); ++p) {
      Eigen::VectorXd xb(3);
      xb << 1.0, t.x(r.rows[p], 0), t.x(r.rows[p], 1);
      const double target = r.theta[static_cast<Eigen::Index>(p)] +
                            r.grad[static_cast<Eigen::Index>(p)];
      mean += xb * (target - xb.dot(rep.beta_hat));
    }
    mean /= static_cast<double>(r.rows.size());
    CHECK(mean.cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("null contrast keeps the wald statistic at chi-square scale") {
  // Outcomes ignore uptake entirely, so all three pairings are null. The
  // median of the statistic over repetitions should sit inside the central
  // band of its limiting chi-square(2) law.
  const int reps = 200;
  std::array<std::vector<double>, 3> w;
  for (auto& v : w) v.reserve(reps);
  for (int rep = 0; rep < reps; ++rep) {
    const ObservationTable t = null_effect_table(500, 1000 + static_cast<std::uint64_t>(rep));
    const CrossFitNuisances nuis =
        fit_nuisances(t, make_folds(t, 5, 7 + static_cast<std::uint64_t>(rep)), NuisanceSpec{});
    for (int j = 1; j <= 3; ++j) {
      w[static_cast<std::size_t>(j - 1)].push_back(projection_test(t, nuis, j, 0.05).statistic);
    }
  }
  const double lo = -2.0 * std::log(0.65);  // chi-square(2) quantile at 0.35
  const double hi = -2.0 * std::log(0.35);  // chi-square(2) quantile at 0.65
  for (int j = 0; j < 3; ++j) {
    const double med = median_of(w[static_cast<std::size_t>(j)]);
    CAPTURE(j);
    CHECK(med >= lo);
    CHECK(med <= hi);
  }
}

TEST_CASE("projection statistic is invariant to affine recoding") {
  const ObservationTable t = random_mix_table(800, 101);
  NuisanceSpec spec;
  spec.pi.ridge = 0.0;
  spec.mu_y.ridge = 0.0;
  spec.mu_d.ridge = 0.0;
  const FoldAssignment folds = make_folds(t, 5, 29);

  ObservationTable t2 = t;
  Eigen::Matrix2d a;
  a << 2.0, 0.5, -1.0, 1.5;
  Eigen::Vector2d b(3.0, -7.0);
  for (int i = 0; i < t.n(); ++i) {
    t2.x.row(i) = (a * t.x.row(i).transpose() + b).transpose();
  }

  const CrossFitNuisances n1 = fit_nuisances(t, folds, spec);
  const CrossFitNuisances n2 = fit_nuisances(t2, folds, spec);
  for (int j = 1; j <= 3; ++j) {
    const TestReport r1 = projection_test(t, n1, j, 0.05);
    const TestReport r2 = projection_test(t2, n2, j, 0.05);
    CHECK(r1.n_used == r2.n_used);
    CHECK(r2.statistic == doctest::Approx(r1.statistic).epsilon(1e-6));
  }
}

TEST_CASE("cumulative contrast handles boundary thresholds exactly") {
  const ObservationTable t = random_mix_table(300, 13);
  const CrossFitNuisances nuis = fit_nuisances(t, make_folds(t, 5, 5), NuisanceSpec{});
  const ContrastRows r = contrast_rows(t, nuis, 1);
  REQUIRE(!r.rows.empty());

  Eigen::MatrixXd hi(1, 2), lo(1, 2);
  hi << t.x.col(0).maxCoeff(), t.x.col(1).maxCoeff();
  lo << t.x.col(0).minCoeff() - 1.0, t.x.col(1).minCoeff() - 1.0;

  // Full-support threshold: the estimate is the fold-averaged mean of the
  // pointwise target with no indicator truncation at all.
  std::array<double, 5> sums{}, counts{};
  for (std::size_t p = 0; p < r.rows.size(); ++p) {
    sums[static_cast<std::size_t>(r.fold_of[p])] +=
        r.theta[static_cast<Eigen::Index>(p)] + r.grad[static_cast<Eigen::Index>(p)];
    counts[static_cast<std::size_t>(r.fold_of[p])] += 1.0;
  }
  double expect = 0.0;
  for (int k = 0; k < 5; ++k) expect += sums[static_cast<std::size_t>(k)] / counts[static_cast<std::size_t>(k)];
  expect /= 5.0;

  const Eigen::VectorXd full = omega_hat(t, nuis, 1, hi);
  REQUIRE(full.size() == 1);
  CHECK(full[0] == doctest::Approx(expect).epsilon(1e-12));

  // Below-support threshold: empty indicator, exactly zero.
  const Eigen::VectorXd none = omega_hat(t, nuis, 1, lo);
  CHECK(none[0] == 0.0);
}

TEST_CASE("cumulative contrast matches the discrete-support oracle") {
  // Three support points with a known stratum-a curve theta(x) = x and a flat
  // b-complier curve, so the pairing-2 cumulative values are exhaustive sums.
  const int n = 2000;
  std::vector<double> xs(static_cast<std::size_t>(n));
  const auto mu_d = [](int, int c) {
    const std::array<double, 4> m{0.2, 0.7, 0.1, 0.9};
    return m[static_cast<std::size_t>(c)];
  };
  const auto mu_y = [&xs](int i, int c) {
    return c == 1 ? 0.5 * xs[static_cast<std::size_t>(i)] : 0.0;
  };
  Rng rx(5, "support", 0);
  for (auto& v : xs) v = static_cast<double>(rx.below(3)) - 1.0;
  ObservationTable t;
  t.x.resize(n, 1);
  t.z.resize(static_cast<std::size_t>(n));
  t.d.resize(n);
  t.y.resize(n);
  Rng r(5, "draw", 0);
  for (int i = 0; i < n; ++i) {
    t.x(i, 0) = xs[static_cast<std::size_t>(i)];
    t.z[static_cast<std::size_t>(i)] = static_cast<Code>(i % 4);
    t.d(i) = r.bernoulli(mu_d(i, i % 4)) ? 1.0 : 0.0;
    t.y(i) = mu_y(i, i % 4) + 0.3 * r.normal();
  }
  const CrossFitNuisances nuis = lambda_caches(t, 5, mu_y, mu_d);

  Eigen::MatrixXd grid(3, 1);
  grid << -1.0, 0.0, 1.0;
  const Eigen::VectorXd omega = omega_hat(t, nuis, 2, grid);
  // E[theta(X) 1{X <= c}] over the uniform three-point support.
  CHECK(omega[0] == doctest::Approx(-1.0 / 3.0).epsilon(0.12));
  CHECK(omega[1] == doctest::Approx(-1.0 / 3.0).epsilon(0.12));
  CHECK(omega[2] == doctest::Approx(0.0).epsilon(0.12));

  // Pointwise values aside, the grid is evaluated threshold by threshold, so
  // enlarging it can only add candidates to the maximum.
  Eigen::MatrixXd small(1, 1), large(3, 1);
  small << 0.0;
  large << -1.0, 0.0, 1.0;
  const double sub = omega_hat(t, nuis, 2, small).cwiseAbs().maxCoeff();
  const double sup = omega_hat(t, nuis, 2, large).cwiseAbs().maxCoeff();
  CHECK(sup >= sub);
}

TEST_CASE("supremum test is deterministic and internally consistent") {
  const ObservationTable t = random_mix_table(300, 71);
  const CrossFitNuisances nuis = fit_nuisances(t, make_folds(t, 5, 23), NuisanceSpec{});

  const TestReport a = ks_test(t, nuis, 1, 0.1, 400, 99, 50);
  const TestReport b = ks_test(t, nuis, 1, 0.1, 400, 99, 50);
  CHECK(a.statistic == b.statistic);
  CHECK(a.q_alpha == b.q_alpha);
  CHECK(a.reject == b.reject);

  const TestReport serial = ks_test(t, nuis, 1, 0.1, 400, 99, 50, 0.01, 1e-10, Exec::Serial);
  CHECK(a.statistic == serial.statistic);
  CHECK(a.q_alpha == serial.q_alpha);

  REQUIRE(a.grid.rows() == 50);  // subsampled grid under grid_max = 50
  REQUIRE(a.omega.size() == 50);
  CHECK(a.kind == TestKind::KolmogorovSmirnov);
  CHECK(a.m_draws == 400);
  CHECK(a.statistic ==
        doctest::Approx(std::sqrt(static_cast<double>(a.n_used)) *
                        a.omega.cwiseAbs().maxCoeff())
            .epsilon(1e-12));
  CHECK(a.df_or_quantile == a.q_alpha);
  CHECK(a.q_alpha > 0.0);
  CHECK(a.reject == (a.statistic > a.q_alpha));

  // Full grid when the sample is small enough.
  const TestReport full = ks_test(t, nuis, 1, 0.1, 100, 99, 500);
  CHECK(full.grid.rows() == full.n_used);
}

TEST_CASE("supremum test size stays near nominal on a null") {
  const int reps = 60;
  int rejects = 0;
  for (int rep = 0; rep < reps; ++rep) {
    const ObservationTable t = null_effect_table(250, 4000 + static_cast<std::uint64_t>(rep));
    const CrossFitNuisances nuis =
        fit_nuisances(t, make_folds(t, 5, 17 + static_cast<std::uint64_t>(rep)), NuisanceSpec{});
    const TestReport rep_ks =
        ks_test(t, nuis, 1, 0.2, 500, 600 + static_cast<std::uint64_t>(rep));
    if (rep_ks.reject) ++rejects;
  }
  const double rate = static_cast<double>(rejects) / reps;
  MESSAGE("null rejection rate: " << rate);
  CHECK(rate <= 0.2 + 2.0 * std::sqrt(0.2 * 0.8 / reps));
}

TEST_CASE("gaussian sup quantile matches the independent-normals formula") {
  const Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(10, 10);
  for (const double alpha : {0.05, 0.2}) {
    const double q = gaussian_sup_quantile(sigma, 20000, alpha, 2024);
    const double closed = normal_quantile((1.0 + std::pow(1.0 - alpha, 0.1)) / 2.0);
    CAPTURE(alpha);
    CHECK(std::abs(q - closed) / closed <= 0.03);
  }
  CHECK(gaussian_sup_quantile(sigma, 20000, 0.05, 2024) >
        gaussian_sup_quantile(sigma, 20000, 0.2, 2024));
  CHECK(gaussian_sup_quantile(sigma, 4000, 0.1, 5, 1e-10, Exec::Serial) ==
        gaussian_sup_quantile(sigma, 4000, 0.1, 5, 1e-10, Exec::OpenMP));
}

TEST_CASE("homogeneity argument and degeneracy errors") {
  const ObservationTable t = random_mix_table(200, 3);
  const CrossFitNuisances nuis = fit_nuisances(t, make_folds(t, 4, 2), NuisanceSpec{});
  CHECK_THROWS_AS(projection_test(t, nuis, 5, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(projection_test(t, nuis, 1, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(projection_test(t, nuis, 1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ks_test(t, nuis, 1, 0.05, 1), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_sup_quantile(Eigen::MatrixXd::Zero(2, 3), 100, 0.05, 1),
                  std::invalid_argument);

  Eigen::MatrixXd wrong(1, 3);
  wrong.setZero();
  CHECK_THROWS_AS(omega_hat(t, nuis, 1, wrong), std::invalid_argument);

  // All rows fall below the mass floor: nothing usable remains.
  const auto mu_y0 = [](int, int) { return 0.0; };
  const auto mu_d_flat = [](int, int) { return 0.5; };
  ObservationTable tiny;
  tiny.x = Eigen::MatrixXd::Zero(8, 1);
  tiny.z.resize(8);
  tiny.d.resize(8);
  tiny.y.resize(8);
  for (int i = 0; i < 8; ++i) {
    tiny.z[static_cast<std::size_t>(i)] = static_cast<Code>(i % 4);
    tiny.y(i) = 1.0;
    tiny.d(i) = 0.5;
  }
  const CrossFitNuisances flat = lambda_caches(tiny, 1, mu_y0, mu_d_flat);
  CHECK_THROWS_AS(projection_test(tiny, flat, 1, 0.05), std::runtime_error);
  CHECK_THROWS_AS(ks_test(tiny, flat, 1, 0.05), std::runtime_error);
  CHECK_THROWS_AS(omega_hat(tiny, flat, 1, Eigen::MatrixXd::Zero(1, 1)), std::runtime_error);

  // Duplicated covariate column: the projection basis Gram is singular.
  ObservationTable dup = t;
  dup.x.col(1) = dup.x.col(0);
  const CrossFitNuisances ndup = fit_nuisances(dup, make_folds(dup, 4, 2), NuisanceSpec{});
  CHECK_THROWS_AS(projection_test(dup, ndup, 1, 0.05), std::runtime_error);

  // Identically zero contrast with zero residuals: the score covariance
  // vanishes and the test refuses to report an infinite statistic.
  const auto mu_dx = [](int, int c) {
    const std::array<double, 4> m{0.25, 0.75, 0.0, 1.0};
    return m[static_cast<std::size_t>(c)];
  };
  const int n = 60;
  Rng rx(9, "lin", 0);
  ObservationTable lin;
  lin.x.resize(n, 1);
  lin.z.resize(static_cast<std::size_t>(n));
  lin.d.resize(n);
  lin.y.resize(n);
  for (int i = 0; i < n; ++i) {
    lin.x(i, 0) = rx.uniform(-1.0, 1.0);
    lin.z[static_cast<std::size_t>(i)] = static_cast<Code>(i % 4);
    lin.y(i) = 0.0;
    lin.d(i) = mu_dx(i, i % 4);
  }
  const CrossFitNuisances nlin = lambda_caches(lin, 1, mu_y0, mu_dx);
  CHECK_THROWS_AS(projection_test(lin, nlin, 2, 0.05), std::runtime_error);
}
