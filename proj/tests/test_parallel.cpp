#include <omp.h>

#include <atomic>
#include <vector>

#include "doctest.h"
#include "nestiv/data.hpp"
#include "nestiv/estimators.hpp"
#include "nestiv/homogeneity.hpp"
#include "nestiv/nuisance.hpp"
#include "nestiv/parallel.hpp"
#include "nestiv/rng.hpp"
#include "nestiv/simulation.hpp"

using namespace nestiv;

// Every parallel loop in the library must produce the same bits as its serial
// twin. These cases sweep each Exec-switched entry point once; the loop bodies
// own their RNG substreams and output slots, so the mode can never matter.

namespace {

GeneratedData shared_data(int n) {
  EstimationScenario s;
  s.n = n;
  Rng rng(77, "par", 0);
  return gen_estimation_data(s, rng);
}

}  // namespace

TEST_CASE("parallel_for covers each index exactly once") {
  std::vector<std::atomic<int>> hits(257);
  for (auto& h : hits) h = 0;
  parallel_for(3, 257, Exec::OpenMP, [&](int i) { hits[i]++; });
  for (int i = 0; i < 3; ++i) CHECK(hits[i] == 0);
  for (int i = 3; i < 257; ++i) CHECK(hits[i] == 1);
  CHECK(omp_get_max_threads() >= 1);
}

TEST_CASE("cross-fitted nuisances are mode-independent") {
  const GeneratedData d = shared_data(2000);
  const FoldAssignment folds = make_folds(d.table, 5, 11);
  NuisanceSpec spec;
  const CrossFitNuisances serial =
      fit_nuisances(d.table, folds, spec, nullptr, Exec::Serial);
  const CrossFitNuisances openmp =
      fit_nuisances(d.table, folds, spec, nullptr, Exec::OpenMP);
  CHECK((serial.pi_hat - openmp.pi_hat).cwiseAbs().maxCoeff() == 0.0);
  CHECK((serial.mu_y_hat - openmp.mu_y_hat).cwiseAbs().maxCoeff() == 0.0);
  CHECK((serial.mu_d_hat - openmp.mu_d_hat).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("bootstrap standard errors are mode-independent") {
  const GeneratedData d = shared_data(1200);
  EstimateOptions opt;
  opt.method = Method::Wald;
  opt.wald_se = WaldSe::Bootstrap;
  opt.bootstrap_b = 200;
  opt.seed = 21;
  opt.exec = Exec::Serial;
  const EstimateReport serial = wald_estimate(d.table, opt);
  opt.exec = Exec::OpenMP;
  const EstimateReport openmp = wald_estimate(d.table, opt);
  CHECK(serial.point == openmp.point);
  CHECK(serial.se == openmp.se);
  CHECK(serial.ci_lo == openmp.ci_lo);
  CHECK(serial.ci_hi == openmp.ci_hi);
}

TEST_CASE("sup test and its quantile draws are mode-independent") {
  const GeneratedData d = shared_data(1500);
  const FoldAssignment folds = make_folds(d.table, 5, 13);
  NuisanceSpec spec;
  const CrossFitNuisances nuis =
      fit_nuisances(d.table, folds, spec, nullptr, Exec::Serial);
  const TestReport serial =
      ks_test(d.table, nuis, 1, 0.1, 600, 31, 300, 0.01, 1e-10, Exec::Serial);
  const TestReport openmp =
      ks_test(d.table, nuis, 1, 0.1, 600, 31, 300, 0.01, 1e-10, Exec::OpenMP);
  CHECK(serial.statistic == openmp.statistic);
  CHECK(serial.df_or_quantile == openmp.df_or_quantile);
  CHECK(serial.reject == openmp.reject);
  CHECK((serial.omega - openmp.omega).cwiseAbs().maxCoeff() == 0.0);

  Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(20, 20);
  sigma.diagonal().setLinSpaced(20, 0.5, 2.0);
  const double qs = gaussian_sup_quantile(sigma, 2000, 0.1, 5, 1e-10, Exec::Serial);
  const double qo = gaussian_sup_quantile(sigma, 2000, 0.1, 5, 1e-10, Exec::OpenMP);
  CHECK(qs == qo);
}

TEST_CASE("replication studies are mode-independent") {
  EstimationScenario s;
  s.n = 500;
  MonteCarloOptions mc;
  mc.replications = 6;
  mc.seed = 3;
  mc.exec = Exec::Serial;
  const MetricsRow serial = run_monte_carlo(s, mc, 1.55);
  mc.exec = Exec::OpenMP;
  const MetricsRow openmp = run_monte_carlo(s, mc, 1.55);
  CHECK(serial.mean_estimate == openmp.mean_estimate);
  CHECK(serial.bias == openmp.bias);
  CHECK(serial.se_winsorized_mean == openmp.se_winsorized_mean);
  CHECK(serial.coverage == openmp.coverage);
  CHECK(serial.acceptance_rate == openmp.acceptance_rate);

  TestingScenario t;
  t.n = 500;
  TestStudyOptions ts;
  ts.replications = 6;
  ts.seed = 3;
  ts.alpha = 0.1;
  ts.contrast_id = 2;
  ts.exec = Exec::Serial;
  const TestStudyResult rs = run_test_study(t, ts);
  ts.exec = Exec::OpenMP;
  const TestStudyResult ro = run_test_study(t, ts);
  CHECK(rs.rejection_rate == ro.rejection_rate);
  CHECK(rs.completed == ro.completed);
  CHECK(rs.degenerate == ro.degenerate);
}
