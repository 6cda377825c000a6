// Times each Exec-switched kernel in both modes and verifies the outputs
// match bit for bit. Exits nonzero if any pair diverges, so it doubles as a
// determinism check on machines with real thread counts.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "nestiv/data.hpp"
#include "nestiv/estimators.hpp"
#include "nestiv/homogeneity.hpp"
#include "nestiv/nuisance.hpp"
#include "nestiv/parallel.hpp"
#include "nestiv/rng.hpp"
#include "nestiv/simulation.hpp"

using namespace nestiv;

namespace {

double now_ms() {
  const auto t = std::chrono::steady_clock::now().time_since_epoch();
  return std::chrono::duration<double, std::milli>(t).count();
}

struct BenchRow {
  std::string name;
  double serial_ms = 0.0;
  double openmp_ms = 0.0;
  bool identical = false;
};

// Runs the kernel once per mode and compares the double summaries it returns.
BenchRow bench(const std::string& name,
               const std::function<std::vector<double>(Exec)>& kernel) {
  BenchRow row;
  row.name = name;
  double t0 = now_ms();
  const std::vector<double> serial = kernel(Exec::Serial);
  row.serial_ms = now_ms() - t0;
  t0 = now_ms();
  const std::vector<double> openmp = kernel(Exec::OpenMP);
  row.openmp_ms = now_ms() - t0;
  row.identical = serial == openmp;
  return row;
}

}  // namespace

int main() {
  std::printf("threads available: %d\n\n", omp_get_max_threads());

  EstimationScenario scenario;
  scenario.n = 20000;
  Rng rng(2024, "bench", 0);
  const GeneratedData data = gen_estimation_data(scenario, rng);
  const FoldAssignment folds = make_folds(data.table, 5, 9);

  std::vector<BenchRow> rows;

  rows.push_back(bench("nuisance cross-fit (n=20000, k=5)", [&](Exec exec) {
    NuisanceSpec spec;
    const CrossFitNuisances nuis =
        fit_nuisances(data.table, folds, spec, nullptr, exec);
    return std::vector<double>{nuis.pi_hat.sum(), nuis.mu_y_hat.sum(),
                               nuis.mu_d_hat.sum()};
  }));

  rows.push_back(bench("bootstrap ratio se (n=20000, b=1000)", [&](Exec exec) {
    EstimateOptions opt;
    opt.method = Method::Wald;
    opt.wald_se = WaldSe::Bootstrap;
    opt.bootstrap_b = 1000;
    opt.seed = 4;
    opt.exec = exec;
    const EstimateReport r = wald_estimate(data.table, opt);
    return std::vector<double>{r.point, r.se, r.ci_lo, r.ci_hi};
  }));

  rows.push_back(bench("gaussian sup quantile (dim=400, m=4000)", [&](Exec exec) {
    Eigen::MatrixXd base(400, 400);
    Rng r(7, "bench-sigma", 0);
    for (int i = 0; i < base.rows(); ++i) {
      for (int j = 0; j < base.cols(); ++j) base(i, j) = r.normal();
    }
    const Eigen::MatrixXd sigma =
        base * base.transpose() / static_cast<double>(base.cols());
    return std::vector<double>{
        gaussian_sup_quantile(sigma, 4000, 0.05, 11, 1e-10, exec)};
  }));

  rows.push_back(bench("monte carlo replications (n=1000, r=16)", [&](Exec exec) {
    EstimationScenario s;
    s.n = 1000;
    MonteCarloOptions opt;
    opt.replications = 16;
    opt.seed = 6;
    opt.exec = exec;
    const MetricsRow row = run_monte_carlo(s, opt, 1.5526);
    return std::vector<double>{row.mean_estimate, row.se_winsorized_mean,
                               row.coverage, row.acceptance_rate};
  }));

  std::printf("%-42s %10s %10s %8s %10s\n", "kernel", "serial_ms", "openmp_ms",
              "speedup", "identical");
  bool all_match = true;
  for (const BenchRow& row : rows) {
    const double speedup =
        row.openmp_ms > 0.0 ? row.serial_ms / row.openmp_ms : 0.0;
    std::printf("%-42s %10.1f %10.1f %7.2fx %10s\n", row.name.c_str(),
                row.serial_ms, row.openmp_ms, speedup,
                row.identical ? "yes" : "NO");
    all_match = all_match && row.identical;
  }
  if (!all_match) {
    std::printf("\nmode mismatch detected\n");
    return 1;
  }
  return 0;
}
