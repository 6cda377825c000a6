#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nestiv/data.hpp"
#include "nestiv/estimators.hpp"
#include "nestiv/homogeneity.hpp"
#include "nestiv/nuisance.hpp"
#include "nestiv/parallel.hpp"
#include "nestiv/rng.hpp"

namespace nestiv {

// Latent uptake type. It fixes the treatment a unit takes under each of the
// four instrument codes; see treatment_under for the exact rule. The two
// switcher kinds comply only under the b instrument and differ in what they
// do under a (always take vs never take).
enum class Stratum : int {
  NeverTaker = 0,
  SwitcherTaker = 1,
  SwitcherRefuser = 2,
  ATakerOnly = 3,      // takes under a codes, refuses under b codes
  AlwaysComplier = 4,  // follows the assigned arm in both strata
  BTakerOnly = 5,      // refuses under a codes, takes under b codes
  AlwaysTaker = 6,
};
inline constexpr int kStratumCount = 7;

const char* stratum_label(Stratum s);
double treatment_under(Stratum s, Code z);
bool is_switcher(Stratum s);

enum class OutcomeKind { Continuous, Binary };

// Synthetic design with eight covariates (three correlated gaussians, three
// bernoullis, one uniform, one binomial count) and covariate-dependent
// instrument assignment. sw_alpha scales the two switcher strata's weights
// (intercept, covariate loading, confounder loading); raising it raises the
// switcher share. sw_beta sets the switchers' treated-outcome level and its
// loadings on two covariates, which moves the true switcher effect away from
// the other strata's.
struct EstimationScenario {
  int n = 1000;
  std::array<double, 3> sw_alpha{1.0, 1.0, 1.0};
  std::array<double, 3> sw_beta{2.0, 2.0, 2.0};
  OutcomeKind outcome = OutcomeKind::Continuous;
};

// Two-covariate design built for the homogeneity tests. Instrument arms are
// assigned fair-coin; the combined switcher plus always-complier mass is a
// fixed function of the covariates and aco_share splits it between the two
// groups, so the split varies without moving anything else. sw_beta of
// (1, 2, 2) makes the switcher and always-complier effect curves identical
// (both reduce to x1 + x2), the exact null of every pairwise test.
struct TestingScenario {
  int n = 2000;
  double aco_share = 0.6;
  std::array<double, 3> sw_beta{1.0, 2.0, 2.0};
};

// One generated dataset. Everything an estimator may see is in table; the
// remaining fields are the latent draws (uptake type, confounder, both
// potential outcomes) and exist only for oracles and diagnostics.
struct GeneratedData {
  ObservationTable table;
  std::vector<Stratum> stratum;
  Eigen::VectorXd u;
  Eigen::VectorXd y0, y1;
};

GeneratedData gen_estimation_data(const EstimationScenario& s, Rng& rng);
GeneratedData gen_testing_data(const TestingScenario& s, Rng& rng);

// Multinomial uptake-type probabilities for one unit, given its covariates
// and confounder, indexed by Stratum. The categorical draw inside the
// generators uses exactly these weights, so frequency checks against this
// function validate the sampler.
std::array<double, kStratumCount> stratum_probabilities(
    const EstimationScenario& s, const Eigen::RowVectorXd& x, double u);
std::array<double, kStratumCount> stratum_probabilities(
    const TestingScenario& s, const Eigen::RowVectorXd& x, double u);

// Population effect computed from the latent side of the generator: the mean
// of y1 - y0 over fresh draws belonging to the estimand's strata. mc_se is
// the monte carlo standard error of value; draws counts total population
// draws, not just qualifying ones.
struct OracleValue {
  double value = 0.0;
  double mc_se = 0.0;
  long draws = 0;
};

OracleValue true_effect_oracle(const EstimationScenario& s, Estimand e, long m,
                               std::uint64_t seed);
OracleValue true_effect_oracle(const TestingScenario& s, Estimand e, long m,
                               std::uint64_t seed);

struct MonteCarloOptions {
  Estimand estimand = Estimand::SWATE;
  Method method = Method::EstEq;
  int replications = 200;
  std::uint64_t seed = 1;
  int k_folds = 5;
  NuisanceSpec nuisance;
  double truncation = 500.0;  // replications beyond this are dropped, not fixed
  double level = 0.95;
  Exec exec = Exec::OpenMP;
};

// Aggregates over the accepted replications of one scenario. A replication
// is accepted when estimation completed and the point estimate stayed inside
// the truncation window; acceptance_rate is that fraction of all attempts
// and degenerate counts the replications that threw. The reported standard
// error is the mean of the per-replication standard errors after winsorizing
// at their 5th and 95th percentiles, which keeps a handful of near-degenerate
// denominators from dominating the summary.
struct MetricsRow {
  std::string scenario;
  double truth = 0.0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double relative_bias = 0.0;
  double se_winsorized_mean = 0.0;
  double coverage = 0.0;
  double acceptance_rate = 0.0;
  int replications = 0;
  int degenerate = 0;
};

// Runs replications in parallel, one RNG substream per replication, so the
// row is identical for any thread count. truth is taken from the caller
// (usually true_effect_oracle) rather than recomputed here.
MetricsRow run_monte_carlo(const EstimationScenario& s,
                           const MonteCarloOptions& opt, double truth);

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row);

struct TestStudyOptions {
  TestKind kind = TestKind::ProjectionWald;
  int contrast_id = 1;
  double alpha = 0.05;
  int replications = 200;
  std::uint64_t seed = 1;
  int k_folds = 5;
  int m_draws = 2000;  // critical-value draws for the sup test
  NuisanceSpec nuisance;
  Exec exec = Exec::OpenMP;
};

// Rejection frequency of one homogeneity test over fresh datasets. Failed
// replications count as degenerate and are excluded from the denominator.
struct TestStudyResult {
  double rejection_rate = 0.0;
  int completed = 0;
  int degenerate = 0;
};

TestStudyResult run_test_study(const TestingScenario& s,
                               const TestStudyOptions& opt);

}  // namespace nestiv
