// Command-line front end for the nested-instrument library.
//
// Subcommands: estimate, test, profile, simulate, gen. Every subcommand is a
// pure function of its input files, the config file, and the seed, so stdout
// is byte-identical across reruns and across --threads settings. Exit codes:
// 0 success, 2 input or usage error, 3 degenerate estimation, 4 internal.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"

#include "nestiv/config.hpp"
#include "nestiv/data.hpp"
#include "nestiv/estimators.hpp"
#include "nestiv/homogeneity.hpp"
#include "nestiv/nuisance.hpp"
#include "nestiv/simulation.hpp"
#include "nestiv/stats.hpp"

namespace {

using nestiv::ConfigFile;
using ojson = nlohmann::ordered_json;

// Options shared by every subcommand. Flags beat config keys, config keys
// beat the defaults recorded here; resolve() applies that order once the
// config file is loaded.
struct CommonOpts {
  std::string config_path;
  std::uint64_t seed = 1;
  int threads = 0;  // 0 leaves the OpenMP default (all cores)
  std::string format;
  std::string out_path;

  CLI::Option* seed_opt = nullptr;
  CLI::Option* threads_opt = nullptr;
  CLI::Option* format_opt = nullptr;

  void attach(CLI::App* sub, const std::string& default_format) {
    format = default_format;
    sub->add_option("--config", config_path, "key-value config file");
    seed_opt = sub->add_option("--seed", seed, "root seed for every random draw");
    threads_opt =
        sub->add_option("--threads", threads, "worker threads (0 = all cores)");
    format_opt = sub->add_option("--format", format, "report format: json or csv")
                     ->check(CLI::IsMember({"json", "csv"}));
    sub->add_option("--out", out_path, "write the report here instead of stdout");
  }

  void resolve(const ConfigFile& cfg) {
    if (!seed_opt->count() && cfg.has("cli.seed"))
      seed = static_cast<std::uint64_t>(cfg.get_num("cli.seed", 1.0));
    if (!threads_opt->count()) threads = cfg.get_int("cli.threads", threads);
    if (!format_opt->count()) format = cfg.get("cli.format", format);
    if (format != "json" && format != "csv")
      throw std::invalid_argument("cli.format must be json or csv, got '" +
                                  format + "'");
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#endif
  }
};

// Flag-beats-config resolution for per-subcommand numbers.
double resolve_num(const CLI::Option* opt, double flag_value, const ConfigFile& cfg,
                   const std::string& key, double fallback) {
  if (opt && opt->count()) return flag_value;
  return cfg.get_num(key, fallback);
}

int resolve_int(const CLI::Option* opt, int flag_value, const ConfigFile& cfg,
                const std::string& key, int fallback) {
  if (opt && opt->count()) return flag_value;
  return cfg.get_int(key, fallback);
}

std::string resolve_str(const CLI::Option* opt, const std::string& flag_value,
                        const ConfigFile& cfg, const std::string& key,
                        const std::string& fallback) {
  if (opt && opt->count()) return flag_value;
  return cfg.get(key, fallback);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    parts.push_back(item.substr(b, e - b + 1));
  }
  return parts;
}

std::array<double, 3> parse_triple(const std::string& s, const std::string& what) {
  const auto parts = split_list(s);
  if (parts.size() != 3)
    throw std::invalid_argument(what + " needs three comma-separated numbers, got '" +
                                s + "'");
  std::array<double, 3> out{};
  for (int i = 0; i < 3; ++i) {
    try {
      std::size_t used = 0;
      out[i] = std::stod(parts[i], &used);
      if (used != parts[i].size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw std::invalid_argument(what + ": '" + parts[i] + "' is not a number");
    }
  }
  return out;
}

nestiv::Estimand parse_estimand(const std::string& name) {
  if (name == "swate") return nestiv::Estimand::SWATE;
  if (name == "acoate") return nestiv::Estimand::ACOATE;
  if (name == "coate") return nestiv::Estimand::COATE;
  throw std::invalid_argument("unknown estimand '" + name +
                              "' (expected swate, acoate, or coate)");
}

nestiv::Method parse_method(const std::string& name) {
  if (name == "wald") return nestiv::Method::Wald;
  if (name == "onestep") return nestiv::Method::OneStep;
  if (name == "ee") return nestiv::Method::EstEq;
  throw std::invalid_argument("unknown method '" + name +
                              "' (expected wald, onestep, or ee)");
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out_path);
  if (!f) throw std::invalid_argument("cannot open output file " + out_path);
  f << text;
}

std::string csv_num(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

// Loads the table and runs the design screens. Fatal screens (an empty
// instrument cell) become input errors; the rest are surfaced to the caller
// as notes and returned for the report.
std::vector<std::string> screen_table(const nestiv::ObservationTable& t,
                                      int min_cell) {
  const auto v = nestiv::validate(t, min_cell);
  if (v.fatal) {
    std::string msg = "design screen failed:";
    for (const auto& f : v.flags) msg += " " + f + ";";
    throw std::invalid_argument(msg);
  }
  for (const auto& f : v.flags) std::cerr << "note: " << f << "\n";
  return v.flags;
}

struct EstimateArgs {
  std::string input;
  std::string estimands = "swate,acoate";
  std::string methods = "ee";
  int k_folds = 5;
  double level = 0.95;
  double denom_tol = 0.02;
  double truncation = 500.0;
  std::string wald_se = "sandwich";
  int bootstrap_b = 500;
  int min_cell = 10;
  CLI::Option *estimands_opt = nullptr, *methods_opt = nullptr, *k_opt = nullptr,
              *level_opt = nullptr, *denom_tol_opt = nullptr, *trunc_opt = nullptr,
              *wald_se_opt = nullptr, *boot_opt = nullptr, *min_cell_opt = nullptr;
};

int cmd_estimate(const EstimateArgs& a, CommonOpts& common, const ConfigFile& cfg) {
  const auto estimand_names = split_list(
      resolve_str(a.estimands_opt, a.estimands, cfg, "estimators.estimand", a.estimands));
  const auto method_names = split_list(
      resolve_str(a.methods_opt, a.methods, cfg, "estimators.method", a.methods));
  if (estimand_names.empty() || method_names.empty())
    throw std::invalid_argument("estimate needs at least one estimand and one method");

  nestiv::EstimateOptions opt;
  opt.seed = common.seed;
  opt.k_folds = resolve_int(a.k_opt, a.k_folds, cfg, "estimators.k_folds", 5);
  opt.level = resolve_num(a.level_opt, a.level, cfg, "estimators.level", 0.95);
  opt.denom_tol =
      resolve_num(a.denom_tol_opt, a.denom_tol, cfg, "estimators.denom_tol", 0.02);
  opt.truncation =
      resolve_num(a.trunc_opt, a.truncation, cfg, "estimators.truncation", 500.0);
  opt.bootstrap_b =
      resolve_int(a.boot_opt, a.bootstrap_b, cfg, "estimators.bootstrap_b", 500);
  const auto se_name =
      resolve_str(a.wald_se_opt, a.wald_se, cfg, "estimators.wald_se", "sandwich");
  if (se_name == "sandwich")
    opt.wald_se = nestiv::WaldSe::Sandwich;
  else if (se_name == "bootstrap")
    opt.wald_se = nestiv::WaldSe::Bootstrap;
  else
    throw std::invalid_argument("estimators.wald_se must be sandwich or bootstrap");
  opt.nuisance = nestiv::nuisance_from_config(cfg);

  const auto t = nestiv::read_csv(a.input);
  const auto data_flags =
      screen_table(t, resolve_int(a.min_cell_opt, a.min_cell, cfg, "data.min_cell", 10));

  // Parse every requested name before fitting anything.
  std::vector<nestiv::Estimand> estimands;
  std::vector<nestiv::Method> methods;
  for (const auto& n : estimand_names) estimands.push_back(parse_estimand(n));
  for (const auto& n : method_names) methods.push_back(parse_method(n));

  // One nuisance fit serves every cross-fitted request.
  bool needs_nuisance = false;
  for (auto m : methods) needs_nuisance |= m != nestiv::Method::Wald;
  nestiv::CrossFitNuisances nuis;
  if (needs_nuisance) {
    const auto folds = nestiv::make_folds(t, opt.k_folds, common.seed);
    nuis = nestiv::fit_nuisances(t, folds, opt.nuisance);
  }

  std::vector<nestiv::EstimateReport> reports;
  for (auto e : estimands) {
    for (auto m : methods) {
      opt.estimand = e;
      opt.method = m;
      reports.push_back(m == nestiv::Method::Wald
                            ? nestiv::wald_estimate(t, opt)
                            : nestiv::cross_fit_estimate(t, nuis, opt));
    }
  }

  if (common.format == "csv") {
    std::ostringstream out;
    out << "estimand,method,point,se,ci_lo,ci_hi,level,denom,n,k_folds,flags\n";
    for (const auto& r : reports) {
      std::string flags;
      for (const auto& f : r.flags) flags += (flags.empty() ? "" : ";") + f;
      out << nestiv::estimand_label(r.estimand) << ',' << nestiv::method_label(r.method)
          << ',' << csv_num(r.point) << ',' << csv_num(r.se) << ','
          << csv_num(r.ci_lo) << ',' << csv_num(r.ci_hi) << ',' << csv_num(r.level)
          << ',' << csv_num(r.denom) << ',' << r.n << ',' << r.k_folds << ','
          << flags << '\n';
    }
    emit(out.str(), common.out_path);
    return 0;
  }

  ojson doc;
  doc["command"] = "estimate";
  doc["version"] = nestiv::kVersion;
  doc["seed"] = common.seed;
  doc["input"] = a.input;
  doc["n"] = t.n();
  doc["dim_x"] = t.dim_x();
  doc["data_flags"] = data_flags;
  doc["reports"] = ojson::array();
  for (const auto& r : reports) {
    ojson jr;
    jr["estimand"] = nestiv::estimand_label(r.estimand);
    jr["method"] = nestiv::method_label(r.method);
    jr["point"] = r.point;
    jr["se"] = r.se;
    jr["ci_lo"] = r.ci_lo;
    jr["ci_hi"] = r.ci_hi;
    jr["level"] = r.level;
    jr["denom"] = r.denom;
    jr["n"] = r.n;
    jr["k_folds"] = r.k_folds;
    jr["flags"] = r.flags;
    jr["fold_estimates"] = r.fold_estimates;
    doc["reports"].push_back(std::move(jr));
  }
  emit(doc.dump(2) + "\n", common.out_path);
  return 0;
}

struct TestArgs {
  std::string input;
  std::string contrasts = "1,2,3";
  std::string kind = "projection";
  double alpha = 0.05;
  int k_folds = 5;
  int m_draws = 2000;
  int grid_max = 500;
  double denom_point_tol = 0.01;
  std::string dump_omega;
  int min_cell = 10;
  CLI::Option *contrasts_opt = nullptr, *kind_opt = nullptr, *alpha_opt = nullptr,
              *k_opt = nullptr, *m_opt = nullptr, *grid_opt = nullptr,
              *tol_opt = nullptr, *min_cell_opt = nullptr;
};

int cmd_test(const TestArgs& a, CommonOpts& common, const ConfigFile& cfg) {
  const auto kind =
      resolve_str(a.kind_opt, a.kind, cfg, "tests.kind", "projection");
  if (kind != "projection" && kind != "ks" && kind != "both")
    throw std::invalid_argument("tests.kind must be projection, ks, or both");
  const bool want_proj = kind != "ks";
  const bool want_ks = kind != "projection";
  if (!a.dump_omega.empty() && !want_ks)
    throw std::invalid_argument("--dump-omega needs a ks run (kind ks or both)");

  std::vector<int> contrasts;
  for (const auto& c :
       split_list(resolve_str(a.contrasts_opt, a.contrasts, cfg, "tests.contrast",
                              a.contrasts))) {
    try {
      contrasts.push_back(std::stoi(c));
    } catch (const std::exception&) {
      throw std::invalid_argument("tests.contrast: '" + c + "' is not an integer");
    }
  }
  if (contrasts.empty()) throw std::invalid_argument("no contrast requested");
  for (int c : contrasts) nestiv::contrast_spec(c);  // rejects anything outside 1..3

  const double alpha = resolve_num(a.alpha_opt, a.alpha, cfg, "tests.alpha", 0.05);
  const int k_folds = resolve_int(a.k_opt, a.k_folds, cfg, "estimators.k_folds", 5);
  const int m_draws = resolve_int(a.m_opt, a.m_draws, cfg, "tests.m_draws", 2000);
  const int grid_max = resolve_int(a.grid_opt, a.grid_max, cfg, "tests.grid_max", 500);
  const double point_tol =
      resolve_num(a.tol_opt, a.denom_point_tol, cfg, "tests.denom_point_tol", 0.01);

  const auto t = nestiv::read_csv(a.input);
  screen_table(t, resolve_int(a.min_cell_opt, a.min_cell, cfg, "data.min_cell", 10));

  const auto folds = nestiv::make_folds(t, k_folds, common.seed);
  const auto nuis =
      nestiv::fit_nuisances(t, folds, nestiv::nuisance_from_config(cfg));

  std::vector<nestiv::TestReport> reports;
  if (want_proj)
    for (int c : contrasts)
      reports.push_back(nestiv::projection_test(t, nuis, c, alpha, point_tol));
  if (want_ks)
    for (int c : contrasts)
      reports.push_back(nestiv::ks_test(t, nuis, c, alpha, m_draws, common.seed,
                                        grid_max, point_tol));

  if (!a.dump_omega.empty()) {
    std::ostringstream out;
    out << "contrast";
    for (int j = 1; j <= t.dim_x(); ++j) out << ",x" << j;
    out << ",omega\n";
    for (const auto& r : reports) {
      if (r.kind != nestiv::TestKind::KolmogorovSmirnov) continue;
      for (int i = 0; i < r.grid.rows(); ++i) {
        out << r.contrast;
        for (int j = 0; j < r.grid.cols(); ++j) out << ',' << csv_num(r.grid(i, j));
        out << ',' << csv_num(r.omega[i]) << '\n';
      }
    }
    emit(out.str(), a.dump_omega);
  }

  if (common.format == "csv") {
    std::ostringstream out;
    out << "contrast,label,kind,statistic,critical_value,alpha,p_value,reject,"
           "n_used,n_excluded\n";
    for (const auto& r : reports) {
      const bool proj = r.kind == nestiv::TestKind::ProjectionWald;
      const double crit = proj ? nestiv::chi2_quantile(1.0 - r.alpha, r.df_or_quantile)
                               : r.q_alpha;
      out << r.contrast << ',' << nestiv::contrast_label(r.contrast) << ','
          << nestiv::test_kind_label(r.kind) << ',' << csv_num(r.statistic) << ','
          << csv_num(crit) << ',' << csv_num(r.alpha) << ','
          << (proj ? csv_num(r.p_value) : std::string()) << ','
          << (r.reject ? 1 : 0) << ',' << r.n_used << ',' << r.n_excluded << '\n';
    }
    emit(out.str(), common.out_path);
    return 0;
  }

  ojson doc;
  doc["command"] = "test";
  doc["version"] = nestiv::kVersion;
  doc["seed"] = common.seed;
  doc["input"] = a.input;
  doc["n"] = t.n();
  doc["dim_x"] = t.dim_x();
  doc["k_folds"] = k_folds;
  doc["alpha"] = alpha;
  doc["reports"] = ojson::array();
  for (const auto& r : reports) {
    ojson jr;
    jr["contrast"] = r.contrast;
    jr["label"] = nestiv::contrast_label(r.contrast);
    jr["kind"] = nestiv::test_kind_label(r.kind);
    jr["statistic"] = r.statistic;
    if (r.kind == nestiv::TestKind::ProjectionWald) {
      jr["df"] = r.df_or_quantile;
      jr["critical_value"] = nestiv::chi2_quantile(1.0 - r.alpha, r.df_or_quantile);
      jr["p_value"] = r.p_value;
      jr["beta_hat"] = std::vector<double>(r.beta_hat.begin(), r.beta_hat.end());
    } else {
      jr["q_alpha"] = r.q_alpha;
      jr["m_draws"] = r.m_draws;
    }
    jr["alpha"] = r.alpha;
    jr["reject"] = r.reject;
    jr["n_used"] = r.n_used;
    jr["n_excluded"] = r.n_excluded;
    doc["reports"].push_back(std::move(jr));
  }
  emit(doc.dump(2) + "\n", common.out_path);
  return 0;
}

struct ProfileArgs {
  std::string input;
  int k_folds = 5;
  int min_cell = 10;
  CLI::Option *k_opt = nullptr, *min_cell_opt = nullptr;
};

int cmd_profile(const ProfileArgs& a, CommonOpts& common, const ConfigFile& cfg) {
  const int k_folds = resolve_int(a.k_opt, a.k_folds, cfg, "estimators.k_folds", 5);
  const auto t = nestiv::read_csv(a.input);
  screen_table(t, resolve_int(a.min_cell_opt, a.min_cell, cfg, "data.min_cell", 10));
  const auto folds = nestiv::make_folds(t, k_folds, common.seed);
  const auto nuis =
      nestiv::fit_nuisances(t, folds, nestiv::nuisance_from_config(cfg));
  const auto prof = nestiv::strata_profile(t, nuis);

  if (common.format == "csv") {
    std::ostringstream out;
    out << "name,switcher_mean,always_complier_mean,overall_mean\n";
    for (std::size_t j = 0; j < prof.names.size(); ++j)
      out << prof.names[j] << ',' << csv_num(prof.mean_sw[j]) << ','
          << csv_num(prof.mean_aco[j]) << ',' << csv_num(prof.mean_all[j]) << '\n';
    out << "mass," << csv_num(prof.mass_sw) << ',' << csv_num(prof.mass_aco) << ",\n";
    emit(out.str(), common.out_path);
    return 0;
  }

  ojson doc;
  doc["command"] = "profile";
  doc["version"] = nestiv::kVersion;
  doc["seed"] = common.seed;
  doc["input"] = a.input;
  doc["n"] = t.n();
  doc["k_folds"] = k_folds;
  doc["mass_sw"] = prof.mass_sw;
  doc["mass_aco"] = prof.mass_aco;
  doc["rows"] = ojson::array();
  for (std::size_t j = 0; j < prof.names.size(); ++j) {
    ojson jr;
    jr["name"] = prof.names[j];
    jr["mean_sw"] = prof.mean_sw[j];
    jr["mean_aco"] = prof.mean_aco[j];
    jr["mean_all"] = prof.mean_all[j];
    doc["rows"].push_back(std::move(jr));
  }
  emit(doc.dump(2) + "\n", common.out_path);
  return 0;
}

struct SimArgs {
  std::string design = "estimation";
  int n = 1000;
  std::string outcome = "continuous";
  std::string sw_alpha = "1,1,1";
  std::string sw_beta;  // default depends on the design
  double aco_share = 0.6;
  int replications = 200;
  std::string method = "ee";
  std::string estimand = "swate";
  int k_folds = 5;
  double truncation = 500.0;
  double level = 0.95;
  long oracle_draws = 500000;
  double truth = std::nan("");
  bool oracle_only = false;
  std::string contrasts = "1,2,3";
  std::string test_kind = "projection";
  double alpha = 0.05;
  int m_draws = 2000;
  CLI::Option *design_opt = nullptr, *n_opt = nullptr, *outcome_opt = nullptr,
              *alpha_vec_opt = nullptr, *beta_vec_opt = nullptr, *aco_opt = nullptr,
              *reps_opt = nullptr, *method_opt = nullptr, *estimand_opt = nullptr,
              *k_opt = nullptr, *trunc_opt = nullptr, *level_opt = nullptr,
              *odraws_opt = nullptr, *truth_opt = nullptr, *contrasts_opt = nullptr,
              *tkind_opt = nullptr, *talpha_opt = nullptr, *m_opt = nullptr;
};

int cmd_simulate(const SimArgs& a, CommonOpts& common, const ConfigFile& cfg) {
  if (common.format != "csv")
    throw std::invalid_argument("simulate reports are csv only");
  const auto design = resolve_str(a.design_opt, a.design, cfg, "sim.design", a.design);
  std::ostringstream out;

  if (design == "estimation") {
    nestiv::EstimationScenario s;
    s.n = resolve_int(a.n_opt, a.n, cfg, "sim.n", s.n);
    s.sw_alpha = parse_triple(
        resolve_str(a.alpha_vec_opt, a.sw_alpha, cfg, "sim.sw_alpha", a.sw_alpha),
        "sim.sw_alpha");
    s.sw_beta = parse_triple(
        resolve_str(a.beta_vec_opt, a.sw_beta, cfg, "sim.sw_beta", "2,2,2"),
        "sim.sw_beta");
    const auto outcome =
        resolve_str(a.outcome_opt, a.outcome, cfg, "sim.outcome", a.outcome);
    if (outcome == "continuous")
      s.outcome = nestiv::OutcomeKind::Continuous;
    else if (outcome == "binary")
      s.outcome = nestiv::OutcomeKind::Binary;
    else
      throw std::invalid_argument("sim.outcome must be continuous or binary");
    const auto estimand = parse_estimand(
        resolve_str(a.estimand_opt, a.estimand, cfg, "sim.estimand", a.estimand));
    const long odraws = static_cast<long>(resolve_num(
        a.odraws_opt, static_cast<double>(a.oracle_draws), cfg, "sim.oracle_draws",
        static_cast<double>(a.oracle_draws)));

    if (a.oracle_only) {
      const auto o = nestiv::true_effect_oracle(s, estimand, odraws, common.seed);
      out << "design,estimand,truth,mc_se,draws\n";
      out << "estimation," << nestiv::estimand_label(estimand) << ','
          << csv_num(o.value) << ',' << csv_num(o.mc_se) << ',' << o.draws << '\n';
      emit(out.str(), common.out_path);
      return 0;
    }

    nestiv::MonteCarloOptions opt;
    opt.estimand = estimand;
    opt.method = parse_method(
        resolve_str(a.method_opt, a.method, cfg, "sim.method", a.method));
    opt.replications =
        resolve_int(a.reps_opt, a.replications, cfg, "sim.replications", 200);
    opt.seed = common.seed;
    opt.k_folds = resolve_int(a.k_opt, a.k_folds, cfg, "estimators.k_folds", 5);
    opt.truncation =
        resolve_num(a.trunc_opt, a.truncation, cfg, "estimators.truncation", 500.0);
    opt.level = resolve_num(a.level_opt, a.level, cfg, "estimators.level", 0.95);
    opt.nuisance = nestiv::nuisance_from_config(cfg);

    double truth = a.truth;
    if (!(a.truth_opt && a.truth_opt->count())) {
      truth = nestiv::true_effect_oracle(s, estimand, odraws, common.seed).value;
    }
    const auto row = nestiv::run_monte_carlo(s, opt, truth);
    out << nestiv::metrics_csv_header() << '\n'
        << nestiv::metrics_csv_row(row) << '\n';
    emit(out.str(), common.out_path);
    return 0;
  }

  if (design != "testing")
    throw std::invalid_argument("sim.design must be estimation or testing");

  nestiv::TestingScenario s;
  s.n = resolve_int(a.n_opt, a.n, cfg, "sim.n", 2000);
  s.aco_share = resolve_num(a.aco_opt, a.aco_share, cfg, "sim.aco_share", 0.6);
  s.sw_beta = parse_triple(
      resolve_str(a.beta_vec_opt, a.sw_beta, cfg, "sim.sw_beta", "1,2,2"),
      "sim.sw_beta");

  if (a.oracle_only) {
    const auto estimand = parse_estimand(
        resolve_str(a.estimand_opt, a.estimand, cfg, "sim.estimand", a.estimand));
    const long odraws = static_cast<long>(resolve_num(
        a.odraws_opt, static_cast<double>(a.oracle_draws), cfg, "sim.oracle_draws",
        static_cast<double>(a.oracle_draws)));
    const auto o = nestiv::true_effect_oracle(s, estimand, odraws, common.seed);
    out << "design,estimand,truth,mc_se,draws\n";
    out << "testing," << nestiv::estimand_label(estimand) << ',' << csv_num(o.value)
        << ',' << csv_num(o.mc_se) << ',' << o.draws << '\n';
    emit(out.str(), common.out_path);
    return 0;
  }

  nestiv::TestStudyOptions opt;
  const auto kind_name =
      resolve_str(a.tkind_opt, a.test_kind, cfg, "sim.kind", a.test_kind);
  if (kind_name == "projection")
    opt.kind = nestiv::TestKind::ProjectionWald;
  else if (kind_name == "ks")
    opt.kind = nestiv::TestKind::KolmogorovSmirnov;
  else
    throw std::invalid_argument("sim.kind must be projection or ks");
  opt.alpha = resolve_num(a.talpha_opt, a.alpha, cfg, "tests.alpha", 0.05);
  opt.replications =
      resolve_int(a.reps_opt, a.replications, cfg, "sim.replications", 200);
  opt.seed = common.seed;
  opt.k_folds = resolve_int(a.k_opt, a.k_folds, cfg, "estimators.k_folds", 5);
  opt.m_draws = resolve_int(a.m_opt, a.m_draws, cfg, "tests.m_draws", 2000);
  opt.nuisance = nestiv::nuisance_from_config(cfg);

  out << "design,contrast,kind,alpha,rejection_rate,completed,degenerate\n";
  for (const auto& c : split_list(resolve_str(a.contrasts_opt, a.contrasts, cfg,
                                              "tests.contrast", a.contrasts))) {
    int cid = 0;
    try {
      cid = std::stoi(c);
    } catch (const std::exception&) {
      throw std::invalid_argument("tests.contrast: '" + c + "' is not an integer");
    }
    opt.contrast_id = cid;
    const auto r = nestiv::run_test_study(s, opt);
    out << "testing," << cid << ',' << nestiv::test_kind_label(opt.kind) << ','
        << csv_num(opt.alpha) << ',' << csv_num(r.rejection_rate) << ','
        << r.completed << ',' << r.degenerate << '\n';
  }
  emit(out.str(), common.out_path);
  return 0;
}

struct GenArgs {
  std::string design = "estimation";
  int n = 1000;
  std::string outcome = "continuous";
  std::string sw_alpha = "1,1,1";
  std::string sw_beta;
  double aco_share = 0.6;
  CLI::Option *design_opt = nullptr, *n_opt = nullptr, *outcome_opt = nullptr,
              *alpha_vec_opt = nullptr, *beta_vec_opt = nullptr, *aco_opt = nullptr;
};

int cmd_gen(const GenArgs& a, CommonOpts& common, const ConfigFile& cfg) {
  const auto design = resolve_str(a.design_opt, a.design, cfg, "sim.design", a.design);
  nestiv::Rng rng(common.seed, "gen", 0);
  nestiv::ObservationTable t;
  if (design == "estimation") {
    nestiv::EstimationScenario s;
    s.n = resolve_int(a.n_opt, a.n, cfg, "sim.n", s.n);
    s.sw_alpha = parse_triple(
        resolve_str(a.alpha_vec_opt, a.sw_alpha, cfg, "sim.sw_alpha", a.sw_alpha),
        "sim.sw_alpha");
    s.sw_beta = parse_triple(
        resolve_str(a.beta_vec_opt, a.sw_beta, cfg, "sim.sw_beta", "2,2,2"),
        "sim.sw_beta");
    const auto outcome =
        resolve_str(a.outcome_opt, a.outcome, cfg, "sim.outcome", a.outcome);
    if (outcome == "continuous")
      s.outcome = nestiv::OutcomeKind::Continuous;
    else if (outcome == "binary")
      s.outcome = nestiv::OutcomeKind::Binary;
    else
      throw std::invalid_argument("sim.outcome must be continuous or binary");
    t = nestiv::gen_estimation_data(s, rng).table;
  } else if (design == "testing") {
    nestiv::TestingScenario s;
    s.n = resolve_int(a.n_opt, a.n, cfg, "sim.n", 2000);
    s.aco_share = resolve_num(a.aco_opt, a.aco_share, cfg, "sim.aco_share", 0.6);
    s.sw_beta = parse_triple(
        resolve_str(a.beta_vec_opt, a.sw_beta, cfg, "sim.sw_beta", "1,2,2"),
        "sim.sw_beta");
    t = nestiv::gen_testing_data(s, rng).table;
  } else {
    throw std::invalid_argument("sim.design must be estimation or testing");
  }
  if (common.out_path.empty())
    throw std::invalid_argument("gen needs --out for the dataset file");
  nestiv::write_csv(t, common.out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nested-instrument causal analysis"};
  app.set_version_flag("--version", std::string(nestiv::kVersion));
  app.require_subcommand(0, 1);

  CommonOpts c_est, c_test, c_prof, c_sim, c_gen;

  auto* est = app.add_subcommand(
      "estimate", "point estimates and confidence intervals from a dataset");
  EstimateArgs ea;
  est->add_option("input", ea.input, "dataset csv (z,x...,d,y[,offset])")->required();
  c_est.attach(est, "json");
  ea.estimands_opt = est->add_option("--estimand", ea.estimands,
                                     "comma list: swate, acoate, coate");
  ea.methods_opt =
      est->add_option("--method", ea.methods, "comma list: wald, onestep, ee");
  ea.k_opt = est->add_option("--k", ea.k_folds, "cross-fitting folds");
  ea.level_opt = est->add_option("--level", ea.level, "confidence level");
  ea.denom_tol_opt = est->add_option("--denom-tol", ea.denom_tol,
                                     "weak-denominator flag threshold");
  ea.trunc_opt = est->add_option("--truncation", ea.truncation,
                                 "flag points beyond this magnitude");
  ea.wald_se_opt =
      est->add_option("--wald-se", ea.wald_se, "wald errors: sandwich or bootstrap");
  ea.boot_opt = est->add_option("--bootstrap-b", ea.bootstrap_b,
                                "bootstrap replicates for wald errors");
  ea.min_cell_opt = est->add_option("--min-cell", ea.min_cell,
                                    "instrument cell count that trips a warning");

  auto* tst = app.add_subcommand("test", "effect-homogeneity tests across strata");
  TestArgs ta;
  tst->add_option("input", ta.input, "dataset csv (z,x...,d,y[,offset])")->required();
  c_test.attach(tst, "json");
  ta.contrasts_opt =
      tst->add_option("--contrast", ta.contrasts, "comma list of pairings 1..3");
  ta.kind_opt = tst->add_option("--kind", ta.kind, "projection, ks, or both");
  ta.alpha_opt = tst->add_option("--alpha", ta.alpha, "test level");
  ta.k_opt = tst->add_option("--k", ta.k_folds, "cross-fitting folds");
  ta.m_opt = tst->add_option("--ks-draws", ta.m_draws,
                             "gaussian draws for the sup critical value");
  ta.grid_opt = tst->add_option("--grid-max", ta.grid_max,
                                "largest threshold grid for the sup test");
  ta.tol_opt = tst->add_option("--denom-point-tol", ta.denom_point_tol,
                               "pointwise mass floor for contrast rows");
  tst->add_option("--dump-omega", ta.dump_omega,
                  "write the sup test's cumulative contrast curve to this csv");
  ta.min_cell_opt = tst->add_option("--min-cell", ta.min_cell,
                                    "instrument cell count that trips a warning");

  auto* prof = app.add_subcommand(
      "profile", "covariate means of the switcher and always-complier groups");
  ProfileArgs pa;
  prof->add_option("input", pa.input, "dataset csv (z,x...,d,y[,offset])")->required();
  c_prof.attach(prof, "json");
  pa.k_opt = prof->add_option("--k", pa.k_folds, "cross-fitting folds");
  pa.min_cell_opt = prof->add_option("--min-cell", pa.min_cell,
                                     "instrument cell count that trips a warning");

  auto* sim = app.add_subcommand(
      "simulate", "replication studies on the built-in synthetic designs");
  SimArgs sa;
  c_sim.attach(sim, "csv");
  sa.design_opt =
      sim->add_option("--design", sa.design, "estimation or testing design");
  sa.n_opt = sim->add_option("--n", sa.n, "rows per replication");
  sa.outcome_opt =
      sim->add_option("--outcome", sa.outcome, "continuous or binary (estimation)");
  sa.alpha_vec_opt = sim->add_option("--sw-alpha", sa.sw_alpha,
                                     "switcher weight triple a1,a2,a3 (estimation)");
  sa.beta_vec_opt = sim->add_option("--sw-beta", sa.sw_beta,
                                    "switcher outcome triple b1,b2,b3");
  sa.aco_opt = sim->add_option("--aco-share", sa.aco_share,
                               "always-complier share of the complier family");
  sa.reps_opt = sim->add_option("--replications", sa.replications, "replications");
  sa.method_opt = sim->add_option("--method", sa.method, "wald, onestep, or ee");
  sa.estimand_opt =
      sim->add_option("--estimand", sa.estimand, "swate, acoate, or coate");
  sa.k_opt = sim->add_option("--k", sa.k_folds, "cross-fitting folds");
  sa.trunc_opt = sim->add_option("--truncation", sa.truncation,
                                 "drop replications beyond this magnitude");
  sa.level_opt = sim->add_option("--level", sa.level, "confidence level");
  sa.odraws_opt = sim->add_option("--oracle-draws", sa.oracle_draws,
                                  "population draws for the truth oracle");
  sa.truth_opt = sim->add_option("--truth", sa.truth,
                                 "skip the oracle and use this truth value");
  sim->add_flag("--oracle-only", sa.oracle_only,
                "emit only the truth column and stop");
  sa.contrasts_opt = sim->add_option("--contrast", sa.contrasts,
                                     "comma list of pairings 1..3 (testing)");
  sa.tkind_opt = sim->add_option("--test-kind", sa.test_kind,
                                 "projection or ks (testing)");
  sa.talpha_opt = sim->add_option("--alpha", sa.alpha, "test level (testing)");
  sa.m_opt = sim->add_option("--ks-draws", sa.m_draws,
                             "gaussian draws for the sup critical value");

  auto* gen = app.add_subcommand(
      "gen", "write one synthetic dataset so the other subcommands can ingest it");
  GenArgs ga;
  c_gen.attach(gen, "csv");
  ga.design_opt =
      gen->add_option("--design", ga.design, "estimation or testing design");
  ga.n_opt = gen->add_option("--n", ga.n, "rows to generate");
  ga.outcome_opt =
      gen->add_option("--outcome", ga.outcome, "continuous or binary (estimation)");
  ga.alpha_vec_opt = gen->add_option("--sw-alpha", ga.sw_alpha,
                                     "switcher weight triple a1,a2,a3 (estimation)");
  ga.beta_vec_opt =
      gen->add_option("--sw-beta", ga.sw_beta, "switcher outcome triple b1,b2,b3");
  ga.aco_opt = gen->add_option("--aco-share", ga.aco_share,
                               "always-complier share of the complier family");
  gen->get_option("--out")->description("dataset file to write (required)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const auto run = [&](CommonOpts& common, const std::string& config_flag,
                       auto&& body) {
    ConfigFile cfg;
    if (!config_flag.empty()) cfg = nestiv::parse_config(config_flag);
    common.resolve(cfg);
    return body(cfg);
  };

  try {
    if (est->parsed())
      return run(c_est, c_est.config_path,
                 [&](const ConfigFile& cfg) { return cmd_estimate(ea, c_est, cfg); });
    if (tst->parsed())
      return run(c_test, c_test.config_path,
                 [&](const ConfigFile& cfg) { return cmd_test(ta, c_test, cfg); });
    if (prof->parsed())
      return run(c_prof, c_prof.config_path,
                 [&](const ConfigFile& cfg) { return cmd_profile(pa, c_prof, cfg); });
    if (sim->parsed())
      return run(c_sim, c_sim.config_path,
                 [&](const ConfigFile& cfg) { return cmd_simulate(sa, c_sim, cfg); });
    if (gen->parsed())
      return run(c_gen, c_gen.config_path,
                 [&](const ConfigFile& cfg) { return cmd_gen(ga, c_gen, cfg); });
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  }

  std::cerr << app.help();
  return 2;
}
