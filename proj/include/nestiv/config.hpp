#pragma once

#include <map>
#include <string>

#include "nestiv/nuisance.hpp"

namespace nestiv {

inline constexpr const char* kVersion = "1.0.0";

// Flattened view of a sectioned key-value file:
//
//   # comment
//   [nuisance.mu_y]
//   family = poisson
//   ridge = 1e-4
//
// becomes {"nuisance.mu_y.family": "poisson", "nuisance.mu_y.ridge": "1e-4"}.
// Later assignments to the same key win, so a file can layer overrides.
struct ConfigFile {
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_num(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
};

// Both parsers reject malformed lines with the line number in the message.
ConfigFile parse_config_text(const std::string& text);
ConfigFile parse_config(const std::string& path);

// Accepts gaussian/linear, logit/logistic/binomial, poisson.
Family parse_family(const std::string& name);

// Learner settings from one section, starting from `base` so absent keys keep
// their defaults. Recognized keys: family, ridge, max_iter, tol,
// intercept_only, use_boost, boost_trees, boost_shrinkage.
LearnerSpec learner_from_config(const ConfigFile& cfg, const std::string& section,
                                LearnerSpec base);

// The three learner sections plus nuisance.clip_eps.
NuisanceSpec nuisance_from_config(const ConfigFile& cfg);

}  // namespace nestiv
