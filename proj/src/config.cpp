#include "nestiv/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nestiv {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

bool ConfigFile::has(const std::string& key) const {
  return values.find(key) != values.end();
}

std::string ConfigFile::get(const std::string& key, const std::string& fallback) const {
  const auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

double ConfigFile::get_num(const std::string& key, double fallback) const {
  const auto it = values.find(key);
  if (it == values.end()) return fallback;
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(it->second, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key " + key + ": '" + it->second +
                                "' is not a number");
  }
  if (used != it->second.size()) {
    throw std::invalid_argument("config key " + key + ": '" + it->second +
                                "' is not a number");
  }
  return v;
}

int ConfigFile::get_int(const std::string& key, int fallback) const {
  const double v = get_num(key, static_cast<double>(fallback));
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) {
    throw std::invalid_argument("config key " + key + ": expected an integer");
  }
  return i;
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  const auto it = values.find(key);
  if (it == values.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config key " + key + ": '" + v + "' is not a boolean");
}

ConfigFile parse_config_text(const std::string& text) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) {
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": malformed section header '" + t + "'");
      }
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) {
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": empty section name");
      }
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value, got '" + t + "'");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": empty key");
    }
    cfg.values[section.empty() ? key : section + "." + key] = value;
  }
  return cfg;
}

ConfigFile parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

Family parse_family(const std::string& name) {
  if (name == "gaussian" || name == "linear") return Family::LinearGaussian;
  if (name == "logit" || name == "logistic" || name == "binomial") {
    return Family::BinomialLogit;
  }
  if (name == "poisson") return Family::PoissonLog;
  throw std::invalid_argument("unknown learner family '" + name +
                              "' (expected gaussian, logistic, or poisson)");
}

LearnerSpec learner_from_config(const ConfigFile& cfg, const std::string& section,
                                LearnerSpec base) {
  const std::string fam = cfg.get(section + ".family", "");
  if (!fam.empty()) base.family = parse_family(fam);
  base.ridge = cfg.get_num(section + ".ridge", base.ridge);
  base.max_iter = cfg.get_int(section + ".max_iter", base.max_iter);
  base.tol = cfg.get_num(section + ".tol", base.tol);
  base.intercept_only = cfg.get_bool(section + ".intercept_only", base.intercept_only);
  base.use_boost = cfg.get_bool(section + ".use_boost", base.use_boost);
  base.boost_trees = cfg.get_int(section + ".boost_trees", base.boost_trees);
  base.boost_shrinkage = cfg.get_num(section + ".boost_shrinkage", base.boost_shrinkage);
  return base;
}

NuisanceSpec nuisance_from_config(const ConfigFile& cfg) {
  NuisanceSpec spec;
  spec.pi = learner_from_config(cfg, "nuisance.pi", spec.pi);
  spec.mu_y = learner_from_config(cfg, "nuisance.mu_y", spec.mu_y);
  spec.mu_d = learner_from_config(cfg, "nuisance.mu_d", spec.mu_d);
  spec.clip_eps = cfg.get_num("nuisance.clip_eps", spec.clip_eps);
  return spec;
}

}  // namespace nestiv
