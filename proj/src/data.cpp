#include "nestiv/data.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "nestiv/rng.hpp"

namespace nestiv {

Code make_code(bool stratum_b, bool active_arm) {
  return static_cast<Code>((stratum_b ? 2 : 0) + (active_arm ? 1 : 0));
}

Code parse_code(const std::string& s) {
  if (s == "0a") return Code::Zero_a;
  if (s == "1a") return Code::One_a;
  if (s == "0b") return Code::Zero_b;
  if (s == "1b") return Code::One_b;
  throw std::invalid_argument("instrument code must be one of 0a,1a,0b,1b; got '" + s + "'");
}

const char* code_label(Code z) {
  switch (z) {
    case Code::Zero_a: return "0a";
    case Code::One_a: return "1a";
    case Code::Zero_b: return "0b";
    case Code::One_b: return "1b";
  }
  return "?";
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_num(const std::string& tok, int lineno, const std::string& col) {
  if (tok.empty())
    throw std::invalid_argument("line " + std::to_string(lineno) + ": empty field in column " + col);
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || !std::isfinite(v))
    throw std::invalid_argument("line " + std::to_string(lineno) + ": bad numeric value '" + tok +
                                "' in column " + col);
  return v;
}

}  // namespace

ObservationTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument(path + ": empty file");
  const auto header = split_line(line);
  if (header.size() < 4 || header.front() != "z")
    throw std::invalid_argument(path + ": header must start with z,x1,...");
  bool has_offset = header.back() == "offset";
  const std::size_t ycol = header.size() - (has_offset ? 2 : 1);
  if (header[ycol] != "y" || header[ycol - 1] != "d")
    throw std::invalid_argument(path + ": header must end with d,y[,offset]");
  const int dx = static_cast<int>(ycol) - 2;
  if (dx < 1) throw std::invalid_argument(path + ": no covariate columns");
  for (int j = 0; j < dx; ++j) {
    if (header[1 + j] != "x" + std::to_string(j + 1))
      throw std::invalid_argument(path + ": covariate columns must be x1..x" + std::to_string(dx));
  }

  std::vector<std::array<double, 2>> dy;
  std::vector<double> xs, offs;
  std::vector<Code> zs;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tok = split_line(line);
    if (tok.size() != header.size())
      throw std::invalid_argument(path + ": line " + std::to_string(lineno) + " has " +
                                  std::to_string(tok.size()) + " fields, expected " +
                                  std::to_string(header.size()));
    try {
      zs.push_back(parse_code(tok[0]));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path + ": line " + std::to_string(lineno) + ": " + e.what());
    }
    for (int j = 0; j < dx; ++j) xs.push_back(parse_num(tok[1 + j], lineno, header[1 + j]));
    const double dv = parse_num(tok[ycol - 1], lineno, "d");
    if (dv != 0.0 && dv != 1.0)
      throw std::invalid_argument(path + ": line " + std::to_string(lineno) + ": d must be 0 or 1");
    const double yv = parse_num(tok[ycol], lineno, "y");
    dy.push_back({dv, yv});
    if (has_offset) {
      const double ov = parse_num(tok[ycol + 1], lineno, "offset");
      if (ov <= 0.0)
        throw std::invalid_argument(path + ": line " + std::to_string(lineno) + ": offset must be > 0");
      offs.push_back(ov);
    }
  }
  const int n = static_cast<int>(zs.size());
  if (n == 0) throw std::invalid_argument(path + ": no data rows");

  ObservationTable t;
  t.z = std::move(zs);
  t.x.resize(n, dx);
  t.d.resize(n);
  t.y.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dx; ++j) t.x(i, j) = xs[static_cast<std::size_t>(i) * dx + j];
    t.d(i) = dy[i][0];
    t.y(i) = dy[i][1];
  }
  if (has_offset) {
    t.offset.resize(n);
    for (int i = 0; i < n; ++i) t.offset(i) = offs[i];
  }
  return t;
}

void write_csv(const ObservationTable& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write " + path);
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "z";
  for (int j = 0; j < t.dim_x(); ++j) out << ",x" << j + 1;
  out << ",d,y";
  if (t.has_offset()) out << ",offset";
  out << "\n";
  for (int i = 0; i < t.n(); ++i) {
    out << code_label(t.z[i]);
    for (int j = 0; j < t.dim_x(); ++j) out << "," << t.x(i, j);
    out << "," << t.d(i) << "," << t.y(i);
    if (t.has_offset()) out << "," << t.offset(i);
    out << "\n";
  }
}

ValidationReport validate(const ObservationTable& t, int min_cell) {
  ValidationReport r;
  std::array<double, 4> dsum{};
  for (int i = 0; i < t.n(); ++i) {
    const int c = code_index(t.z[i]);
    r.cell_counts[c]++;
    dsum[c] += t.d(i);
  }
  for (Code z : all_codes) {
    const int c = code_index(z);
    if (r.cell_counts[c] == 0) {
      r.flags.push_back(std::string("EmptyCell:") + code_label(z));
      r.fatal = true;
    } else if (r.cell_counts[c] < min_cell) {
      r.flags.push_back(std::string("TinyCell:") + code_label(z));
    }
  }
  auto cell_mean = [&](Code z) {
    const int c = code_index(z);
    return r.cell_counts[c] > 0 ? dsum[c] / r.cell_counts[c]
                                : std::numeric_limits<double>::quiet_NaN();
  };
  r.compliance_a = cell_mean(Code::One_a) - cell_mean(Code::Zero_a);
  r.compliance_b = cell_mean(Code::One_b) - cell_mean(Code::Zero_b);
  r.compliance_gap = r.compliance_b - r.compliance_a;
  if (std::isfinite(r.compliance_gap)) {
    if (std::abs(r.compliance_gap) < 0.02) r.flags.push_back("NonEqualComplianceViolated");
    if (r.compliance_gap < 0.0) r.flags.push_back("NegativeComplianceGap");
  }
  return r;
}

FoldAssignment make_folds(const ObservationTable& t, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("make_folds: need k >= 2");
  std::array<std::vector<int>, 4> cells;
  for (int i = 0; i < t.n(); ++i) cells[code_index(t.z[i])].push_back(i);
  for (const auto& cell : cells) {
    if (static_cast<int>(cell.size()) < k)
      throw std::invalid_argument("make_folds: every instrument cell needs at least k rows");
  }
  FoldAssignment f;
  f.k = k;
  f.fold_of.assign(t.n(), -1);
  int cursor = 0;
  for (int c = 0; c < 4; ++c) {
    Rng rng(seed, "folds", static_cast<std::uint64_t>(c));
    rng.shuffle(cells[c]);
    for (int row : cells[c]) f.fold_of[row] = (cursor++) % k;
  }
  return f;
}

}  // namespace nestiv
