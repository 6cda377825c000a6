#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

namespace nestiv {

// Instrument encoding: two randomization strata (a, b), binary arm within
// each. Order is fixed and used as the cell index everywhere.
enum class Code : int { Zero_a = 0, One_a = 1, Zero_b = 2, One_b = 3 };

constexpr std::array<Code, 4> all_codes{Code::Zero_a, Code::One_a,
                                        Code::Zero_b, Code::One_b};

inline int code_index(Code z) { return static_cast<int>(z); }
inline bool in_stratum_b(Code z) { return code_index(z) >= 2; }
inline bool is_active_arm(Code z) { return code_index(z) % 2 == 1; }
Code make_code(bool stratum_b, bool active_arm);
Code parse_code(const std::string& s);
const char* code_label(Code z);

// One analysis dataset: covariates, instrument code, binary treatment
// received, outcome, optional exposure offset (for rate outcomes).
struct ObservationTable {
  Eigen::MatrixXd x;
  std::vector<Code> z;
  Eigen::VectorXd d;
  Eigen::VectorXd y;
  Eigen::VectorXd offset;  // empty when absent

  int n() const { return static_cast<int>(y.size()); }
  int dim_x() const { return static_cast<int>(x.cols()); }
  bool has_offset() const { return offset.size() > 0; }
};

// CSV schema (header required): z,x1,...,x{d},d,y[,offset]
ObservationTable read_csv(const std::string& path);
void write_csv(const ObservationTable& t, const std::string& path);

struct ValidationReport {
  std::array<int, 4> cell_counts{};
  // raw arm contrasts of treatment uptake within each stratum
  double compliance_a = 0.0;
  double compliance_b = 0.0;
  double compliance_gap = 0.0;  // b minus a, the raw switcher mass
  std::vector<std::string> flags;
  bool fatal = false;  // set when estimation cannot proceed (empty cell)
};

// Design screens run before any estimation: cell counts, raw compliance by
// stratum, and the gap that the nested-instrument analysis divides by.
ValidationReport validate(const ObservationTable& t, int min_cell = 10);

struct FoldAssignment {
  std::vector<int> fold_of;  // 0..k-1 per row
  int k = 0;
};

// Instrument-stratified folds: rows are shuffled within each code cell and
// dealt round-robin with a cursor that carries across cells, so both overall
// and per-cell fold sizes differ by at most one. Deterministic in seed.
FoldAssignment make_folds(const ObservationTable& t, int k, std::uint64_t seed);

}  // namespace nestiv
