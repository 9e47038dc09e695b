#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "ptx/grid.hpp"

namespace ptx {

// Image-level scores of the three methods for one case.
struct ScoreRow {
  std::string case_id;
  int label = 0;
  int fold = 0;
  double cnn = 0.0;
  double mil = 0.0;
  double fcn = 0.0;  // area score
};

struct ScoreTable {
  std::vector<ScoreRow> rows;

  std::vector<int> labels() const;
  std::vector<double> cnn() const;
  std::vector<double> mil() const;
  std::vector<double> fcn() const;
  // Rows whose fold is in `folds`.
  ScoreTable select_folds(const std::vector<int>& folds) const;
  void validate() const;
};

// `case_id,label,fold,score_cnn,score_mil,score_fcn` with header.
void write_score_table(const std::filesystem::path& path, const ScoreTable& table);
ScoreTable read_score_table(const std::filesystem::path& path);

struct EnsembleWeights {
  double cnn = 1.0;
  double mil = 0.0;
  double fcn = 0.0;

  std::array<double, 3> as_array() const { return {cnn, mil, fcn}; }
  // Nonnegative and summing to one within 1e-9.
  void validate() const;
  friend bool operator==(const EnsembleWeights&, const EnsembleWeights&) = default;
};

// Fraction of pixels with probability above `threshold`.
double fcn_area_score(const Image& prob_map, double threshold = 0.5);

std::vector<double> combine(const ScoreTable& table, const EnsembleWeights& w);

// Lattice points i/n + j/n + k/n = 1 with n = 1/step, in lexicographically
// ascending (cnn, mil, fcn) order.
std::vector<EnsembleWeights> simplex_grid(double step);

struct SearchResult {
  EnsembleWeights weights;
  double auc = 0.0;
  std::size_t evaluated = 0;
};

// Maximizes AUC of combine(table, w) over simplex_grid(step). Ties within
// 1e-12 keep the lexicographically smallest weights.
SearchResult exhaustive_search(const ScoreTable& table, double step = 0.05);

}  // namespace ptx
