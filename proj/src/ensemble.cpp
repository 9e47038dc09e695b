#include "ptx/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ptx/evaluation.hpp"

namespace ptx {

std::vector<int> ScoreTable::labels() const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.label);
  return out;
}

std::vector<double> ScoreTable::cnn() const {
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(r.cnn);
  return out;
}

std::vector<double> ScoreTable::mil() const {
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(r.mil);
  return out;
}

std::vector<double> ScoreTable::fcn() const {
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(r.fcn);
  return out;
}

ScoreTable ScoreTable::select_folds(const std::vector<int>& folds) const {
  ScoreTable out;
  for (const auto& r : rows) {
    if (std::find(folds.begin(), folds.end(), r.fold) != folds.end()) out.rows.push_back(r);
  }
  return out;
}

void ScoreTable::validate() const {
  std::set<std::string> seen;
  for (const auto& r : rows) {
    if (!seen.insert(r.case_id).second) throw Error("score table: duplicate case " + r.case_id);
    if (r.label != 0 && r.label != 1) throw Error("score table: bad label for case " + r.case_id);
    if (!std::isfinite(r.cnn) || !std::isfinite(r.mil) || !std::isfinite(r.fcn)) {
      throw Error("score table: non-finite score for case " + r.case_id);
    }
  }
}

void write_score_table(const std::filesystem::path& path, const ScoreTable& table) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write score table: " + path.string());
  out.precision(17);
  out << "case_id,label,fold,score_cnn,score_mil,score_fcn\n";
  for (const auto& r : table.rows) {
    out << r.case_id << ',' << r.label << ',' << r.fold << ',' << r.cnn << ',' << r.mil << ',' << r.fcn << '\n';
  }
}

ScoreTable read_score_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("score table not found: " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("case_id,label,fold,score_cnn,score_mil,score_fcn", 0) != 0) {
    throw Error("score table has an unexpected header: " + path.string());
  }
  ScoreTable table;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    std::istringstream cells(line);
    std::vector<std::string> f;
    std::string cell;
    while (std::getline(cells, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw Error("score table row " + std::to_string(row) + " needs 6 columns");
    try {
      table.rows.push_back({f[0], std::stoi(f[1]), std::stoi(f[2]), std::stod(f[3]), std::stod(f[4]),
                            std::stod(f[5])});
    } catch (const std::logic_error&) {
      throw Error("score table row " + std::to_string(row) + " is malformed");
    }
  }
  table.validate();
  return table;
}

void EnsembleWeights::validate() const {
  if (cnn < 0.0 || mil < 0.0 || fcn < 0.0 || std::abs(cnn + mil + fcn - 1.0) > 1e-9) {
    throw Error("ensemble weights must be nonnegative and sum to one");
  }
}

double fcn_area_score(const Image& prob_map, double threshold) {
  if (prob_map.empty()) throw Error("fcn_area_score: empty probability map");
  const auto v = prob_map.values();
  const auto above = std::count_if(v.begin(), v.end(), [threshold](float p) { return p > threshold; });
  return static_cast<double>(above) / static_cast<double>(v.size());
}

std::vector<double> combine(const ScoreTable& table, const EnsembleWeights& w) {
  w.validate();
  std::vector<double> out;
  out.reserve(table.rows.size());
  for (const auto& r : table.rows) out.push_back(w.cnn * r.cnn + w.mil * r.mil + w.fcn * r.fcn);
  return out;
}

std::vector<EnsembleWeights> simplex_grid(double step) {
  if (!(step > 0.0 && step <= 1.0)) throw UsageError("grid step must lie in (0,1]");
  const double inv = 1.0 / step;
  const int n = static_cast<int>(std::lround(inv));
  if (std::abs(inv - n) > 1e-9) throw UsageError("grid step must divide 1");
  std::vector<EnsembleWeights> grid;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n - i; ++j) {
      const int k = n - i - j;
      grid.push_back({static_cast<double>(i) / n, static_cast<double>(j) / n, static_cast<double>(k) / n});
    }
  }
  return grid;
}

SearchResult exhaustive_search(const ScoreTable& table, double step) {
  table.validate();
  const auto labels = table.labels();
  SearchResult best;
  best.auc = -1.0;
  for (const auto& w : simplex_grid(step)) {
    const double a = auc(roc_curve(combine(table, w), labels));
    ++best.evaluated;
    if (a > best.auc + 1e-12) {
      best.auc = a;
      best.weights = w;
    }
  }
  return best;
}

}  // namespace ptx
