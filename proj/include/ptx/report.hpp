#pragma once

#include <filesystem>
#include <json.hpp>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ptx/dataset.hpp"
#include "ptx/ensemble.hpp"
#include "ptx/evaluation.hpp"
#include "ptx/preprocess.hpp"

namespace ptx {

// Per test case: Dice of the thresholded FCN map against the reference mask
// (empty for negatives); absent for positives without an annotation.
struct CaseDice {
  std::string case_id;
  int fold = 0;
  std::optional<double> dice;
};

struct FoldScores {
  int k = 5;
  ScoreTable validation;  // case scored by the model whose validation fold it is in
  ScoreTable test;        // case scored by the model whose test fold it is in
  std::vector<CaseDice> test_dice;
};

// `<dir>/<method>_fold<k>.ckpt` for the three methods. Throws listing every
// absent file before any scoring happens.
std::filesystem::path checkpoint_file(const std::filesystem::path& dir, const std::string& method, int fold);
void require_checkpoints(const std::filesystem::path& dir, int k, std::span<const int> folds);

// Scores every validation and test case of `folds` with the checkpoints of
// each fold. `records` must carry fold indices.
FoldScores score_folds(std::span<const ImageRecord> records, int k, const std::filesystem::path& checkpoint_dir,
                       const Geometry& geo, std::span<const int> folds);

struct MethodSummary {
  std::vector<double> fold_auc;
  MeanStd auc;
  RocCurve averaged;
  double tpr_at_1pct_fpr = 0.0;
};

struct DiceSummary {
  std::vector<double> fold_threshold;  // Youden-J on each model's validation fold
  std::size_t cases = 0;               // positively classified test cases with a reference
  double mean = 0.0;
  double std = 0.0;
  std::string rule;
};

struct EvalReport {
  std::vector<int> folds;
  std::map<std::string, MethodSummary> methods;  // cnn, mil, fcn, ensemble
  EnsembleWeights ensemble_weights;
  double ensemble_validation_auc = 0.0;
  std::map<std::string, double> p_ensemble_vs;  // DeLong on pooled test scores
  DiceSummary dice;
};

EvalReport build_report(const FoldScores& scores, std::span<const int> folds, double grid_step = 0.05);
nlohmann::json to_json(const EvalReport& report);

// scores_val.csv, scores_test.csv, roc_<method>.csv and report.json.
void write_evaluation(const std::filesystem::path& out_dir, const FoldScores& scores, const EvalReport& report);

}  // namespace ptx
