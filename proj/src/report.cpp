#include "ptx/report.hpp"

#include <spdlog/spdlog.h>

#include <fstream>
#include <functional>

#include "ptx/checkpoint.hpp"
#include "ptx/error.hpp"
#include "ptx/training.hpp"

namespace ptx {

namespace {

const char* const kMethods[] = {"cnn", "mil", "fcn"};

struct FoldModels {
  ResNet50 cnn{nullptr};
  ResNet50 mil{nullptr};
  UNet fcn{nullptr};
};

ScoreRow score_case(FoldModels& m, const ImageRecord& r, const Image& img, const Geometry& geo, Image* fcn_map) {
  ScoreRow row;
  row.case_id = r.case_id();
  row.label = r.label;
  row.fold = r.fold;
  row.cnn = predict_cnn(m.cnn, img, geo);
  row.mil = predict_mil(m.mil, img, geo).bag_score;
  Image map = predict_fcn(m.fcn, img, geo);
  row.fcn = fcn_area_score(map);
  if (fcn_map) *fcn_map = std::move(map);
  return row;
}

MethodSummary summarize_method(const ScoreTable& test, std::span<const int> folds,
                               const std::function<std::vector<double>(const ScoreTable&)>& column) {
  MethodSummary s;
  std::vector<RocCurve> curves;
  for (int f : folds) {
    const auto part = test.select_folds({f});
    curves.push_back(roc_curve(column(part), part.labels()));
    s.fold_auc.push_back(auc(curves.back()));
  }
  s.auc = mean_std(s.fold_auc);
  s.averaged = average_curves(curves);
  s.tpr_at_1pct_fpr = tpr_at_fpr(s.averaged, 0.01);
  return s;
}

}  // namespace

std::filesystem::path checkpoint_file(const std::filesystem::path& dir, const std::string& method, int fold) {
  return dir / (method + "_fold" + std::to_string(fold) + ".ckpt");
}

void require_checkpoints(const std::filesystem::path& dir, int k, std::span<const int> folds) {
  std::string missing;
  for (int f : folds) {
    if (f < 0 || f >= k) throw UsageError("fold " + std::to_string(f) + " outside 0.." + std::to_string(k - 1));
    for (const char* m : kMethods) {
      const auto p = checkpoint_file(dir, m, f);
      if (!std::filesystem::exists(p)) missing += (missing.empty() ? "" : ", ") + std::string(m) + " fold " + std::to_string(f);
    }
  }
  if (!missing.empty()) throw Error("missing checkpoints in " + dir.string() + ": " + missing);
}

FoldScores score_folds(std::span<const ImageRecord> records, int k, const std::filesystem::path& checkpoint_dir,
                       const Geometry& geo, std::span<const int> folds) {
  require_checkpoints(checkpoint_dir, k, folds);
  FoldScores out;
  out.k = k;
  for (int f : folds) {
    FoldModels m{load_cnn(checkpoint_file(checkpoint_dir, "cnn", f)), load_cnn(checkpoint_file(checkpoint_dir, "mil", f)),
                 load_fcn(checkpoint_file(checkpoint_dir, "fcn", f))};
    const auto split = split_records(records, SplitRoles::for_test_fold(f, k));
    for (const auto& r : split.validation) out.validation.rows.push_back(score_case(m, r, load_image(r), geo, nullptr));
    for (const auto& r : split.test) {
      const Image img = load_image(r);
      Image map;
      out.test.rows.push_back(score_case(m, r, img, geo, &map));
      CaseDice cd{r.case_id(), r.fold, std::nullopt};
      if (r.label == 0 || r.mask_path) {
        cd.dice = dice(binarize(map), standard_input(load_mask(r, img.rows(), img.cols()), geo));
      }
      out.test_dice.push_back(std::move(cd));
    }
    spdlog::info("evaluate: scored fold {} ({} validation, {} test cases)", f, split.validation.size(), split.test.size());
  }
  out.validation.validate();
  out.test.validate();
  return out;
}

EvalReport build_report(const FoldScores& scores, std::span<const int> folds, double grid_step) {
  if (folds.empty()) throw UsageError("no folds to report");
  EvalReport rep;
  rep.folds.assign(folds.begin(), folds.end());

  rep.methods["cnn"] = summarize_method(scores.test, folds, [](const ScoreTable& t) { return t.cnn(); });
  rep.methods["mil"] = summarize_method(scores.test, folds, [](const ScoreTable& t) { return t.mil(); });
  rep.methods["fcn"] = summarize_method(scores.test, folds, [](const ScoreTable& t) { return t.fcn(); });

  const auto search = exhaustive_search(scores.validation, grid_step);
  rep.ensemble_weights = search.weights;
  rep.ensemble_validation_auc = search.auc;
  const auto w = search.weights;
  rep.methods["ensemble"] =
      summarize_method(scores.test, folds, [w](const ScoreTable& t) { return combine(t, w); });

  const auto labels = scores.test.labels();
  const auto ens = combine(scores.test, w);
  rep.p_ensemble_vs["cnn"] = paired_auc_test(ens, scores.test.cnn(), labels);
  rep.p_ensemble_vs["mil"] = paired_auc_test(ens, scores.test.mil(), labels);
  rep.p_ensemble_vs["fcn"] = paired_auc_test(ens, scores.test.fcn(), labels);

  // Dice over positively classified test cases: FCN area score at or above the
  // Youden-J threshold of the same model on its validation fold.
  std::map<std::string, double> fcn_score;
  for (const auto& r : scores.test.rows) fcn_score[r.case_id] = r.fcn;
  std::vector<double> values;
  for (int f : folds) {
    const int val_fold = SplitRoles::for_test_fold(f, scores.k).validation_fold;
    const auto val = scores.validation.select_folds({val_fold});
    const double thr = youden_threshold(roc_curve(val.fcn(), val.labels()));
    rep.dice.fold_threshold.push_back(thr);
    for (const auto& cd : scores.test_dice) {
      if (cd.fold != f || !cd.dice) continue;
      if (fcn_score.at(cd.case_id) >= thr) values.push_back(*cd.dice);
    }
  }
  rep.dice.cases = values.size();
  if (!values.empty()) {
    const auto ms = mean_std(values);
    rep.dice.mean = ms.mean;
    rep.dice.std = ms.std;
  }
  rep.dice.rule =
      "positively classified = FCN area score >= Youden-J threshold chosen on the model's validation fold; "
      "negatives classified positive count with their Dice against an empty reference";
  return rep;
}

nlohmann::json to_json(const EvalReport& rep) {
  nlohmann::json j;
  j["folds"] = rep.folds;
  for (const auto& [name, s] : rep.methods) {
    j["methods"][name] = {{"fold_auc", s.fold_auc},
                          {"auc_mean", s.auc.mean},
                          {"auc_std", s.auc.std},
                          {"auc", fmt::format("{:.3f}±{:.3f}", s.auc.mean, s.auc.std)},
                          {"tpr_at_1pct_fpr", s.tpr_at_1pct_fpr}};
  }
  j["ensemble"] = {{"weights", {{"cnn", rep.ensemble_weights.cnn}, {"mil", rep.ensemble_weights.mil},
                                {"fcn", rep.ensemble_weights.fcn}}},
                   {"validation_auc", rep.ensemble_validation_auc},
                   {"p_value_vs", rep.p_ensemble_vs}};
  j["dice"] = {{"fold_threshold", rep.dice.fold_threshold},
               {"cases", rep.dice.cases},
               {"mean", rep.dice.mean},
               {"std", rep.dice.std},
               {"rule", rep.dice.rule}};
  return j;
}

void write_evaluation(const std::filesystem::path& out_dir, const FoldScores& scores, const EvalReport& report) {
  std::filesystem::create_directories(out_dir);
  write_score_table(out_dir / "scores_val.csv", scores.validation);
  write_score_table(out_dir / "scores_test.csv", scores.test);
  for (const auto& [name, s] : report.methods) write_curve_csv(out_dir / ("roc_" + name + ".csv"), s.averaged);
  std::ofstream out(out_dir / "report.json");
  if (!out) throw Error("cannot write report in " + out_dir.string());
  out << to_json(report).dump(2) << '\n';
}

}  // namespace ptx
