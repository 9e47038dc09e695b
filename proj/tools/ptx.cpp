// ptx: command-line front end for the pneumothorax toolkit.
#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "ptx/checkpoint.hpp"
#include "ptx/dataset.hpp"
#include "ptx/ensemble.hpp"
#include "ptx/error.hpp"
#include "ptx/render.hpp"
#include "ptx/report.hpp"
#include "ptx/run_config.hpp"
#include "ptx/synthgen.hpp"
#include "ptx/training.hpp"

namespace fs = std::filesystem;
using namespace ptx;

namespace {

fs::path data_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("PTX_DATA_ROOT")) return env;
  return {};
}

std::vector<ImageRecord> records_with_folds(const fs::path& manifest, const fs::path& folds_file,
                                            const std::string& root, int* k_out) {
  auto records = load_manifest(manifest, data_root(root));
  const auto folds = load_folds(folds_file);
  folds.apply(records);
  if (k_out) *k_out = folds.k;
  return records;
}

Geometry geometry_from_checkpoint(const fs::path& ckpt) {
  const auto meta = read_checkpoint(ckpt).meta;
  if (!meta.contains("geometry")) return Geometry::full();
  const auto g = meta["geometry"];
  Geometry geo{g[0].get<int>(), g[1].get<int>(), g[2].get<int>(), g[3].get<int>()};
  geo.validate();
  return geo;
}

struct SynthOpts {
  std::string out;
  SynthSpec spec;
};

struct FoldOpts {
  std::string manifest, out = "folds.tsv", root;
  int k = 5;
  std::uint64_t seed = 0;
};

struct TrainOpts {
  std::string method, manifest, folds, config, root;
  std::optional<int> fold, epochs, batch_size;
  std::optional<double> lr, decay;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> geometry, init, out, extra_pool;
  bool no_augment = false;
};

struct EvalOpts {
  std::string manifest, folds, checkpoints, out = "eval", root;
  std::optional<std::string> geometry;
  std::vector<int> fold_list;
  double step = 0.05;
};

struct SearchOpts {
  std::string scores, test, out;
  double step = 0.05;
};

struct RenderOpts {
  std::string image, mil, fcn, out = "render", geometry;
};

struct PlotOpts {
  std::vector<std::string> curves;
  std::string out = "roc.svg";
};

int run_synth(const SynthOpts& o) {
  generate(o.spec, o.out);
  return 0;
}

int run_prepare_folds(const FoldOpts& o) {
  const auto records = load_manifest(o.manifest, data_root(o.root));
  const auto folds = assign_folds(records, o.k, o.seed);
  save_folds(o.out, folds);
  for (int f = 0; f < folds.k; ++f) {
    std::cout << "fold " << f << ": " << folds.fold_patients[f] << " patients, " << folds.fold_images[f]
              << " images\n";
  }
  return 0;
}

int run_train(const TrainOpts& o) {
  const Method method = method_from_string(o.method);
  TrainConfig c = load_train_config(method, o.config);
  if (o.fold) c.fold = *o.fold;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.batch_size) c.batch_size = *o.batch_size;
  if (o.lr) c.learning_rate = *o.lr;
  if (o.decay) c.decay = *o.decay;
  if (o.seed) c.seed = *o.seed;
  if (o.geometry) c.geometry = Geometry::named(*o.geometry);
  if (o.init) c.init_checkpoint = *o.init;
  if (o.out) c.out_dir = *o.out;
  if (o.extra_pool) c.cnn.extra_pool = extra_pool_from_string(*o.extra_pool);
  if (o.no_augment) c.augment = false;
  int k = 0;
  const auto records = records_with_folds(o.manifest, o.folds, o.root, &k);
  c.k = k;
  c.validate();
  spdlog::info("train {}: {}", to_string(method), to_json(c).dump());
  const auto result = train(c, records);
  std::cout << "best epoch " << result.best_epoch + 1 << " validation " << result.best_validation << " -> "
            << result.checkpoint.string() << '\n';
  return 0;
}

int run_evaluate(const EvalOpts& o) {
  int k = 0;
  const auto records = records_with_folds(o.manifest, o.folds, o.root, &k);
  std::vector<int> folds = o.fold_list;
  if (folds.empty()) {
    for (int f = 0; f < k; ++f) folds.push_back(f);
  }
  require_checkpoints(o.checkpoints, k, folds);
  const Geometry geo =
      o.geometry ? Geometry::named(*o.geometry) : geometry_from_checkpoint(checkpoint_file(o.checkpoints, "cnn", folds[0]));
  const auto scores = score_folds(records, k, o.checkpoints, geo, folds);
  const auto report = build_report(scores, folds, o.step);
  write_evaluation(o.out, scores, report);
  for (const char* m : {"cnn", "mil", "fcn", "ensemble"}) {
    const auto& s = report.methods.at(m);
    std::printf("%-8s AUC %.3f±%.3f  TPR@1%%FPR %.3f\n", m, s.auc.mean, s.auc.std, s.tpr_at_1pct_fpr);
  }
  std::printf("dice on %zu positively classified cases: %.3f±%.3f (Youden-J threshold on validation)\n",
              report.dice.cases, report.dice.mean, report.dice.std);
  return 0;
}

int run_ensemble_search(const SearchOpts& o) {
  const auto val = read_score_table(o.scores);
  const auto result = exhaustive_search(val, o.step);
  nlohmann::json j = {{"weights", {{"cnn", result.weights.cnn}, {"mil", result.weights.mil}, {"fcn", result.weights.fcn}}},
                      {"search_auc", result.auc},
                      {"evaluated", result.evaluated},
                      {"grid_step", o.step}};
  if (!o.test.empty()) {
    const auto test = read_score_table(o.test);
    j["test_auc"] = auc(roc_curve(combine(test, result.weights), test.labels()));
  }
  const std::string text = j.dump(2);
  if (o.out.empty()) {
    std::cout << text << '\n';
  } else {
    std::ofstream(o.out) << text << '\n';
  }
  return 0;
}

int run_render(const RenderOpts& o) {
  if (o.mil.empty() && o.fcn.empty()) throw UsageError("render: give --mil and/or --fcn");
  const Image img = load_image(fs::path(o.image));
  const std::string stem = fs::path(o.image).stem().string();
  if (!o.mil.empty()) {
    if (!fs::exists(o.mil)) throw Error("checkpoint not found: " + o.mil);
    const Geometry geo = o.geometry.empty() ? geometry_from_checkpoint(o.mil) : Geometry::named(o.geometry);
    auto model = load_cnn(o.mil);
    const auto score = predict_mil(model, img, geo);
    write_png(fs::path(o.out) / (stem + "_mil.png"), render_mil(img, score, geo));
  }
  if (!o.fcn.empty()) {
    if (!fs::exists(o.fcn)) throw Error("checkpoint not found: " + o.fcn);
    const Geometry geo = o.geometry.empty() ? geometry_from_checkpoint(o.fcn) : Geometry::named(o.geometry);
    auto model = load_fcn(o.fcn);
    const Image map = predict_fcn(model, img, geo);
    write_png(fs::path(o.out) / (stem + "_fcn.png"), render_fcn_overlay(standard_input(img, geo), map));
  }
  return 0;
}

int run_plot_roc(const PlotOpts& o) {
  if (o.curves.empty()) throw UsageError("plot-roc: no curve tables given");
  std::vector<std::pair<std::string, RocCurve>> curves;
  for (const auto& arg : o.curves) {
    const auto eq = arg.find('=');
    const fs::path path = eq == std::string::npos ? arg : arg.substr(eq + 1);
    const std::string name = eq == std::string::npos ? path.stem().string() : arg.substr(0, eq);
    curves.emplace_back(name, read_curve_csv(path));
  }
  write_roc_svg(o.out, curves);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pneumothorax classification, localization and ensembling toolkit"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  SynthOpts synth;
  auto* c_synth = app.add_subcommand("synth", "Generate the synthetic chest-like dataset");
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--n", synth.spec.n_cases, "Number of cases");
  c_synth->add_option("--positive-fraction", synth.spec.positive_fraction);
  c_synth->add_option("--annotated-fraction", synth.spec.annotated_fraction, "Positives that ship a mask");
  c_synth->add_option("--side", synth.spec.image_side, "Image side in pixels");
  c_synth->add_option("--seed", synth.spec.seed);

  FoldOpts fo;
  auto* c_folds = app.add_subcommand("prepare-folds", "Patient-grouped k-fold assignment");
  c_folds->add_option("--manifest", fo.manifest)->required();
  c_folds->add_option("--k", fo.k, "Number of folds")->capture_default_str();
  c_folds->add_option("--seed", fo.seed)->capture_default_str();
  c_folds->add_option("--out", fo.out, "Fold mapping file")->capture_default_str();
  c_folds->add_option("--data-root", fo.root, "Base for relative paths (default: $PTX_DATA_ROOT)");

  TrainOpts to;
  auto* c_train = app.add_subcommand("train", "Train one method on one fold");
  c_train->add_option("method", to.method, "cnn, mil or fcn")->required();
  c_train->add_option("--manifest", to.manifest)->required();
  c_train->add_option("--folds", to.folds, "Fold mapping file")->required();
  c_train->add_option("--fold", to.fold, "Test fold");
  c_train->add_option("--config", to.config, "JSON run config (flags take precedence)");
  c_train->add_option("--epochs", to.epochs);
  c_train->add_option("--lr", to.lr, "Initial learning rate");
  c_train->add_option("--batch-size", to.batch_size);
  c_train->add_option("--decay", to.decay, "Per-epoch learning-rate decay");
  c_train->add_option("--seed", to.seed);
  c_train->add_option("--geometry", to.geometry, "full or desk");
  c_train->add_option("--extra-pool", to.extra_pool, "none, after_first_block or after_stage1");
  c_train->add_option("--init", to.init, "Checkpoint to start from");
  c_train->add_option("--out", to.out, "Run directory");
  c_train->add_flag("--no-augment", to.no_augment);
  c_train->add_option("--data-root", to.root);

  EvalOpts eo;
  auto* c_eval = app.add_subcommand("evaluate", "Score all folds and write the report");
  c_eval->add_option("--manifest", eo.manifest)->required();
  c_eval->add_option("--folds", eo.folds)->required();
  c_eval->add_option("--checkpoints", eo.checkpoints, "Directory with <method>_fold<k>.ckpt")->required();
  c_eval->add_option("--only-folds", eo.fold_list, "Restrict to these test folds");
  c_eval->add_option("--geometry", eo.geometry, "Default: as stored in the checkpoints");
  c_eval->add_option("--grid-step", eo.step)->capture_default_str();
  c_eval->add_option("--out", eo.out)->capture_default_str();
  c_eval->add_option("--data-root", eo.root);

  SearchOpts so;
  auto* c_search = app.add_subcommand("ensemble-search", "Exhaustive simplex search over ensemble weights");
  c_search->add_option("scores", so.scores, "Score table used for the search")->required();
  c_search->add_option("--test", so.test, "Score table to re-evaluate the winner on");
  c_search->add_option("--grid-step", so.step)->capture_default_str();
  c_search->add_option("--out", so.out, "JSON output (default: stdout)");

  RenderOpts ro;
  auto* c_render = app.add_subcommand("render", "MIL patch frames and FCN heat overlay for one image");
  c_render->add_option("--image", ro.image)->required();
  c_render->add_option("--mil", ro.mil, "MIL checkpoint");
  c_render->add_option("--fcn", ro.fcn, "FCN checkpoint");
  c_render->add_option("--geometry", ro.geometry, "Default: as stored in the checkpoint");
  c_render->add_option("--out", ro.out)->capture_default_str();

  PlotOpts po;
  auto* c_plot = app.add_subcommand("plot-roc", "Overlay averaged ROC curves as SVG");
  c_plot->add_option("curves", po.curves, "NAME=curve.csv or curve.csv");
  c_plot->add_option("--out", po.out)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (c_synth->parsed()) return run_synth(synth);
    if (c_folds->parsed()) return run_prepare_folds(fo);
    if (c_train->parsed()) return run_train(to);
    if (c_eval->parsed()) return run_evaluate(eo);
    if (c_search->parsed()) return run_ensemble_search(so);
    if (c_render->parsed()) return run_render(ro);
    if (c_plot->parsed()) return run_plot_roc(po);
  } catch (const UsageError& e) {
    std::cerr << "ptx: usage error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "ptx: usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "ptx: error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
