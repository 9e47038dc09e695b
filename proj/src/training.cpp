#include "ptx/training.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "ptx/checkpoint.hpp"
#include "ptx/error.hpp"
#include "ptx/evaluation.hpp"

namespace ptx {

std::string to_string(Method m) {
  switch (m) {
    case Method::kCnn: return "cnn";
    case Method::kMil: return "mil";
    case Method::kFcn: return "fcn";
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  if (name == "cnn") return Method::kCnn;
  if (name == "mil") return Method::kMil;
  if (name == "fcn") return Method::kFcn;
  throw UsageError("unknown method '" + name + "' (expected cnn, mil or fcn)");
}

TrainConfig TrainConfig::defaults(Method m) {
  TrainConfig c;
  c.method = m;
  switch (m) {
    case Method::kCnn: c.learning_rate = 1e-4; c.epochs = 40; break;
    case Method::kMil: c.learning_rate = 1e-5; c.epochs = 30; break;
    case Method::kFcn: c.learning_rate = 1e-4; c.epochs = 400; break;
  }
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw UsageError("learning rate must be positive");
  if (epochs < 1) throw UsageError("epochs must be at least 1");
  if (batch_size < 1) throw UsageError("batch size must be at least 1");
  if (!(decay > 0.0 && decay <= 1.0)) throw UsageError("decay must lie in (0,1]");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw UsageError("Adam betas must lie in [0,1)");
  if (k < 2) throw UsageError("k must be at least 2");
  if (fold < 0 || fold >= k) throw UsageError("fold " + std::to_string(fold) + " outside 0.." + std::to_string(k - 1));
  geometry.validate();
  augmentation.validate();
  fcn.validate();
}

std::filesystem::path TrainConfig::checkpoint_path() const {
  return out_dir / (to_string(method) + "_fold" + std::to_string(fold) + ".ckpt");
}

std::filesystem::path TrainConfig::history_path() const {
  return out_dir / (to_string(method) + "_fold" + std::to_string(fold) + "_history.csv");
}

double lr_at(int epoch, const TrainConfig& config) {
  return config.learning_rate * std::pow(config.decay, epoch);
}

void write_history_csv(const std::filesystem::path& path, std::span<const EpochStats> history) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write history: " + path.string());
  out.precision(10);
  out << "epoch,lr,loss,validation\n";
  for (const auto& e : history) out << e.epoch << ',' << e.lr << ',' << e.loss << ',' << e.validation << '\n';
}

// ---------------------------------------------------------------------------
// Inference

double predict_cnn(ResNet50& model, const Image& img, const Geometry& geo) {
  torch::NoGradGuard no_grad;
  model->eval();
  const auto crops = five_crop(resize_bilinear(img, geo.resize_side, geo.resize_side), geo);
  const auto probs = torch::sigmoid(model->forward(to_batch(crops))).view({-1});
  return probs.mean().item<double>();
}

BagScore predict_mil(ResNet50& model, const Image& img, const Geometry& geo) {
  return mil_forward(model, make_bag(img, geo));
}

Image predict_fcn(UNet& model, const Image& img, const Geometry& geo) {
  torch::NoGradGuard no_grad;
  model->eval();
  const Image input = standard_input(img, geo);
  return tensor_to_image(model->forward(to_batch(std::span<const Image>(&input, 1))));
}

// ---------------------------------------------------------------------------
// Training loops

namespace {

struct Sample {
  const ImageRecord* record = nullptr;
  std::size_t index = 0;  // position in the caller's record list, seeds augmentation
  Image image;            // full resolution
  std::optional<Mask> mask;
};

std::vector<Sample> load_samples(const std::vector<ImageRecord>& records, std::span<const ImageRecord> all,
                                 bool with_masks) {
  std::vector<Sample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    Sample s;
    s.record = &r;
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (all[i].image_path == r.image_path) {
        s.index = i;
        break;
      }
    }
    s.image = load_image(r);
    if (with_masks) s.mask = load_mask(r, s.image.rows(), s.image.cols());
    out.push_back(std::move(s));
  }
  return out;
}

void set_lr(torch::optim::Adam& opt, double lr) {
  for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

void check_finite(const torch::Tensor& loss, int epoch, std::size_t step) {
  const double v = loss.item<double>();
  if (!std::isfinite(v)) {
    throw Error("training diverged: loss is " + std::to_string(v) + " at epoch " + std::to_string(epoch) +
                ", step " + std::to_string(step) + "; try a lower learning rate");
  }
}

torch::Tensor labels_tensor(std::span<const Sample* const> batch) {
  std::vector<float> y;
  for (const auto* s : batch) y.push_back(static_cast<float>(s->record->label));
  return torch::tensor(y).view({-1, 1});
}

double auc_or_throw(const std::vector<double>& scores, const std::vector<int>& labels, const char* what) {
  const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  const bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
  if (!has_pos || !has_neg) throw Error(std::string(what) + ": validation fold needs both classes to compute AUC");
  return auc(roc_curve(scores, labels));
}

class Trainer {
 public:
  Trainer(const TrainConfig& config, std::span<const ImageRecord> records) : config_(config), all_(records) {
    config_.validate();
    const auto roles = SplitRoles::for_test_fold(config_.fold, config_.k);
    split_ = split_records(records, roles);
    if (config_.method == Method::kFcn) {
      split_.train = segmentation_subset(split_.train);
    }
    if (split_.train.empty()) throw Error("training split for fold " + std::to_string(config_.fold) + " is empty");
    if (split_.validation.empty()) {
      throw Error("validation fold " + std::to_string(roles.validation_fold) + " is empty");
    }
    const bool masks = config_.method == Method::kFcn;
    train_ = load_samples(split_.train, all_, masks);
    validation_ = load_samples(split_.validation, all_, masks);
    spdlog::info("{} fold {}: {} training, {} validation images (validation fold {})", to_string(config_.method),
                 config_.fold, train_.size(), validation_.size(), roles.validation_fold);
    aug_ = config_.augment ? config_.augmentation : AugmentationParams::identity();
  }

  TrainResult run() {
    torch::manual_seed(config_.seed);
    if (config_.method == Method::kFcn) {
      UNet model = build_fcn(config_.fcn);
      if (config_.init_checkpoint) load_state(*model, read_checkpoint(*config_.init_checkpoint));
      return loop(*model, [&](int epoch, torch::optim::Adam& opt) { return fcn_epoch(model, epoch, opt); },
                  [&] { return fcn_validation(model); },
                  [&](const nlohmann::json& meta) { save_checkpoint(config_.checkpoint_path(), model, meta); });
    }
    CnnConfig cfg = config_.cnn;
    cfg.input_size = config_.geometry.crop_side;
    ResNet50 model = build_cnn(cfg);
    if (config_.init_checkpoint) load_state(*model, read_checkpoint(*config_.init_checkpoint));
    const bool mil = config_.method == Method::kMil;
    return loop(
        *model,
        [&](int epoch, torch::optim::Adam& opt) { return mil ? mil_epoch(model, epoch, opt) : cnn_epoch(model, epoch, opt); },
        [&] { return mil ? mil_validation(model) : cnn_validation(model); },
        [&](const nlohmann::json& meta) { save_checkpoint(config_.checkpoint_path(), model, meta); });
  }

 private:
  template <typename EpochFn, typename ValidateFn, typename SaveFn>
  TrainResult loop(torch::nn::Module& module, EpochFn&& epoch_fn, ValidateFn&& validate_fn, SaveFn&& save_fn) {
    torch::optim::Adam opt(module.parameters(), torch::optim::AdamOptions(config_.learning_rate)
                                                    .betas({config_.beta1, config_.beta2}));
    TrainResult result;
    result.checkpoint = config_.checkpoint_path();
    for (int epoch = 0; epoch < config_.epochs; ++epoch) {
      const auto t0 = std::chrono::steady_clock::now();
      EpochStats stats;
      stats.epoch = epoch;
      stats.lr = lr_at(epoch, config_);
      set_lr(opt, stats.lr);
      stats.loss = epoch_fn(epoch, opt);
      stats.validation = validate_fn();
      result.history.push_back(stats);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const bool best = result.best_epoch < 0 || stats.validation > result.best_validation;
      spdlog::info("{} fold {} epoch {}/{}: lr {:.3g} loss {:.5f} validation {:.4f}{} ({:.1f}s)",
                   to_string(config_.method), config_.fold, epoch + 1, config_.epochs, stats.lr, stats.loss,
                   stats.validation, best ? " *" : "", secs);
      if (best) {
        result.best_epoch = epoch;
        result.best_validation = stats.validation;
        save_fn(nlohmann::json{{"method", to_string(config_.method)},
                               {"fold", config_.fold},
                               {"k", config_.k},
                               {"epoch", epoch},
                               {"validation", stats.validation},
                               {"seed", config_.seed},
                               {"geometry",
                                {config_.geometry.resize_side, config_.geometry.crop_side,
                                 config_.geometry.bag_side, config_.geometry.grid}}});
      }
      write_history_csv(config_.history_path(), result.history);
    }
    return result;
  }

  std::vector<const Sample*> shuffled(int epoch) {
    std::vector<const Sample*> order;
    for (const auto& s : train_) order.push_back(&s);
    std::mt19937_64 rng(config_.seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    return order;
  }

  std::mt19937_64 sample_rng(const Sample& s, int epoch) const {
    return record_rng(aug_.seed ^ (config_.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(epoch)), s.index);
  }

  Augmented augmented(const Sample& s, int epoch) const {
    auto rng = sample_rng(s, epoch);
    return augment(s.image, s.mask ? &*s.mask : nullptr, aug_, rng);
  }

  double cnn_epoch(ResNet50& model, int epoch, torch::optim::Adam& opt) {
    model->train();
    const auto order = shuffled(epoch);
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config_.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config_.batch_size));
      std::span<const Sample* const> batch(order.data() + start, end - start);
      std::vector<Image> inputs;
      for (const auto* s : batch) inputs.push_back(standard_input(augmented(*s, epoch).image, config_.geometry));
      opt.zero_grad();
      const auto prob = torch::sigmoid(model->forward(to_batch(inputs)));
      const auto loss = binary_ce(prob, labels_tensor(batch));
      check_finite(loss, epoch, steps);
      loss.backward();
      opt.step();
      total += loss.item<double>();
      ++steps;
    }
    return total / static_cast<double>(steps);
  }

  double cnn_validation(ResNet50& model) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& s : validation_) {
      scores.push_back(predict_cnn(model, s.image, config_.geometry));
      labels.push_back(s.record->label);
    }
    return auc_or_throw(scores, labels, "cnn");
  }

  // One bag per optimizer step.
  double mil_epoch(ResNet50& model, int epoch, torch::optim::Adam& opt) {
    model->train();
    const auto order = shuffled(epoch);
    double total = 0.0;
    std::size_t steps = 0;
    for (const auto* s : order) {
      const auto bag = make_bag(augmented(*s, epoch).image, config_.geometry);
      opt.zero_grad();
      const auto prob = mil_bag_probability(model, to_batch(bag.patches));
      const auto loss = binary_ce(prob.view({1}), torch::tensor({static_cast<float>(s->record->label)}));
      check_finite(loss, epoch, steps);
      loss.backward();
      opt.step();
      total += loss.item<double>();
      ++steps;
    }
    return total / static_cast<double>(steps);
  }

  double mil_validation(ResNet50& model) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& s : validation_) {
      scores.push_back(predict_mil(model, s.image, config_.geometry).bag_score);
      labels.push_back(s.record->label);
    }
    return auc_or_throw(scores, labels, "mil");
  }

  double fcn_epoch(UNet& model, int epoch, torch::optim::Adam& opt) {
    model->train();
    const auto order = shuffled(epoch);
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config_.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config_.batch_size));
      std::vector<Image> inputs;
      std::vector<Image> targets;
      for (std::size_t i = start; i < end; ++i) {
        const auto a = augmented(*order[i], epoch);
        inputs.push_back(standard_input(a.image, config_.geometry));
        targets.push_back(to_image(standard_input(*a.mask, config_.geometry)));
      }
      opt.zero_grad();
      const auto loss = weighted_pixel_ce(model->forward(to_batch(inputs)), to_batch(targets), config_.pixel_weights);
      check_finite(loss, epoch, steps);
      loss.backward();
      opt.step();
      total += loss.item<double>();
      ++steps;
    }
    return total / static_cast<double>(steps);
  }

  // Mean Dice over annotated validation positives.
  double fcn_validation(UNet& model) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& s : validation_) {
      if (s.record->label != 1 || !s.record->mask_path) continue;
      const Mask pred = binarize(predict_fcn(model, s.image, config_.geometry));
      total += dice(pred, standard_input(*s.mask, config_.geometry));
      ++n;
    }
    if (n == 0) throw Error("fcn: validation fold has no annotated positives to compute Dice");
    return total / static_cast<double>(n);
  }

  TrainConfig config_;
  std::span<const ImageRecord> all_;
  Split split_;
  std::vector<Sample> train_;
  std::vector<Sample> validation_;
  AugmentationParams aug_;
};

}  // namespace

TrainResult train(const TrainConfig& config, std::span<const ImageRecord> records) {
  for (const auto& r : records) {
    if (r.fold < 0) throw Error("record " + r.image_path.string() + " has no fold; assign folds first");
  }
  Trainer trainer(config, records);
  return trainer.run();
}

}  // namespace ptx
