#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ptx/dataset.hpp"
#include "ptx/losses.hpp"
#include "ptx/models.hpp"
#include "ptx/preprocess.hpp"

namespace ptx {

enum class Method { kCnn, kMil, kFcn };

std::string to_string(Method m);
Method method_from_string(const std::string& name);  // UsageError if unknown

struct TrainConfig {
  Method method = Method::kCnn;
  double learning_rate = 1e-4;
  int epochs = 40;
  int batch_size = 16;
  double decay = 0.95;  // per-epoch exponential LR decay
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  int fold = 0;  // test fold; validation is (fold + 1) mod k
  int k = 5;
  Geometry geometry;
  bool augment = true;
  AugmentationParams augmentation;
  CnnConfig cnn;  // also the MIL patch classifier
  FcnConfig fcn;
  PixelWeights pixel_weights;
  // Weights copied into the model before training (e.g. MIL from a CNN run).
  std::optional<std::filesystem::path> init_checkpoint;
  std::filesystem::path out_dir = "runs";

  // Per-method learning rate and epoch count.
  static TrainConfig defaults(Method m);
  void validate() const;
  std::filesystem::path checkpoint_path() const;
  std::filesystem::path history_path() const;
};

// initial * decay^epoch
double lr_at(int epoch, const TrainConfig& config);

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;        // mean training loss
  double validation = 0.0;  // AUC (cnn, mil) or Dice on positives (fcn)
};

struct TrainResult {
  std::filesystem::path checkpoint;
  std::vector<EpochStats> history;
  int best_epoch = -1;
  double best_validation = 0.0;
};

// Trains one method on one cross-validation fold. `records` must carry fold
// indices. Keeps the epoch with the best validation metric (first one wins
// ties) and writes `<method>_fold<k>.ckpt` plus a history CSV to out_dir.
TrainResult train(const TrainConfig& config, std::span<const ImageRecord> records);

void write_history_csv(const std::filesystem::path& path, std::span<const EpochStats> history);

// Inference on a full-resolution image in [0,1].
double predict_cnn(ResNet50& model, const Image& img, const Geometry& geo);  // five-crop mean
BagScore predict_mil(ResNet50& model, const Image& img, const Geometry& geo);
Image predict_fcn(UNet& model, const Image& img, const Geometry& geo);  // crop_side x crop_side

}  // namespace ptx
