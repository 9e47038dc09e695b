#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ptx/grid.hpp"
#include "ptx/preprocess.hpp"

namespace ptx {

// Where the extra stride-2 max pool sits in stage 1 of the classifier.
enum class ExtraPool { kNone, kAfterFirstBlock, kAfterStage1 };

std::string to_string(ExtraPool placement);
ExtraPool extra_pool_from_string(const std::string& name);

struct CnnConfig {
  int input_size = 448;
  int in_channels = 1;
  ExtraPool extra_pool = ExtraPool::kAfterFirstBlock;
  int out_classes = 1;
  std::optional<std::filesystem::path> pretrained;

  // Total stride: stem conv, stem pool, stages 2-4 and the extra pool.
  int total_stride() const { return extra_pool == ExtraPool::kNone ? 32 : 64; }
  void validate() const;
};

class BottleneckImpl : public torch::nn::Module {
 public:
  BottleneckImpl(int64_t in_channels, int64_t width, int64_t stride);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr};
  torch::nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr}, bn3_{nullptr};
  torch::nn::Sequential downsample_{nullptr};
};
TORCH_MODULE(Bottleneck);

// ResNet-50 with a configurable stem width and an optional extra pooling
// layer in stage 1; ends in global average pooling and a dense head that
// emits logits.
class ResNet50Impl : public torch::nn::Module {
 public:
  static constexpr int64_t kFeatureWidth = 2048;

  explicit ResNet50Impl(const CnnConfig& config);

  torch::Tensor forward(const torch::Tensor& x);  // [N, out_classes] logits
  torch::Tensor features(const torch::Tensor& x);  // [N, 2048] pooled
  // Spatial side after: stem conv, stem pool, first block, extra pool (if
  // any), end of stage 1, stages 2, 3, 4.
  std::vector<int64_t> feature_sides(int64_t input_size);

  void replace_head(int out_classes);
  const CnnConfig& config() const { return config_; }

 private:
  torch::Tensor run(const torch::Tensor& x, std::vector<int64_t>* sides);

  CnnConfig config_;
  torch::nn::Conv2d stem_conv_{nullptr};
  torch::nn::BatchNorm2d stem_bn_{nullptr};
  torch::nn::MaxPool2d stem_pool_{nullptr};
  torch::nn::Sequential stage1_{nullptr}, stage2_{nullptr}, stage3_{nullptr}, stage4_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(ResNet50);

// Builds the classifier; with `config.pretrained` set, loads that checkpoint
// (3-channel stems are reduced by summing over input channels, mismatched
// heads are re-initialized).
ResNet50 build_cnn(const CnnConfig& config);

// Swaps the dense head for a freshly initialized one; other weights untouched.
void replace_head(ResNet50& model, int out_classes);

// Stack of single-channel images as an [N, 1, H, W] float tensor.
torch::Tensor to_batch(std::span<const Image> images);
Image tensor_to_image(const torch::Tensor& map);  // [H, W] or [1, 1, H, W]

struct BagScore {
  std::vector<double> patch_scores;
  double bag_score = 0.0;
  std::size_t argmax = 0;
};

// Bag score as the exact maximum of the patch scores (first maximum wins).
BagScore bag_from_patch_scores(std::vector<double> patch_scores);

// Differentiable bag probability: max over sigmoid(model(patch_i)).
torch::Tensor mil_bag_probability(ResNet50& model, const torch::Tensor& patches);
// Inference on one bag; the model is switched to eval mode.
BagScore mil_forward(ResNet50& model, const PatchBag& bag);

struct FcnConfig {
  int levels = 4;
  int base_width = 16;
  bool attention = true;
  int in_channels = 1;
  double norm_eps = 1e-5;

  int bottleneck_width() const { return base_width << levels; }
  void validate() const;
};

// Per-sample, per-channel normalization over the spatial axes with biased
// variance; gradient implemented by hand.
torch::Tensor instance_norm(const torch::Tensor& x, double eps = 1e-5);

class InstanceNorm2dImpl : public torch::nn::Module {
 public:
  InstanceNorm2dImpl(int64_t channels, double eps);
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor weight, bias;

 private:
  double eps_;
};
TORCH_MODULE(InstanceNorm2d);

// Additive attention gate on a U-Net skip connection. The skip is projected
// with a stride-2 2x2 conv, the gating signal (one level coarser) with a 1x1
// conv; their ReLU'd sum is reduced to one channel, squashed by a sigmoid
// and bilinearly upsampled back to the skip resolution.
class AttentionGateImpl : public torch::nn::Module {
 public:
  AttentionGateImpl(int64_t skip_channels, int64_t gating_channels, int64_t inter_channels);

  torch::Tensor coefficients(const torch::Tensor& skip, const torch::Tensor& gating);
  torch::Tensor forward(const torch::Tensor& skip, const torch::Tensor& gating);

  torch::nn::Conv2d theta_x{nullptr}, phi_g{nullptr}, psi{nullptr};

 private:
  int64_t skip_channels_, gating_channels_;
};
TORCH_MODULE(AttentionGate);

class ConvBlockImpl : public torch::nn::Module {
 public:
  ConvBlockImpl(int64_t in_channels, int64_t out_channels, double eps);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  InstanceNorm2d norm1_{nullptr}, norm2_{nullptr};
};
TORCH_MODULE(ConvBlock);

class UNetImpl : public torch::nn::Module {
 public:
  explicit UNetImpl(const FcnConfig& config);

  torch::Tensor logits(const torch::Tensor& x);
  torch::Tensor forward(const torch::Tensor& x);  // probabilities, [N, 1, H, W]
  // Spatial side of the bottleneck features for a given input side.
  int64_t bottleneck_side(int64_t input_side) const { return input_side >> config_.levels; }
  const FcnConfig& config() const { return config_; }

 private:
  FcnConfig config_;
  torch::nn::ModuleList encoders_, ups_, gates_, decoders_;
  ConvBlock bottleneck_{nullptr};
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(UNet);

UNet build_fcn(const FcnConfig& config);

std::int64_t count_parameters(const torch::nn::Module& model);

}  // namespace ptx
