#include "ptx/models.hpp"

#include <spdlog/spdlog.h>

#include "ptx/checkpoint.hpp"

namespace ptx {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

std::string to_string(ExtraPool placement) {
  switch (placement) {
    case ExtraPool::kNone: return "none";
    case ExtraPool::kAfterFirstBlock: return "after_first_block";
    case ExtraPool::kAfterStage1: return "after_stage1";
  }
  return "unknown";
}

ExtraPool extra_pool_from_string(const std::string& name) {
  if (name == "none") return ExtraPool::kNone;
  if (name == "after_first_block") return ExtraPool::kAfterFirstBlock;
  if (name == "after_stage1") return ExtraPool::kAfterStage1;
  throw UsageError("unknown extra pool placement '" + name + "'");
}

void CnnConfig::validate() const {
  if (input_size <= 0 || input_size % total_stride() != 0) {
    throw UsageError("classifier input size " + std::to_string(input_size) + " must be a multiple of " +
                     std::to_string(total_stride()));
  }
  if (in_channels < 1) throw UsageError("classifier needs at least one input channel");
  if (out_classes < 1) throw UsageError("classifier needs at least one output");
}

// ---------------------------------------------------------------------------
// Classifier

namespace {

nn::Conv2d conv(int64_t in, int64_t out, int64_t k, int64_t stride = 1, int64_t pad = 0, bool bias = false) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(pad).bias(bias));
}

void init_fan_in(nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto& m : module.modules(/*include_self=*/false)) {
    if (auto* c = m->as<nn::Conv2d>()) {
      nn::init::kaiming_normal_(c->weight, 0.0, torch::kFanIn, torch::kReLU);
      if (c->bias.defined()) c->bias.zero_();
    } else if (auto* bn = m->as<nn::BatchNorm2d>()) {
      bn->weight.fill_(1.0);
      bn->bias.zero_();
    }
  }
}

}  // namespace

BottleneckImpl::BottleneckImpl(int64_t in_channels, int64_t width, int64_t stride) {
  const int64_t out_channels = width * 4;
  conv1_ = register_module("conv1", conv(in_channels, width, 1));
  bn1_ = register_module("bn1", nn::BatchNorm2d(width));
  conv2_ = register_module("conv2", conv(width, width, 3, stride, 1));
  bn2_ = register_module("bn2", nn::BatchNorm2d(width));
  conv3_ = register_module("conv3", conv(width, out_channels, 1));
  bn3_ = register_module("bn3", nn::BatchNorm2d(out_channels));
  if (stride != 1 || in_channels != out_channels) {
    downsample_ = register_module(
        "downsample", nn::Sequential(conv(in_channels, out_channels, 1, stride), nn::BatchNorm2d(out_channels)));
  }
}

torch::Tensor BottleneckImpl::forward(const torch::Tensor& x) {
  auto out = torch::relu(bn1_(conv1_(x)));
  out = torch::relu(bn2_(conv2_(out)));
  out = bn3_(conv3_(out));
  return torch::relu(out + (downsample_ ? downsample_->forward(x) : x));
}

ResNet50Impl::ResNet50Impl(const CnnConfig& config) : config_(config) {
  config_.validate();
  stem_conv_ = register_module("stem_conv", conv(config.in_channels, 64, 7, 2, 3));
  stem_bn_ = register_module("stem_bn", nn::BatchNorm2d(64));
  stem_pool_ = register_module("stem_pool", nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1)));

  auto stage = [](int64_t in, int64_t width, int blocks, int64_t stride) {
    nn::Sequential seq;
    seq->push_back(Bottleneck(in, width, stride));
    for (int i = 1; i < blocks; ++i) seq->push_back(Bottleneck(width * 4, width, 1));
    return seq;
  };
  // Stage 1 is assembled by hand so the extra pool can sit between blocks.
  nn::Sequential s1;
  s1->push_back(Bottleneck(64, 64, 1));
  if (config.extra_pool == ExtraPool::kAfterFirstBlock) s1->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2).stride(2)));
  for (int i = 1; i < 3; ++i) s1->push_back(Bottleneck(256, 64, 1));
  if (config.extra_pool == ExtraPool::kAfterStage1) s1->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2).stride(2)));
  stage1_ = register_module("stage1", s1);
  stage2_ = register_module("stage2", stage(256, 128, 4, 2));
  stage3_ = register_module("stage3", stage(512, 256, 6, 2));
  stage4_ = register_module("stage4", stage(1024, 512, 3, 2));
  head_ = register_module("head", nn::Linear(kFeatureWidth, config.out_classes));
  init_fan_in(*this);
}

torch::Tensor ResNet50Impl::run(const torch::Tensor& x, std::vector<int64_t>* sides) {
  auto record = [&](const torch::Tensor& t) {
    if (sides) sides->push_back(t.size(-1));
  };
  auto out = torch::relu(stem_bn_(stem_conv_(x)));
  record(out);
  out = stem_pool_(out);
  record(out);
  for (auto& module : *stage1_) {
    out = module.forward(out);
    // Record after the first block, after the pool, and at the stage end.
    record(out);
  }
  if (sides) {
    // Collapse the per-module trace of stage 1 to: first block, extra pool
    // (when present), end of stage.
    const std::size_t stage_modules = stage1_->size();
    std::vector<int64_t> trace(sides->end() - static_cast<std::ptrdiff_t>(stage_modules), sides->end());
    sides->resize(sides->size() - stage_modules);
    sides->push_back(trace.front());
    if (config_.extra_pool == ExtraPool::kAfterFirstBlock) sides->push_back(trace[1]);
    if (config_.extra_pool == ExtraPool::kAfterStage1) sides->push_back(trace[trace.size() - 2]);
    sides->push_back(trace.back());
  }
  out = stage2_->forward(out);
  record(out);
  out = stage3_->forward(out);
  record(out);
  out = stage4_->forward(out);
  record(out);
  return F::adaptive_avg_pool2d(out, F::AdaptiveAvgPool2dFuncOptions(1)).flatten(1);
}

torch::Tensor ResNet50Impl::features(const torch::Tensor& x) { return run(x, nullptr); }

torch::Tensor ResNet50Impl::forward(const torch::Tensor& x) { return head_(run(x, nullptr)); }

std::vector<int64_t> ResNet50Impl::feature_sides(int64_t input_size) {
  torch::NoGradGuard no_grad;
  const bool was_training = is_training();
  eval();
  std::vector<int64_t> sides;
  run(torch::zeros({1, config_.in_channels, input_size, input_size}), &sides);
  train(was_training);
  return sides;
}

void ResNet50Impl::replace_head(int out_classes) {
  if (out_classes < 1) throw UsageError("head needs at least one output");
  head_ = replace_module("head", nn::Linear(kFeatureWidth, out_classes));
  config_.out_classes = out_classes;
}

void replace_head(ResNet50& model, int out_classes) { model->replace_head(out_classes); }

ResNet50 build_cnn(const CnnConfig& config) {
  ResNet50 model(config);
  if (!config.pretrained) return model;

  const auto ckpt = read_checkpoint(*config.pretrained);
  if (ckpt.arch != "resnet50") throw Error("pretrained checkpoint is not a ResNet-50: " + config.pretrained->string());
  torch::NoGradGuard no_grad;
  bool head_reset = false;
  for (const auto& item : model->named_parameters(true)) {
    const std::string& name = item.key();
    torch::Tensor target = item.value();
    const torch::Tensor* src = ckpt.find(name);
    if (!src) throw Error("pretrained checkpoint lacks '" + name + "'");
    torch::Tensor value = *src;
    if (name == "stem_conv.weight" && value.size(1) != target.size(1)) {
      if (target.size(1) == 1 && value.size(1) == 3) {
        value = value.sum(1, /*keepdim=*/true);
      } else {
        throw Error("pretrained stem has " + std::to_string(value.size(1)) +
                    " input channels; only 3-channel stems can be reduced to " +
                    std::to_string(target.size(1)));
      }
    }
    if (name.rfind("head.", 0) == 0 && value.sizes() != target.sizes()) {
      head_reset = true;
      continue;
    }
    if (value.sizes() != target.sizes()) throw Error("pretrained tensor '" + name + "' has a different shape");
    target.copy_(value);
  }
  for (const auto& item : model->named_buffers(true)) {
    if (const torch::Tensor* src = ckpt.find(item.key()); src && src->sizes() == item.value().sizes()) {
      item.value().copy_(*src);
    }
  }
  if (head_reset) {
    spdlog::info("pretrained head has a different output count; head re-initialized with {} output(s)",
                 config.out_classes);
  }
  return model;
}

torch::Tensor to_batch(std::span<const Image> images) {
  if (images.empty()) throw Error("to_batch: no images");
  const int rows = images.front().rows();
  const int cols = images.front().cols();
  auto batch = torch::empty({static_cast<int64_t>(images.size()), 1, rows, cols}, torch::kFloat32);
  auto* dst = batch.data_ptr<float>();
  for (const auto& img : images) {
    if (img.rows() != rows || img.cols() != cols) throw Error("to_batch: images differ in shape");
    std::copy(img.values().begin(), img.values().end(), dst);
    dst += img.size();
  }
  return batch;
}

Image tensor_to_image(const torch::Tensor& map) {
  auto t = map.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  while (t.dim() > 2) {
    if (t.size(0) != 1) throw Error("tensor_to_image: expected a single map");
    t = t.squeeze(0);
  }
  if (t.dim() != 2) throw Error("tensor_to_image: expected a 2-D map");
  const int rows = static_cast<int>(t.size(0));
  const int cols = static_cast<int>(t.size(1));
  const float* src = t.data_ptr<float>();
  return Image(rows, cols, std::vector<float>(src, src + static_cast<std::size_t>(rows) * cols));
}

// ---------------------------------------------------------------------------
// Multiple-instance wrapper

BagScore bag_from_patch_scores(std::vector<double> patch_scores) {
  if (patch_scores.empty()) throw Error("bag has no patch scores");
  BagScore score;
  score.patch_scores = std::move(patch_scores);
  const auto it = std::max_element(score.patch_scores.begin(), score.patch_scores.end());
  score.argmax = static_cast<std::size_t>(it - score.patch_scores.begin());
  score.bag_score = *it;
  return score;
}

torch::Tensor mil_bag_probability(ResNet50& model, const torch::Tensor& patches) {
  auto probs = torch::sigmoid(model->forward(patches)).view({-1});
  return probs.max();
}

BagScore mil_forward(ResNet50& model, const PatchBag& bag) {
  if (bag.patches.empty()) throw Error("mil_forward: empty bag");
  const int side = model->config().input_size;
  for (const auto& p : bag.patches) {
    if (p.rows() != side || p.cols() != side) {
      throw Error("mil_forward: patch is " + std::to_string(p.rows()) + "x" + std::to_string(p.cols()) +
                  ", model expects " + std::to_string(side) + "x" + std::to_string(side));
    }
  }
  torch::NoGradGuard no_grad;
  model->eval();
  const auto probs = torch::sigmoid(model->forward(to_batch(bag.patches))).view({-1}).to(torch::kFloat64);
  return bag_from_patch_scores(std::vector<double>(probs.data_ptr<double>(), probs.data_ptr<double>() + probs.numel()));
}

// ---------------------------------------------------------------------------
// Segmenter

void FcnConfig::validate() const {
  if (levels < 1 || levels > 8) throw UsageError("segmenter needs 1..8 levels");
  if (base_width < 2) throw UsageError("segmenter base width must be at least 2");
  if (in_channels < 1) throw UsageError("segmenter needs at least one input channel");
  if (!(norm_eps > 0.0)) throw UsageError("instance norm epsilon must be positive");
}

namespace {

struct InstanceNormFunction : public torch::autograd::Function<InstanceNormFunction> {
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& x, double eps) {
    const auto mean = x.mean({2, 3}, /*keepdim=*/true);
    const auto centered = x - mean;
    const auto inv_std = torch::rsqrt(centered.pow(2).mean({2, 3}, true) + eps);
    auto normalized = centered * inv_std;
    ctx->save_for_backward({normalized, inv_std});
    return normalized;
  }

  static torch::autograd::tensor_list backward(torch::autograd::AutogradContext* ctx,
                                               torch::autograd::tensor_list grad_outputs) {
    const auto saved = ctx->get_saved_variables();
    const auto& normalized = saved[0];
    const auto& inv_std = saved[1];
    const auto& g = grad_outputs[0];
    // d/dx of (x - mean) / sqrt(var + eps) contracted with g.
    auto grad_x = inv_std * (g - g.mean({2, 3}, true) - normalized * (g * normalized).mean({2, 3}, true));
    return {grad_x, torch::Tensor()};
  }
};

}  // namespace

torch::Tensor instance_norm(const torch::Tensor& x, double eps) {
  if (x.dim() != 4) throw Error("instance_norm expects [N, C, H, W] features");
  if (x.size(2) * x.size(3) < 2) throw Error("instance_norm needs spatial extent > 1");
  return InstanceNormFunction::apply(x, eps);
}

InstanceNorm2dImpl::InstanceNorm2dImpl(int64_t channels, double eps) : eps_(eps) {
  weight = register_parameter("weight", torch::ones({channels}));
  bias = register_parameter("bias", torch::zeros({channels}));
}

torch::Tensor InstanceNorm2dImpl::forward(const torch::Tensor& x) {
  return instance_norm(x, eps_) * weight.view({1, -1, 1, 1}) + bias.view({1, -1, 1, 1});
}

AttentionGateImpl::AttentionGateImpl(int64_t skip_channels, int64_t gating_channels, int64_t inter_channels)
    : skip_channels_(skip_channels), gating_channels_(gating_channels) {
  theta_x = register_module("theta_x", conv(skip_channels, inter_channels, 2, 2, 0, false));
  phi_g = register_module("phi_g", conv(gating_channels, inter_channels, 1, 1, 0, true));
  psi = register_module("psi", conv(inter_channels, 1, 1, 1, 0, true));
}

torch::Tensor AttentionGateImpl::coefficients(const torch::Tensor& skip, const torch::Tensor& gating) {
  if (skip.dim() != 4 || gating.dim() != 4 || skip.size(0) != gating.size(0)) {
    throw Error("attention gate: expected [N, C, H, W] skip and gating features of equal batch size");
  }
  if (skip.size(1) != skip_channels_ || gating.size(1) != gating_channels_) {
    throw Error("attention gate: channel mismatch (skip " + std::to_string(skip.size(1)) + " vs " +
                std::to_string(skip_channels_) + ", gating " + std::to_string(gating.size(1)) + " vs " +
                std::to_string(gating_channels_) + ")");
  }
  if (skip.size(2) != 2 * gating.size(2) || skip.size(3) != 2 * gating.size(3)) {
    throw Error("attention gate: gating features must be exactly one level coarser than the skip");
  }
  const auto f = torch::relu(theta_x(skip) + phi_g(gating));
  const auto alpha = torch::sigmoid(psi(f));
  return F::interpolate(alpha, F::InterpolateFuncOptions()
                                   .size(std::vector<int64_t>{skip.size(2), skip.size(3)})
                                   .mode(torch::kBilinear)
                                   .align_corners(false));
}

torch::Tensor AttentionGateImpl::forward(const torch::Tensor& skip, const torch::Tensor& gating) {
  return skip * coefficients(skip, gating);
}

ConvBlockImpl::ConvBlockImpl(int64_t in_channels, int64_t out_channels, double eps) {
  conv1_ = register_module("conv1", conv(in_channels, out_channels, 3, 1, 1, true));
  norm1_ = register_module("norm1", InstanceNorm2d(out_channels, eps));
  conv2_ = register_module("conv2", conv(out_channels, out_channels, 3, 1, 1, true));
  norm2_ = register_module("norm2", InstanceNorm2d(out_channels, eps));
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) {
  auto out = torch::relu(norm1_(conv1_(x)));
  return torch::relu(norm2_(conv2_(out)));
}

UNetImpl::UNetImpl(const FcnConfig& config) : config_(config) {
  config_.validate();
  std::vector<int64_t> widths;
  for (int i = 0; i <= config.levels; ++i) widths.push_back(static_cast<int64_t>(config.base_width) << i);

  encoders_ = register_module("encoders", nn::ModuleList());
  ups_ = register_module("ups", nn::ModuleList());
  gates_ = register_module("gates", nn::ModuleList());
  decoders_ = register_module("decoders", nn::ModuleList());
  int64_t in = config.in_channels;
  for (int i = 0; i < config.levels; ++i) {
    encoders_->push_back(ConvBlock(in, widths[i], config.norm_eps));
    in = widths[i];
  }
  bottleneck_ = register_module("bottleneck", ConvBlock(widths[config.levels - 1], widths[config.levels], config.norm_eps));
  for (int i = 0; i < config.levels; ++i) {
    ups_->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(widths[i + 1], widths[i], 2).stride(2)));
    if (config.attention) gates_->push_back(AttentionGate(widths[i], widths[i + 1], std::max<int64_t>(1, widths[i] / 2)));
    decoders_->push_back(ConvBlock(2 * widths[i], widths[i], config.norm_eps));
  }
  head_ = register_module("head", conv(widths[0], 1, 1, 1, 0, true));
  init_fan_in(*this);
}

torch::Tensor UNetImpl::logits(const torch::Tensor& x) {
  const int64_t factor = int64_t{1} << config_.levels;
  if (x.dim() != 4 || x.size(2) % factor != 0 || x.size(3) % factor != 0) {
    throw Error("segmenter input sides must be divisible by " + std::to_string(factor));
  }
  std::vector<torch::Tensor> skips;
  auto out = x;
  for (const auto& enc : *encoders_) {
    out = enc->as<ConvBlock>()->forward(out);
    skips.push_back(out);
    out = F::max_pool2d(out, F::MaxPool2dFuncOptions(2).stride(2));
  }
  out = bottleneck_(out);
  for (int i = config_.levels - 1; i >= 0; --i) {
    const auto& skip = skips[static_cast<std::size_t>(i)];
    const auto gated = config_.attention ? gates_[static_cast<std::size_t>(i)]->as<AttentionGate>()->forward(skip, out)
                                         : skip;
    const auto up = ups_[static_cast<std::size_t>(i)]->as<nn::ConvTranspose2d>()->forward(out);
    out = decoders_[static_cast<std::size_t>(i)]->as<ConvBlock>()->forward(torch::cat({up, gated}, 1));
  }
  return head_(out);
}

torch::Tensor UNetImpl::forward(const torch::Tensor& x) { return torch::sigmoid(logits(x)); }

UNet build_fcn(const FcnConfig& config) { return UNet(config); }

std::int64_t count_parameters(const torch::nn::Module& model) {
  std::int64_t total = 0;
  for (const auto& p : model.parameters(true)) {
    if (p.requires_grad()) total += p.numel();
  }
  return total;
}

}  // namespace ptx
