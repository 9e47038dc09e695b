#include "ptx/losses.hpp"

#include <algorithm>
#include <cmath>

#include "ptx/error.hpp"

namespace ptx {

namespace {

double clip(double p) { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }

void check_shapes(const torch::Tensor& prob, const torch::Tensor& target) {
  if (prob.sizes() != target.sizes()) throw Error("loss: probability and target shapes differ");
}

}  // namespace

double binary_ce(double prob, int label) {
  const double p = clip(prob);
  return label == 1 ? -std::log(p) : -std::log1p(-p);
}

double binary_ce_grad(double prob, int label) {
  if (prob < kProbEpsilon || prob > 1.0 - kProbEpsilon) return 0.0;
  return label == 1 ? -1.0 / prob : 1.0 / (1.0 - prob);
}

double weighted_pixel_ce(const Image& prob_map, const Mask& mask, PixelWeights w) {
  if (!prob_map.same_shape(mask)) throw Error("weighted_pixel_ce: map and mask shapes differ");
  if (prob_map.size() == 0) return 0.0;
  double total = 0.0;
  const auto p = prob_map.values();
  const auto y = mask.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const int label = y[i] != 0 ? 1 : 0;
    total += (label ? w.positive : w.negative) * binary_ce(p[i], label);
  }
  return total / static_cast<double>(p.size());
}

torch::Tensor binary_ce(const torch::Tensor& prob, const torch::Tensor& target) {
  check_shapes(prob, target);
  const auto p = prob.clamp(kProbEpsilon, 1.0 - kProbEpsilon);
  return -(target * torch::log(p) + (1 - target) * torch::log1p(-p)).mean();
}

torch::Tensor weighted_pixel_ce(const torch::Tensor& prob, const torch::Tensor& target, PixelWeights w) {
  check_shapes(prob, target);
  const auto p = prob.clamp(kProbEpsilon, 1.0 - kProbEpsilon);
  const auto weight = target * w.positive + (1 - target) * w.negative;
  return (weight * -(target * torch::log(p) + (1 - target) * torch::log1p(-p))).mean();
}

}  // namespace ptx
