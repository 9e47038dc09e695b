#pragma once

#include <torch/torch.h>

#include "ptx/grid.hpp"

namespace ptx {

inline constexpr double kProbEpsilon = 1e-7;

struct PixelWeights {
  double positive = 25.0;
  double negative = 0.5;
};

// -[y ln p + (1-y) ln(1-p)] with p clipped to [eps, 1-eps].
double binary_ce(double prob, int label);
// d/dp of binary_ce; zero where the clip is active.
double binary_ce_grad(double prob, int label);

// Mean over pixels of w(y) * binary_ce(p, y).
double weighted_pixel_ce(const Image& prob_map, const Mask& mask, PixelWeights w = {});

// Autograd versions; `target` holds 0/1 values of the same shape as `prob`.
torch::Tensor binary_ce(const torch::Tensor& prob, const torch::Tensor& target);
torch::Tensor weighted_pixel_ce(const torch::Tensor& prob, const torch::Tensor& target, PixelWeights w = {});

}  // namespace ptx
