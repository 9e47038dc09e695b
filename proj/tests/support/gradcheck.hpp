#pragma once
// Central finite differences against autograd, in double precision.

#include <torch/torch.h>

#include <algorithm>
#include <functional>
#include <vector>

namespace oracle {

struct GradReport {
  double max_relative_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||), worst input
  double max_abs_numeric = 0.0;
};

// `inputs` must be double tensors; f must return a scalar.
inline GradReport gradcheck(const std::function<torch::Tensor(const std::vector<torch::Tensor>&)>& f,
                            std::vector<torch::Tensor> inputs, double h = 1e-6) {
  for (auto& t : inputs) t = t.detach().clone().set_requires_grad(true);
  auto out = f(inputs);
  const auto analytic = torch::autograd::grad({out}, inputs, {}, false, false, true);
  GradReport rep;
  torch::NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto flat = inputs[k].view({-1});
    auto numeric = torch::zeros_like(flat);
    for (int64_t i = 0; i < flat.numel(); ++i) {
      const double orig = flat[i].item<double>();
      flat[i] = orig + h;
      const double up = f(inputs).item<double>();
      flat[i] = orig - h;
      const double down = f(inputs).item<double>();
      flat[i] = orig;
      numeric[i] = (up - down) / (2.0 * h);
    }
    const auto a = analytic[k].defined() ? analytic[k].reshape({-1}) : torch::zeros_like(numeric);
    const double denom = std::max({a.norm().item<double>(), numeric.norm().item<double>(), 1e-12});
    rep.max_relative_error = std::max(rep.max_relative_error, (a - numeric).norm().item<double>() / denom);
    rep.max_abs_numeric = std::max(rep.max_abs_numeric, numeric.abs().max().item<double>());
  }
  return rep;
}

// Same for a module's parameters: perturbs each parameter in place.
inline GradReport gradcheck_parameters(torch::nn::Module& m, const std::function<torch::Tensor()>& f, double h = 1e-6) {
  GradReport rep;
  auto params = m.parameters();
  for (auto& p : params) p.mutable_grad() = torch::Tensor();
  auto out = f();
  out.backward();
  torch::NoGradGuard no_grad;
  for (auto& p : params) {
    auto flat = p.view({-1});
    auto numeric = torch::zeros_like(flat);
    for (int64_t i = 0; i < flat.numel(); ++i) {
      const double orig = flat[i].item<double>();
      flat[i] = orig + h;
      const double up = f().item<double>();
      flat[i] = orig - h;
      const double down = f().item<double>();
      flat[i] = orig;
      numeric[i] = (up - down) / (2.0 * h);
    }
    const auto a = p.grad().defined() ? p.grad().reshape({-1}) : torch::zeros_like(numeric);
    const double denom = std::max({a.norm().item<double>(), numeric.norm().item<double>(), 1e-12});
    rep.max_relative_error = std::max(rep.max_relative_error, (a - numeric).norm().item<double>() / denom);
    rep.max_abs_numeric = std::max(rep.max_abs_numeric, numeric.abs().max().item<double>());
  }
  return rep;
}

}  // namespace oracle
