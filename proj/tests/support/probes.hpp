#pragma once

// Small double-precision networks and a central-difference gradient check
// shared by the loss tests and the acceptance suite.

#include <torch/torch.h>

#include <cmath>
#include <functional>

#include "docdenoise/losses.hpp"

namespace docdenoise::testing {

/// conv(1->2, 3x3) -> tanh -> conv(2->1, 3x3) -> sigmoid, shape preserving.
struct ProbeGeneratorImpl : torch::nn::Module {
  ProbeGeneratorImpl() {
    c1 = register_module("c1", torch::nn::Conv2d(torch::nn::Conv2dOptions(1, 2, 3).padding(1)));
    c2 = register_module("c2", torch::nn::Conv2d(torch::nn::Conv2dOptions(2, 1, 3).padding(1)));
  }
  torch::Tensor forward(const torch::Tensor& x) { return torch::sigmoid(c2(torch::tanh(c1(x)))); }
  torch::nn::Conv2d c1{nullptr}, c2{nullptr};
};
TORCH_MODULE(ProbeGenerator);

/// Conditional critic: concat -> conv(2->3, 3x3, stride 2) -> softplus ->
/// conv(3->1, 3x3) -> mean per sample. Smooth, so finite differences apply.
struct ProbeCriticImpl : torch::nn::Module {
  ProbeCriticImpl() {
    c1 = register_module("c1", torch::nn::Conv2d(torch::nn::Conv2dOptions(2, 3, 3).stride(2).padding(1)));
    c2 = register_module("c2", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, 1, 3).padding(1)));
  }
  torch::Tensor forward(const torch::Tensor& a, const torch::Tensor& b) {
    return c2(torch::softplus(c1(torch::cat({a, b}, 1)))).mean({1, 2, 3});
  }
  torch::nn::Conv2d c1{nullptr}, c2{nullptr};
};
TORCH_MODULE(ProbeCritic);

inline Critic as_critic(ProbeCritic& d) {
  return [d](const torch::Tensor& a, const torch::Tensor& b) mutable { return d->forward(a, b); };
}

struct GradientCheck {
  double relative_error = 0.0;  // ||autograd - fd|| / ||fd||
  int64_t parameters = 0;
};

/// Compares autograd gradients of `loss()` with central differences over
/// every element of `params` (double precision, in-place perturbation).
inline GradientCheck check_gradients(const std::function<torch::Tensor()>& loss,
                                     std::vector<torch::Tensor> params, double h = 1e-6) {
  const auto analytic = torch::autograd::grad({loss()}, params, {}, false, false, true);
  double diff2 = 0.0;
  double ref2 = 0.0;
  GradientCheck out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto flat = params[k].view(-1);
    const auto a = analytic[k].defined() ? analytic[k].reshape(-1) : torch::zeros_like(flat);
    for (int64_t i = 0; i < flat.numel(); ++i) {
      double saved;
      double up;
      double down;
      {
        torch::NoGradGuard no_grad;
        saved = flat[i].item<double>();
        flat[i] = saved + h;
      }
      up = loss().item<double>();
      {
        torch::NoGradGuard no_grad;
        flat[i] = saved - h;
      }
      down = loss().item<double>();
      {
        torch::NoGradGuard no_grad;
        flat[i] = saved;
      }
      const double fd = (up - down) / (2 * h);
      const double d = a[i].item<double>() - fd;
      diff2 += d * d;
      ref2 += fd * fd;
    }
    out.parameters += flat.numel();
  }
  out.relative_error = std::sqrt(diff2) / std::max(std::sqrt(ref2), 1e-30);
  return out;
}

}  // namespace docdenoise::testing
