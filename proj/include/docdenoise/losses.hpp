#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>

namespace docdenoise {

/// Scores (candidate, noisy) pairs: (N,C,H,W) x2 -> (N).
using Critic = std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&)>;

/// `standard` minimizes mean D(fake) - mean D(real), the usual WGAN-GP
/// critic objective. `paper_literal` minimizes mean D(real) - mean D(fake)
/// as the hybrid scheme prints it; kept only for reproduction.
enum class SignConvention { standard, paper_literal };

std::string_view to_string(SignConvention s);
std::optional<SignConvention> parse_sign_convention(std::string_view s);

struct PenaltyConfig {
  double lambda_l1 = 30000.0;
  double w_p = 10.0;
  SignConvention sign_convention = SignConvention::standard;
  std::optional<double> clamp_value;  // critic weight clipping, off by default

  void validate() const;
};

/// Generator-side terms. `total` carries the graph.
struct GeneratorLoss {
  torch::Tensor adv;
  torch::Tensor l1;
  torch::Tensor total;
};

/// Discriminator-side terms. In the hybrid regime real_term/fake_term are
/// the BCE diagnostics (no gradient) and diff/gp/total form the objective;
/// in the classical regime diff and gp are zero.
struct DiscriminatorLoss {
  torch::Tensor real_term;
  torch::Tensor fake_term;
  torch::Tensor diff;
  torch::Tensor gp;
  torch::Tensor total;
};

/// Mean binary cross-entropy on raw logits, fused form
/// max(x,0) - x*y + log(1 + exp(-|x|)).
torch::Tensor bce_with_logits(const torch::Tensor& labels, const torch::Tensor& logits);

/// Mean absolute error.
torch::Tensor l1_loss(const torch::Tensor& a, const torch::Tensor& b);

/// adv = BCE(ones, D(denoised, noisy)); total = adv + lambda * L1(denoised, clean).
GeneratorLoss pix2pix_generator_loss(const Critic& d, const torch::Tensor& denoised,
                                     const torch::Tensor& noisy, const torch::Tensor& clean,
                                     const PenaltyConfig& cfg);

/// (BCE(D(clean,noisy), 1) + BCE(D(denoised,noisy), 0)) / 2; denoised is detached.
DiscriminatorLoss pix2pix_discriminator_loss(const Critic& d, const torch::Tensor& clean,
                                             const torch::Tensor& denoised,
                                             const torch::Tensor& noisy);

/// adv = -mean D(denoised, noisy); total = adv + lambda * L1(denoised, clean).
GeneratorLoss wgan_generator_loss(const Critic& d, const torch::Tensor& denoised,
                                  const torch::Tensor& noisy, const torch::Tensor& clean,
                                  const PenaltyConfig& cfg);

/// One alpha per sample, broadcast over pixels:
/// alpha * clean + (1 - alpha) * denoised.
torch::Tensor interpolate_samples(const torch::Tensor& clean, const torch::Tensor& denoised,
                                  const torch::Tensor& alpha);

struct Interpolation {
  torch::Tensor x_interp;
  torch::Tensor alpha;  // (N), uniform(0,1)
};

/// Draws alpha from a seeded generator.
Interpolation interpolate_samples(const torch::Tensor& clean, const torch::Tensor& denoised,
                                  uint64_t seed);

/// mean_i (||dD(x_interp, noisy)_i / dx_interp_i||_2 - 1)^2, gradient taken
/// w.r.t. x_interp only, with a graph so the penalty itself is
/// differentiable in the critic's parameters. `x_interp` must require grad.
torch::Tensor gradient_penalty(const Critic& d, const torch::Tensor& x_interp,
                               const torch::Tensor& noisy);

/// diff (per sign convention) + w_p * gradient_penalty at a seeded interpolation.
DiscriminatorLoss wgan_discriminator_loss(const Critic& d, const torch::Tensor& clean,
                                          const torch::Tensor& denoised, const torch::Tensor& noisy,
                                          const PenaltyConfig& cfg, uint64_t seed);

}  // namespace docdenoise
