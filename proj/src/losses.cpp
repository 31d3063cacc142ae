#include "docdenoise/losses.hpp"

#include <random>
#include <stdexcept>
#include <vector>

namespace docdenoise {

namespace {

constexpr std::array<std::string_view, 2> kSignNames = {"standard", "paper_literal"};

// Added under the square root so the penalty stays differentiable at a
// zero input gradient.
constexpr double kNormEpsilon = 1e-12;

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
  }
}

}  // namespace

std::string_view to_string(SignConvention s) { return kSignNames[static_cast<std::size_t>(s)]; }

std::optional<SignConvention> parse_sign_convention(std::string_view s) {
  for (std::size_t i = 0; i < kSignNames.size(); ++i) {
    if (kSignNames[i] == s) return static_cast<SignConvention>(i);
  }
  return std::nullopt;
}

void PenaltyConfig::validate() const {
  if (!(lambda_l1 >= 0)) throw std::invalid_argument("lambda_l1 must be >= 0");
  if (!(w_p >= 0)) throw std::invalid_argument("w_p must be >= 0");
  if (clamp_value && !(*clamp_value > 0)) throw std::invalid_argument("clamp_value must be > 0");
}

torch::Tensor bce_with_logits(const torch::Tensor& labels, const torch::Tensor& logits) {
  require_same_shape(labels, logits, "bce_with_logits");
  const auto per_element =
      torch::clamp_min(logits, 0) - logits * labels + torch::log1p(torch::exp(-torch::abs(logits)));
  return per_element.mean();
}

torch::Tensor l1_loss(const torch::Tensor& a, const torch::Tensor& b) {
  require_same_shape(a, b, "l1_loss");
  return torch::abs(a - b).mean();
}

GeneratorLoss pix2pix_generator_loss(const Critic& d, const torch::Tensor& denoised,
                                     const torch::Tensor& noisy, const torch::Tensor& clean,
                                     const PenaltyConfig& cfg) {
  require_same_shape(denoised, clean, "pix2pix_generator_loss");
  const auto scores = d(denoised, noisy);
  GeneratorLoss loss;
  loss.adv = bce_with_logits(torch::ones_like(scores), scores);
  loss.l1 = docdenoise::l1_loss(denoised, clean);
  loss.total = loss.adv + cfg.lambda_l1 * loss.l1;
  return loss;
}

DiscriminatorLoss pix2pix_discriminator_loss(const Critic& d, const torch::Tensor& clean,
                                             const torch::Tensor& denoised,
                                             const torch::Tensor& noisy) {
  require_same_shape(denoised, clean, "pix2pix_discriminator_loss");
  const auto real_scores = d(clean, noisy);
  const auto fake_scores = d(denoised.detach(), noisy);
  DiscriminatorLoss loss;
  loss.real_term = bce_with_logits(torch::ones_like(real_scores), real_scores);
  loss.fake_term = bce_with_logits(torch::zeros_like(fake_scores), fake_scores);
  loss.total = (loss.real_term + loss.fake_term) / 2;
  loss.diff = torch::zeros({}, loss.total.options());
  loss.gp = torch::zeros({}, loss.total.options());
  return loss;
}

GeneratorLoss wgan_generator_loss(const Critic& d, const torch::Tensor& denoised,
                                  const torch::Tensor& noisy, const torch::Tensor& clean,
                                  const PenaltyConfig& cfg) {
  require_same_shape(denoised, clean, "wgan_generator_loss");
  GeneratorLoss loss;
  loss.adv = -d(denoised, noisy).mean();
  loss.l1 = docdenoise::l1_loss(denoised, clean);
  loss.total = loss.adv + cfg.lambda_l1 * loss.l1;
  return loss;
}

torch::Tensor interpolate_samples(const torch::Tensor& clean, const torch::Tensor& denoised,
                                  const torch::Tensor& alpha) {
  require_same_shape(clean, denoised, "interpolate_samples");
  if (alpha.dim() != 1 || alpha.size(0) != clean.size(0)) {
    throw std::invalid_argument("interpolate_samples: alpha must hold one value per sample");
  }
  std::vector<int64_t> view(clean.dim(), 1);
  view[0] = clean.size(0);
  const auto a = alpha.to(clean.options()).view(view);
  return a * clean + (1 - a) * denoised;
}

Interpolation interpolate_samples(const torch::Tensor& clean, const torch::Tensor& denoised,
                                  uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> values(static_cast<std::size_t>(clean.size(0)));
  for (auto& v : values) v = unit(rng);
  auto alpha = torch::tensor(values, torch::kFloat64).to(clean.scalar_type());
  return {interpolate_samples(clean, denoised, alpha), alpha};
}

torch::Tensor gradient_penalty(const Critic& d, const torch::Tensor& x_interp,
                               const torch::Tensor& noisy) {
  if (!x_interp.requires_grad()) {
    throw std::invalid_argument("gradient_penalty: x_interp does not require grad");
  }
  const auto scores = d(x_interp, noisy);
  if (!scores.requires_grad()) {
    throw std::invalid_argument("gradient_penalty: critic output is detached from x_interp");
  }
  const auto grads = torch::autograd::grad({scores}, {x_interp}, {torch::ones_like(scores)},
                                           /*retain_graph=*/true, /*create_graph=*/true,
                                           /*allow_unused=*/true);
  if (!grads[0].defined()) {
    throw std::invalid_argument("gradient_penalty: critic output does not depend on x_interp");
  }
  const auto norms = torch::sqrt(grads[0].flatten(1).pow(2).sum(1) + kNormEpsilon);
  return (norms - 1).pow(2).mean();
}

DiscriminatorLoss wgan_discriminator_loss(const Critic& d, const torch::Tensor& clean,
                                          const torch::Tensor& denoised, const torch::Tensor& noisy,
                                          const PenaltyConfig& cfg, uint64_t seed) {
  require_same_shape(denoised, clean, "wgan_discriminator_loss");
  const auto fake = denoised.detach();
  const auto real_scores = d(clean, noisy);
  const auto fake_scores = d(fake, noisy);

  DiscriminatorLoss loss;
  {
    torch::NoGradGuard no_grad;
    loss.real_term = bce_with_logits(torch::ones_like(real_scores), real_scores.detach());
    loss.fake_term = bce_with_logits(torch::zeros_like(fake_scores), fake_scores.detach());
  }
  loss.diff = cfg.sign_convention == SignConvention::standard
                  ? fake_scores.mean() - real_scores.mean()
                  : real_scores.mean() - fake_scores.mean();

  auto x_interp = interpolate_samples(clean.detach(), fake, seed).x_interp.detach().requires_grad_(true);
  loss.gp = gradient_penalty(d, x_interp, noisy);
  loss.total = loss.diff + cfg.w_p * loss.gp;
  return loss;
}

}  // namespace docdenoise
