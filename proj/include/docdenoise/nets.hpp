#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace docdenoise {

enum class OutputActivation { sigmoid, tanh_rescaled };

/// resnet_autoencoder is the real denoiser. The stubs exist for pipeline
/// and diagnostics checks: identity_stub returns its input, constant_stub
/// emits a single learnable level everywhere.
enum class GeneratorKind { resnet_autoencoder, identity_stub, constant_stub };

std::string_view to_string(OutputActivation a);
std::string_view to_string(GeneratorKind k);
std::optional<OutputActivation> parse_output_activation(std::string_view s);
std::optional<GeneratorKind> parse_generator_kind(std::string_view s);

struct GeneratorConfig {
  int64_t patch_size = 256;
  int64_t base_channels = 40;
  int64_t num_res_blocks = 6;
  int64_t down_steps = 2;
  OutputActivation output_activation = OutputActivation::sigmoid;
  double leaky_slope = 0.2;
  GeneratorKind kind = GeneratorKind::resnet_autoencoder;
  double stub_level = 1.0;  // constant_stub output

  void validate() const;
  int64_t bottleneck_channels() const { return base_channels << down_steps; }
  int64_t bottleneck_size() const { return patch_size >> down_steps; }
};

struct DiscriminatorConfig {
  int64_t patch_size = 256;
  int64_t in_channels = 2;
  int64_t base_channels = 64;
  int64_t max_channels = 512;
  int64_t down_steps = 5;
  double leaky_slope = 0.0;  // 0 gives plain ReLU

  void validate() const;
  int64_t map_size() const { return patch_size >> down_steps; }
};

/// conv -> BN -> leakyReLU -> conv -> BN, added back onto the input.
class ResnetBlockImpl : public torch::nn::Module {
 public:
  ResnetBlockImpl(int64_t channels, double leaky_slope);

  torch::Tensor forward(const torch::Tensor& x);
  int64_t channels() const { return channels_; }

  torch::nn::Conv2d conv1{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr};
  torch::nn::Conv2d conv2{nullptr};
  torch::nn::BatchNorm2d bn2{nullptr};

 private:
  int64_t channels_;
  double leaky_slope_;
};
TORCH_MODULE(ResnetBlock);

/// Encoder (stem + strided convs) -> residual bottleneck -> transposed-conv
/// decoder -> 1-channel head with output activation. Shape preserving.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorConfig cfg);

  /// (N,1,S,S) -> (N,1,S,S), values in (0,1) for the real network.
  torch::Tensor forward(const torch::Tensor& noisy);

  const GeneratorConfig& config() const { return cfg_; }

 private:
  GeneratorConfig cfg_;
  torch::nn::Sequential encoder{nullptr};
  torch::nn::Sequential bottleneck{nullptr};
  torch::nn::Sequential decoder{nullptr};
  torch::nn::Conv2d head{nullptr};
  torch::Tensor level;  // constant_stub parameter
};
TORCH_MODULE(Generator);

/// Conditional PatchGAN: concatenates (candidate, noisy) along channels and
/// reduces to a patch map of logits, averaged to one raw score per sample.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(DiscriminatorConfig cfg);

  /// Per-sample scores, shape (N).
  torch::Tensor forward(const torch::Tensor& candidate, const torch::Tensor& noisy);
  /// Pre-average map, shape (N,1,map,map).
  torch::Tensor logit_map(const torch::Tensor& candidate, const torch::Tensor& noisy);

  const DiscriminatorConfig& config() const { return cfg_; }

  torch::nn::Sequential features{nullptr};
  torch::nn::Conv2d head{nullptr};

 private:
  DiscriminatorConfig cfg_;
};
TORCH_MODULE(Discriminator);

/// Seeds torch's global generator then constructs; two calls with the same
/// (cfg, seed) produce identical weights.
Generator build_generator(const GeneratorConfig& cfg, uint64_t seed);
Discriminator build_discriminator(const DiscriminatorConfig& cfg, uint64_t seed);

/// Thin wrappers matching the module forwards with shape checks.
torch::Tensor generator_forward(Generator& g, const torch::Tensor& noisy);
torch::Tensor resnet_block_forward(ResnetBlock& block, const torch::Tensor& x);
torch::Tensor discriminator_forward(Discriminator& d, const torch::Tensor& a, const torch::Tensor& b);

/// Analytic multiply-accumulate count. Children are visited in
/// registration order, which for the networks here is forward order.
/// Conv2d contributes Cin/groups * kh*kw * Cout * Hout*Wout per sample;
/// ConvTranspose2d contributes Cin * kh*kw * Cout/groups * Hin*Win.
/// Normalization and activations are free.
int64_t count_macs(const torch::nn::Module& model, std::vector<int64_t> input_shape);

/// Number of trainable scalars.
int64_t parameter_count(const torch::nn::Module& model);

/// Order-sensitive FNV-1a hash over all parameter bytes.
uint64_t parameter_checksum(const torch::nn::Module& model);

}  // namespace docdenoise
