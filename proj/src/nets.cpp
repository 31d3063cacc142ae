#include "docdenoise/nets.hpp"

#include <algorithm>
#include <stdexcept>

namespace docdenoise {

namespace nn = torch::nn;

namespace {

constexpr std::array<std::string_view, 2> kActivationNames = {"sigmoid", "tanh_rescaled"};
constexpr std::array<std::string_view, 3> kKindNames = {"resnet_autoencoder", "identity_stub",
                                                        "constant_stub"};

std::string shape_string(const torch::Tensor& t) {
  std::string s = "(";
  for (int64_t i = 0; i < t.dim(); ++i) s += (i ? "," : "") + std::to_string(t.size(i));
  return s + ")";
}

nn::Conv2dOptions conv_options(int64_t in, int64_t out, int64_t kernel, int64_t stride,
                               int64_t padding, bool bias) {
  return nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding).bias(bias);
}

nn::LeakyReLU leaky(double slope) { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(slope)); }

}  // namespace

std::string_view to_string(OutputActivation a) { return kActivationNames[static_cast<std::size_t>(a)]; }
std::string_view to_string(GeneratorKind k) { return kKindNames[static_cast<std::size_t>(k)]; }

std::optional<OutputActivation> parse_output_activation(std::string_view s) {
  for (std::size_t i = 0; i < kActivationNames.size(); ++i) {
    if (kActivationNames[i] == s) return static_cast<OutputActivation>(i);
  }
  return std::nullopt;
}

std::optional<GeneratorKind> parse_generator_kind(std::string_view s) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == s) return static_cast<GeneratorKind>(i);
  }
  return std::nullopt;
}

void GeneratorConfig::validate() const {
  if (patch_size < 1) throw std::invalid_argument("generator patch_size must be >= 1");
  if (base_channels < 1) throw std::invalid_argument("generator base_channels must be >= 1");
  if (num_res_blocks < 1) throw std::invalid_argument("generator num_res_blocks must be >= 1");
  if (down_steps < 0 || down_steps > 16) throw std::invalid_argument("generator down_steps out of range");
  if (patch_size % (int64_t{1} << down_steps) != 0) {
    throw std::invalid_argument("generator patch_size " + std::to_string(patch_size) +
                                " is not divisible by 2^" + std::to_string(down_steps));
  }
  if (leaky_slope < 0) throw std::invalid_argument("generator leaky_slope must be >= 0");
}

void DiscriminatorConfig::validate() const {
  if (patch_size < 1) throw std::invalid_argument("discriminator patch_size must be >= 1");
  if (in_channels < 1) throw std::invalid_argument("discriminator in_channels must be >= 1");
  if (base_channels < 1 || max_channels < base_channels) {
    throw std::invalid_argument("discriminator channel widths invalid");
  }
  if (down_steps < 1 || down_steps > 16) throw std::invalid_argument("discriminator down_steps out of range");
  if (patch_size % (int64_t{1} << down_steps) != 0) {
    throw std::invalid_argument("discriminator patch_size " + std::to_string(patch_size) +
                                " is not divisible by 2^" + std::to_string(down_steps));
  }
  if (leaky_slope < 0) throw std::invalid_argument("discriminator leaky_slope must be >= 0");
}

ResnetBlockImpl::ResnetBlockImpl(int64_t channels, double leaky_slope)
    : channels_(channels), leaky_slope_(leaky_slope) {
  conv1 = register_module("conv1", nn::Conv2d(conv_options(channels, channels, 3, 1, 1, false)));
  bn1 = register_module("bn1", nn::BatchNorm2d(channels));
  conv2 = register_module("conv2", nn::Conv2d(conv_options(channels, channels, 3, 1, 1, false)));
  bn2 = register_module("bn2", nn::BatchNorm2d(channels));
}

torch::Tensor ResnetBlockImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != channels_) {
    throw std::invalid_argument("resnet block expects (N," + std::to_string(channels_) +
                                ",H,W), got " + shape_string(x));
  }
  auto h = bn1(conv1(x));
  h = torch::leaky_relu(h, leaky_slope_);
  h = bn2(conv2(h));
  return x + h;
}

GeneratorImpl::GeneratorImpl(GeneratorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (cfg_.kind == GeneratorKind::constant_stub) {
    level = register_parameter("level", torch::full({1}, cfg_.stub_level));
    return;
  }
  if (cfg_.kind == GeneratorKind::identity_stub) return;

  const int64_t base = cfg_.base_channels;
  const double slope = cfg_.leaky_slope;

  encoder = nn::Sequential();
  encoder->push_back(nn::Conv2d(conv_options(1, base, 3, 1, 1, false)));
  encoder->push_back(nn::BatchNorm2d(base));
  encoder->push_back(leaky(slope));
  int64_t ch = base;
  for (int64_t i = 0; i < cfg_.down_steps; ++i) {
    encoder->push_back(nn::Conv2d(conv_options(ch, ch * 2, 4, 2, 1, false)));
    encoder->push_back(nn::BatchNorm2d(ch * 2));
    encoder->push_back(leaky(slope));
    ch *= 2;
  }
  encoder = register_module("encoder", encoder);

  bottleneck = nn::Sequential();
  for (int64_t i = 0; i < cfg_.num_res_blocks; ++i) bottleneck->push_back(ResnetBlock(ch, slope));
  bottleneck = register_module("bottleneck", bottleneck);

  decoder = nn::Sequential();
  for (int64_t i = 0; i < cfg_.down_steps; ++i) {
    decoder->push_back(nn::ConvTranspose2d(
        nn::ConvTranspose2dOptions(ch, ch / 2, 4).stride(2).padding(1).bias(false)));
    decoder->push_back(nn::BatchNorm2d(ch / 2));
    decoder->push_back(leaky(slope));
    ch /= 2;
  }
  decoder = register_module("decoder", decoder);

  head = register_module("head", nn::Conv2d(conv_options(ch, 1, 3, 1, 1, true)));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& noisy) {
  const int64_t s = cfg_.patch_size;
  if (noisy.dim() != 4 || noisy.size(1) != 1 || noisy.size(2) != s || noisy.size(3) != s) {
    throw std::invalid_argument("generator expects (N,1," + std::to_string(s) + "," +
                                std::to_string(s) + "), got " + shape_string(noisy));
  }
  switch (cfg_.kind) {
    case GeneratorKind::identity_stub:
      return noisy;
    case GeneratorKind::constant_stub:
      return level.view({1, 1, 1, 1}).expand_as(noisy);
    case GeneratorKind::resnet_autoencoder:
      break;
  }
  auto h = decoder->forward(bottleneck->forward(encoder->forward(noisy)));
  h = head(h);
  if (cfg_.output_activation == OutputActivation::sigmoid) return torch::sigmoid(h);
  return 0.5 * (torch::tanh(h) + 1.0);
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  features = nn::Sequential();
  int64_t in = cfg_.in_channels;
  int64_t out = cfg_.base_channels;
  for (int64_t i = 0; i < cfg_.down_steps; ++i) {
    const bool first = i == 0;
    features->push_back(nn::Conv2d(conv_options(in, out, 4, 2, 1, first)));
    if (!first) features->push_back(nn::BatchNorm2d(out));
    features->push_back(leaky(cfg_.leaky_slope));
    in = out;
    out = std::min(out * 2, cfg_.max_channels);
  }
  features = register_module("features", features);
  head = register_module("head", nn::Conv2d(conv_options(in, 1, 3, 1, 1, true)));
}

torch::Tensor DiscriminatorImpl::logit_map(const torch::Tensor& candidate, const torch::Tensor& noisy) {
  const int64_t s = cfg_.patch_size;
  if (candidate.sizes() != noisy.sizes()) {
    throw std::invalid_argument("discriminator inputs differ in shape: " + shape_string(candidate) +
                                " vs " + shape_string(noisy));
  }
  if (candidate.dim() != 4 || candidate.size(2) != s || candidate.size(3) != s ||
      2 * candidate.size(1) != cfg_.in_channels) {
    throw std::invalid_argument("discriminator expects pairs of (N," +
                                std::to_string(cfg_.in_channels / 2) + "," + std::to_string(s) +
                                "," + std::to_string(s) + "), got " + shape_string(candidate));
  }
  return head(features->forward(torch::cat({candidate, noisy}, 1)));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& candidate, const torch::Tensor& noisy) {
  return logit_map(candidate, noisy).mean({1, 2, 3});
}

Generator build_generator(const GeneratorConfig& cfg, uint64_t seed) {
  torch::manual_seed(seed);
  return Generator(cfg);
}

Discriminator build_discriminator(const DiscriminatorConfig& cfg, uint64_t seed) {
  torch::manual_seed(seed);
  return Discriminator(cfg);
}

torch::Tensor generator_forward(Generator& g, const torch::Tensor& noisy) { return g->forward(noisy); }

torch::Tensor resnet_block_forward(ResnetBlock& block, const torch::Tensor& x) { return block->forward(x); }

torch::Tensor discriminator_forward(Discriminator& d, const torch::Tensor& a, const torch::Tensor& b) {
  return d->forward(a, b);
}

namespace {

int64_t pad_of(const nn::detail::conv_padding_t<2>& padding, int dim) {
  if (const auto* explicit_pad = std::get_if<torch::ExpandingArray<2>>(&padding)) {
    return (**explicit_pad)[dim];
  }
  throw std::invalid_argument("count_macs: only explicit conv padding is supported");
}

void accumulate_macs(const nn::Module& m, std::vector<int64_t>& shape, int64_t& macs) {
  if (const auto* conv = dynamic_cast<const nn::Conv2dImpl*>(&m)) {
    const auto& o = conv->options;
    const int64_t n = shape[0];
    int64_t out_hw[2];
    for (int d = 0; d < 2; ++d) {
      const int64_t k = (*o.kernel_size())[d];
      out_hw[d] = (shape[2 + d] + 2 * pad_of(o.padding(), d) - (*o.dilation())[d] * (k - 1) - 1) /
                      (*o.stride())[d] + 1;
    }
    const int64_t k2 = (*o.kernel_size())[0] * (*o.kernel_size())[1];
    macs += n * (o.in_channels() / o.groups()) * k2 * o.out_channels() * out_hw[0] * out_hw[1];
    shape = {n, o.out_channels(), out_hw[0], out_hw[1]};
    return;
  }
  if (const auto* deconv = dynamic_cast<const nn::ConvTranspose2dImpl*>(&m)) {
    const auto& o = deconv->options;
    const int64_t n = shape[0];
    int64_t out_hw[2];
    for (int d = 0; d < 2; ++d) {
      const int64_t k = (*o.kernel_size())[d];
      out_hw[d] = (shape[2 + d] - 1) * (*o.stride())[d] - 2 * pad_of(o.padding(), d) +
                  (*o.dilation())[d] * (k - 1) + (*o.output_padding())[d] + 1;
    }
    const int64_t k2 = (*o.kernel_size())[0] * (*o.kernel_size())[1];
    macs += n * o.in_channels() * k2 * (o.out_channels() / o.groups()) * shape[2] * shape[3];
    shape = {n, o.out_channels(), out_hw[0], out_hw[1]};
    return;
  }
  if (const auto* disc = dynamic_cast<const DiscriminatorImpl*>(&m)) {
    // Input shape is the candidate alone; the pair doubles the channels.
    shape[1] = disc->config().in_channels;
  }
  for (const auto& child : m.children()) accumulate_macs(*child, shape, macs);
}

}  // namespace

int64_t count_macs(const nn::Module& model, std::vector<int64_t> input_shape) {
  if (input_shape.size() != 4) throw std::invalid_argument("count_macs expects an (N,C,H,W) shape");
  int64_t macs = 0;
  accumulate_macs(model, input_shape, macs);
  return macs;
}

int64_t parameter_count(const nn::Module& model) {
  int64_t n = 0;
  for (const auto& p : model.parameters()) n += p.numel();
  return n;
}

uint64_t parameter_checksum(const nn::Module& model) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : model.parameters()) {
    const auto t = p.detach().contiguous().cpu();
    const auto* bytes = static_cast<const unsigned char*>(t.data_ptr());
    const auto n = static_cast<std::size_t>(t.numel()) * t.element_size();
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace docdenoise
