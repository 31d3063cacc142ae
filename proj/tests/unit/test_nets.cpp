#include <gtest/gtest.h>

#include <torch/torch.h>

#include "docdenoise/nets.hpp"

using namespace docdenoise;
namespace nn = torch::nn;

namespace {

GeneratorConfig small_generator(int64_t patch = 32) {
  GeneratorConfig cfg;
  cfg.patch_size = patch;
  cfg.base_channels = 4;
  cfg.num_res_blocks = 2;
  return cfg;
}

void zero_block(ResnetBlock& block) {
  torch::NoGradGuard no_grad;
  block->conv1->weight.zero_();
  block->conv2->weight.zero_();
}

}  // namespace

TEST(GeneratorConfig, Validation) {
  GeneratorConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.patch_size = 250;  // not divisible by 4
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = GeneratorConfig{};
  cfg.num_res_blocks = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW(build_generator(GeneratorConfig{.patch_size = 30}, 0), std::invalid_argument);
}

TEST(Generator, DefaultIsShapePreservingAt256) {
  torch::NoGradGuard no_grad;
  auto g = build_generator(GeneratorConfig{}, 1);
  g->eval();
  const auto out = g->forward(torch::rand({1, 1, 256, 256}).round());
  EXPECT_EQ(out.sizes(), (std::vector<int64_t>{1, 1, 256, 256}));
}

TEST(Generator, Base64ShapeTrace) {
  GeneratorConfig cfg;
  cfg.base_channels = 64;
  EXPECT_EQ(cfg.bottleneck_channels(), 256);
  EXPECT_EQ(cfg.bottleneck_size(), 64);
  auto g = build_generator(cfg, 0);
  int blocks = 0;
  for (const auto& m : g->modules(false)) {
    if (const auto* block = dynamic_cast<const ResnetBlockImpl*>(m.get())) {
      EXPECT_EQ(block->channels(), 256);
      ++blocks;
    }
  }
  EXPECT_EQ(blocks, 6);
}

TEST(Generator, OutputRangeForBothActivations) {
  torch::NoGradGuard no_grad;
  for (auto act : {OutputActivation::sigmoid, OutputActivation::tanh_rescaled}) {
    auto cfg = small_generator();
    cfg.output_activation = act;
    auto g = build_generator(cfg, 2);
    const auto out = g->forward(torch::rand({3, 1, 32, 32}) * 20 - 10);
    EXPECT_GT(out.min().item<float>(), 0.0f);
    EXPECT_LT(out.max().item<float>(), 1.0f);
  }
}

TEST(Generator, BatchOrderAndDeterminism) {
  torch::NoGradGuard no_grad;
  auto g = build_generator(small_generator(), 3);
  g->eval();
  const auto x = torch::rand({4, 1, 32, 32}).round();
  const auto perm = torch::tensor({2, 0, 3, 1});
  const auto out = g->forward(x);
  EXPECT_TRUE(torch::equal(g->forward(x.index_select(0, perm)), out.index_select(0, perm)));
  EXPECT_TRUE(torch::equal(g->forward(x), out));
}

TEST(Generator, RebuildIsIdentical) {
  auto a = build_generator(small_generator(), 7);
  auto b = build_generator(small_generator(), 7);
  auto c = build_generator(small_generator(), 8);
  EXPECT_EQ(parameter_count(*a), parameter_count(*b));
  EXPECT_EQ(parameter_checksum(*a), parameter_checksum(*b));
  EXPECT_NE(parameter_checksum(*a), parameter_checksum(*c));
}

TEST(Generator, RejectsWrongShape) {
  auto g = build_generator(small_generator(), 0);
  EXPECT_THROW(g->forward(torch::zeros({1, 1, 16, 16})), std::invalid_argument);
  EXPECT_THROW(g->forward(torch::zeros({1, 2, 32, 32})), std::invalid_argument);
}

TEST(Generator, Stubs) {
  auto cfg = small_generator();
  cfg.kind = GeneratorKind::identity_stub;
  auto id = build_generator(cfg, 0);
  const auto x = torch::rand({2, 1, 32, 32}).round();
  EXPECT_TRUE(torch::equal(id->forward(x), x));
  EXPECT_EQ(parameter_count(*id), 0);

  cfg.kind = GeneratorKind::constant_stub;
  cfg.stub_level = 1.0;
  auto white = build_generator(cfg, 0);
  EXPECT_TRUE(torch::equal(white->forward(x), torch::ones_like(x)));
  EXPECT_EQ(parameter_count(*white), 1);
}

TEST(ResnetBlock, ZeroResidualIsIdentity) {
  ResnetBlock block(3, 0.2);
  zero_block(block);
  const auto x = torch::randn({2, 3, 5, 5});
  block->eval();
  EXPECT_TRUE(torch::equal(block->forward(x), x));
  block->train();
  EXPECT_TRUE(torch::equal(block->forward(x), x));
  EXPECT_THROW(block->forward(torch::zeros({1, 4, 5, 5})), std::invalid_argument);
}

TEST(ResnetBlock, FiniteDifferenceJacobianIsIdentityAtZeroWeights) {
  const int64_t c = 2;
  ResnetBlock block(c, 0.2);
  block->to(torch::kFloat64);
  zero_block(block);
  block->eval();
  torch::NoGradGuard no_grad;
  const auto x = torch::randn({1, c, 4, 4}, torch::kFloat64);
  const int64_t n = x.numel();
  const double h = 1e-6;
  for (int64_t j = 0; j < n; ++j) {
    auto plus = x.clone();
    auto minus = x.clone();
    plus.view(-1)[j] += h;
    minus.view(-1)[j] -= h;
    const auto column = ((block->forward(plus) - block->forward(minus)) / (2 * h)).view(-1);
    for (int64_t i = 0; i < n; ++i) {
      ASSERT_NEAR(column[i].item<double>(), i == j ? 1.0 : 0.0, 1e-8) << i << "," << j;
    }
  }
}

TEST(Discriminator, MapSizes) {
  torch::NoGradGuard no_grad;
  auto d = build_discriminator(DiscriminatorConfig{}, 0);
  const auto x = torch::rand({2, 1, 256, 256});
  EXPECT_EQ(d->logit_map(x, x).sizes(), (std::vector<int64_t>{2, 1, 8, 8}));
  EXPECT_EQ(d->forward(x, x).sizes(), (std::vector<int64_t>{2}));

  DiscriminatorConfig small;
  small.patch_size = 64;
  small.down_steps = 3;
  auto d64 = build_discriminator(small, 0);
  const auto y = torch::rand({3, 1, 64, 64});
  EXPECT_EQ(d64->logit_map(y, y).sizes(), (std::vector<int64_t>{3, 1, 8, 8}));
  EXPECT_EQ(small.map_size(), 8);
}

TEST(Discriminator, PairOrderMattersAndShapesChecked) {
  DiscriminatorConfig cfg{.patch_size = 32, .base_channels = 8, .max_channels = 16, .down_steps = 2};
  auto d = build_discriminator(cfg, 4);
  d->eval();
  torch::NoGradGuard no_grad;
  const auto a = torch::rand({2, 1, 32, 32});
  const auto b = torch::rand({2, 1, 32, 32});
  EXPECT_FALSE(torch::allclose(d->forward(a, b), d->forward(b, a)));
  EXPECT_THROW(d->forward(a, torch::rand({2, 1, 16, 16})), std::invalid_argument);
  EXPECT_THROW(d->forward(torch::rand({2, 1, 16, 16}), torch::rand({2, 1, 16, 16})), std::invalid_argument);
}

TEST(Discriminator, ConstantHeadGivesBias) {
  DiscriminatorConfig cfg{.patch_size = 32, .base_channels = 8, .max_channels = 16, .down_steps = 2};
  auto d = build_discriminator(cfg, 5);
  {
    torch::NoGradGuard no_grad;
    d->head->weight.zero_();
    d->head->bias.fill_(0.75);
  }
  const auto scores = d->forward(torch::rand({3, 1, 32, 32}), torch::rand({3, 1, 32, 32}));
  EXPECT_TRUE(torch::allclose(scores, torch::full({3}, 0.75)));
  EXPECT_THROW(DiscriminatorConfig{.patch_size = 30}.validate(), std::invalid_argument);
}

TEST(Discriminator, RebuildIsIdentical) {
  auto a = build_discriminator(DiscriminatorConfig{}, 9);
  auto b = build_discriminator(DiscriminatorConfig{}, 9);
  EXPECT_EQ(parameter_checksum(*a), parameter_checksum(*b));
}

TEST(CountMacs, SingleLayers) {
  nn::Sequential stem(nn::Conv2d(nn::Conv2dOptions(1, 64, 3).padding(1)));
  EXPECT_EQ(count_macs(*stem, {1, 1, 256, 256}), 37'748'736);
  nn::Sequential unit(nn::Conv2d(nn::Conv2dOptions(1, 1, 1)));
  EXPECT_EQ(count_macs(*unit, {1, 1, 1, 1}), 1);
  EXPECT_EQ(count_macs(*unit, {3, 1, 2, 2}), 12);  // scales with batch
  EXPECT_THROW(count_macs(*unit, {1, 1, 1}), std::invalid_argument);
}

TEST(CountMacs, ThreeLayerProbeMatchesHandComputation) {
  nn::Sequential probe(nn::Conv2d(nn::Conv2dOptions(3, 8, 4).stride(2).padding(1)),
                       nn::ConvTranspose2d(nn::ConvTranspose2dOptions(8, 4, 4).stride(2).padding(1)),
                       nn::Conv2d(nn::Conv2dOptions(4, 2, 3)));
  // conv: 3*16*8 per output pixel, 16x16 out; transposed: 8*16*4 per input pixel, 16x16 in;
  // conv: 4*9*2 per output pixel, 30x30 out.
  const int64_t expected = 3 * 16 * 8 * 16 * 16 + 8 * 16 * 4 * 16 * 16 + 4 * 9 * 2 * 30 * 30;
  EXPECT_EQ(count_macs(*probe, {1, 3, 32, 32}), expected);
}

TEST(CountMacs, NetworkTotals) {
  const int64_t b = 40;
  auto g = build_generator(GeneratorConfig{}, 0);
  EXPECT_EQ(count_macs(*g, {1, 1, 256, 256}), 9'175'040 * b * b + 1'179'648 * b);
  const double ratio = static_cast<double>(count_macs(*g, {1, 1, 256, 256})) / 15.406e9;
  EXPECT_GT(ratio, 0.75);
  EXPECT_LT(ratio, 1.25);

  auto d = build_discriminator(DiscriminatorConfig{}, 0);
  EXPECT_EQ(count_macs(*d, {1, 1, 256, 256}), 1'912'897'536);
}
