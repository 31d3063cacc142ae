#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "docdenoise/metrics.hpp"
#include "synthetic.hpp"

using namespace docdenoise;
using docdenoise::testing::random_binary;
using docdenoise::testing::random_gray;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 255.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Direct evaluation of the SSIM expression with two-pass statistics in long double.
long double ssim_oracle(const std::vector<double>& x, const std::vector<double>& y, long double c1,
                        long double c2) {
  const long double n = x.size();
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n;
  my /= n;
  long double vx = 0, vy = 0, cxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
    cxy += (x[i] - mx) * (y[i] - my);
  }
  vx /= n - 1;
  vy /= n - 1;
  cxy /= n - 1;
  return (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

Plane plane(int h, int w, const std::vector<double>& v) { return {h, w, v}; }

}  // namespace

TEST(MetricConfig, ConstantsAndValidation) {
  const MetricConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.c1(), 6.5025);
  EXPECT_DOUBLE_EQ(cfg.c2(), 58.5225);
  MetricConfig bad;
  bad.dynamic_range = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = MetricConfig{};
  bad.k2 = -1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Mse, Examples) {
  const GrayImage zeros(4, 4, 0);
  const GrayImage full(4, 4, 255);
  EXPECT_EQ(mse(zeros, zeros), 0.0);
  EXPECT_EQ(mse(zeros, full), 65025.0);

  const auto a = random_values(35, 1);
  const auto b = random_values(35, 2);
  long double naive = 0;
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 7; ++c) {
      const long double d = a[r * 7 + c] - b[r * 7 + c];
      naive += d * d;
    }
  }
  EXPECT_NEAR(mse(plane(5, 7, a), plane(5, 7, b)), static_cast<double>(naive / 35), 1e-9);
  EXPECT_THROW(mse(GrayImage(2, 2), GrayImage(2, 3)), std::invalid_argument);
}

TEST(Psnr, Examples) {
  const MetricConfig cfg;
  EXPECT_EQ(psnr_from_mse(255.0 * 255.0, cfg), 0.0);
  EXPECT_EQ(psnr_from_mse(255.0 * 255.0 / 100.0, cfg), 20.0);
  const auto img = random_gray(8, 8, 3);
  EXPECT_EQ(psnr(img, img), std::numeric_limits<double>::infinity());
  double previous = std::numeric_limits<double>::infinity();
  for (double m : {0.5, 1.0, 10.0, 100.0, 1000.0}) {
    const double p = psnr_from_mse(m, cfg);
    EXPECT_LT(p, previous);
    previous = p;
  }
}

TEST(Ssim, IdentityAndDegenerate) {
  const auto img = random_gray(16, 16, 4);
  EXPECT_EQ(ssim(img, img), 1.0);
  EXPECT_EQ(ssim(GrayImage(5, 5, 0), GrayImage(5, 5, 0)), 1.0);
  MetricConfig sliding;
  sliding.window = SsimWindow::sliding;
  EXPECT_DOUBLE_EQ(ssim(img, img, sliding), 1.0);
}

TEST(Ssim, GlobalMatchesOracle) {
  const MetricConfig cfg;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto x = random_values(64, seed * 2);
    const auto y = random_values(64, seed * 2 + 1);
    const auto expected = ssim_oracle(x, y, cfg.c1(), cfg.c2());
    EXPECT_NEAR(ssim(plane(8, 8, x), plane(8, 8, y), cfg), static_cast<double>(expected), 1e-9);
  }
}

TEST(Ssim, SlidingMatchesPerWindowOracle) {
  MetricConfig cfg;
  cfg.window = SsimWindow::sliding;
  cfg.sliding_window_size = 5;
  const int h = 9, w = 12;
  const auto x = random_values(h * w, 10);
  const auto y = random_values(h * w, 11);
  long double total = 0;
  int windows = 0;
  for (int r = 0; r + 5 <= h; ++r) {
    for (int c = 0; c + 5 <= w; ++c) {
      std::vector<double> wx, wy;
      for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) {
          wx.push_back(x[(r + i) * w + c + j]);
          wy.push_back(y[(r + i) * w + c + j]);
        }
      }
      total += ssim_oracle(wx, wy, cfg.c1(), cfg.c2());
      ++windows;
    }
  }
  EXPECT_NEAR(ssim(plane(h, w, x), plane(h, w, y), cfg), static_cast<double>(total / windows), 1e-9);

  // Smaller than the window: falls back to whole-image statistics.
  MetricConfig global;
  EXPECT_DOUBLE_EQ(ssim(plane(3, 3, {x.begin(), x.begin() + 9}), plane(3, 3, {y.begin(), y.begin() + 9}), cfg),
                   ssim(plane(3, 3, {x.begin(), x.begin() + 9}), plane(3, 3, {y.begin(), y.begin() + 9}), global));
}

TEST(Ssim, SymmetricAndBounded) {
  MetricConfig sliding;
  sliding.window = SsimWindow::sliding;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = random_binary(20, 24, seed, 0.3);
    const auto b = random_binary(20, 24, seed + 100, 0.7);
    for (const auto& cfg : {MetricConfig{}, sliding}) {
      const double s = ssim(a, b, cfg);
      EXPECT_NEAR(s, ssim(b, a, cfg), 1e-12);
      EXPECT_LE(std::abs(s), 1.0);
    }
  }
  // Inverted image: strongly negative but clamped within [-1,1].
  const auto a = random_binary(16, 16, 1);
  BinaryImage inv(16, 16);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) inv.set(r, c, 1 - a(r, c));
  }
  EXPECT_LT(ssim(a, inv), 0.0);
  EXPECT_GE(ssim(a, inv), -1.0);
}

TEST(Score, BinaryImagesUseFullScale) {
  const BinaryImage ink(4, 4, kInk);
  const BinaryImage white(4, 4, kBackground);
  const auto s = score(ink, white);
  EXPECT_EQ(s.mse, 65025.0);
  EXPECT_EQ(s.psnr, 0.0);
  EXPECT_LT(s.ssim, 1.0);
  const auto same = score(ink, ink);
  EXPECT_EQ(same.ssim, 1.0);
  EXPECT_EQ(same.mse, 0.0);
}
