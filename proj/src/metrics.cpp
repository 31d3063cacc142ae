#include "docdenoise/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace docdenoise {

void MetricConfig::validate() const {
  if (!(dynamic_range > 0)) throw std::invalid_argument("metric dynamic_range must be > 0");
  if (!(k1 > 0) || !(k2 > 0)) throw std::invalid_argument("metric k1, k2 must be > 0");
  if (sliding_window_size < 2) throw std::invalid_argument("sliding_window_size must be >= 2");
}

namespace {

void check_shapes(Plane x, Plane y) {
  if (x.height != y.height || x.width != y.width) {
    throw std::invalid_argument("metric shape mismatch: " + std::to_string(x.height) + "x" +
                                std::to_string(x.width) + " vs " + std::to_string(y.height) +
                                "x" + std::to_string(y.width));
  }
  const auto n = static_cast<std::size_t>(x.height) * x.width;
  if (n == 0 || x.values.size() != n || y.values.size() != n) {
    throw std::invalid_argument("metric planes are empty or inconsistent");
  }
}

// Formula evaluated on first and second order statistics. 2*(a*b) keeps
// the expression exactly symmetric in x and y.
double ssim_formula(double mx, double my, double vx, double vy, double cov,
                    const MetricConfig& cfg) {
  const double c1 = cfg.c1();
  const double c2 = cfg.c2();
  const double num = (2.0 * (mx * my) + c1) * (2.0 * cov + c2);
  const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
  return std::clamp(num / den, -1.0, 1.0);
}

double global_ssim(Plane x, Plane y, const MetricConfig& cfg) {
  const auto n = x.values.size();
  double sx = 0;
  double sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x.values[i];
    sy += y.values[i];
  }
  const double mx = sx / n;
  const double my = sy / n;
  double sxx = 0;
  double syy = 0;
  double sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x.values[i] - mx;
    const double dy = y.values[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  return ssim_formula(mx, my, sxx / denom, syy / denom, sxy / denom, cfg);
}

// Summed-area table with a zero guard row/column.
class Integral {
 public:
  Integral(int h, int w) : w_(w + 1), sums_(static_cast<std::size_t>(h + 1) * (w + 1), 0.0) {}

  template <typename F>
  void build(int h, int w, F value) {
    for (int r = 0; r < h; ++r) {
      double row = 0;
      for (int c = 0; c < w; ++c) {
        row += value(static_cast<std::size_t>(r) * w + c);
        at(r + 1, c + 1) = at(r, c + 1) + row;
      }
    }
  }

  double box(int r0, int c0, int size) const {
    return at(r0 + size, c0 + size) - at(r0, c0 + size) - at(r0 + size, c0) + at(r0, c0);
  }

 private:
  double& at(int r, int c) { return sums_[static_cast<std::size_t>(r) * w_ + c]; }
  double at(int r, int c) const { return sums_[static_cast<std::size_t>(r) * w_ + c]; }

  int w_;
  std::vector<double> sums_;
};

double sliding_ssim(Plane x, Plane y, const MetricConfig& cfg) {
  const int k = cfg.sliding_window_size;
  const int h = x.height;
  const int w = x.width;
  if (h < k || w < k) return global_ssim(x, y, cfg);

  Integral ix(h, w), iy(h, w), ixx(h, w), iyy(h, w), ixy(h, w);
  ix.build(h, w, [&](std::size_t i) { return x.values[i]; });
  iy.build(h, w, [&](std::size_t i) { return y.values[i]; });
  ixx.build(h, w, [&](std::size_t i) { return x.values[i] * x.values[i]; });
  iyy.build(h, w, [&](std::size_t i) { return y.values[i] * y.values[i]; });
  ixy.build(h, w, [&](std::size_t i) { return x.values[i] * y.values[i]; });

  const double n = static_cast<double>(k) * k;
  double total = 0;
  long long windows = 0;
  for (int r = 0; r + k <= h; ++r) {
    for (int c = 0; c + k <= w; ++c) {
      const double sx = ix.box(r, c, k);
      const double sy = iy.box(r, c, k);
      const double mx = sx / n;
      const double my = sy / n;
      const double vx = (ixx.box(r, c, k) - sx * sx / n) / (n - 1);
      const double vy = (iyy.box(r, c, k) - sy * sy / n) / (n - 1);
      const double cov = (ixy.box(r, c, k) - sx * sy / n) / (n - 1);
      total += ssim_formula(mx, my, vx, vy, cov, cfg);
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

template <typename Tag>
std::vector<double> to_scale(const Raster<Tag>& img, double scale) {
  std::vector<double> out(img.size());
  std::ranges::transform(img.pixels(), out.begin(),
                         [scale](std::uint8_t v) { return static_cast<double>(v) * scale; });
  return out;
}

template <typename Tag>
Plane plane_of(const Raster<Tag>& img, const std::vector<double>& values) {
  return {img.height(), img.width(), values};
}

}  // namespace

double mse(Plane x, Plane y) {
  check_shapes(x, y);
  double acc = 0;
  for (std::size_t i = 0; i < x.values.size(); ++i) {
    const double d = x.values[i] - y.values[i];
    acc += d * d;
  }
  return acc / static_cast<double>(x.values.size());
}

double psnr_from_mse(double mse_value, const MetricConfig& cfg) {
  if (mse_value <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(cfg.dynamic_range * cfg.dynamic_range / mse_value);
}

double psnr(Plane x, Plane y, const MetricConfig& cfg) { return psnr_from_mse(mse(x, y), cfg); }

double ssim(Plane x, Plane y, const MetricConfig& cfg) {
  check_shapes(x, y);
  cfg.validate();
  return cfg.window == SsimWindow::global ? global_ssim(x, y, cfg) : sliding_ssim(x, y, cfg);
}

double mse(const GrayImage& x, const GrayImage& y) {
  const auto a = to_scale(x, 1.0);
  const auto b = to_scale(y, 1.0);
  return mse(plane_of(x, a), plane_of(y, b));
}

double psnr(const GrayImage& x, const GrayImage& y, const MetricConfig& cfg) {
  return psnr_from_mse(mse(x, y), cfg);
}

double ssim(const GrayImage& x, const GrayImage& y, const MetricConfig& cfg) {
  const auto a = to_scale(x, 1.0);
  const auto b = to_scale(y, 1.0);
  return ssim(plane_of(x, a), plane_of(y, b), cfg);
}

double mse(const BinaryImage& x, const BinaryImage& y) {
  const auto a = to_scale(x, 255.0);
  const auto b = to_scale(y, 255.0);
  return mse(plane_of(x, a), plane_of(y, b));
}

double psnr(const BinaryImage& x, const BinaryImage& y, const MetricConfig& cfg) {
  return psnr_from_mse(mse(x, y), cfg);
}

double ssim(const BinaryImage& x, const BinaryImage& y, const MetricConfig& cfg) {
  const auto a = to_scale(x, 255.0);
  const auto b = to_scale(y, 255.0);
  return ssim(plane_of(x, a), plane_of(y, b), cfg);
}

QualityScores score(const BinaryImage& reference, const BinaryImage& candidate,
                    const MetricConfig& cfg) {
  const auto a = to_scale(reference, 255.0);
  const auto b = to_scale(candidate, 255.0);
  const Plane x = plane_of(reference, a);
  const Plane y = plane_of(candidate, b);
  QualityScores s;
  s.mse = mse(x, y);
  s.psnr = psnr_from_mse(s.mse, cfg);
  s.ssim = ssim(x, y, cfg);
  return s;
}

}  // namespace docdenoise
