#pragma once

#include <span>

#include "docdenoise/imaging.hpp"

namespace docdenoise {

enum class SsimWindow { global, sliding };

struct MetricConfig {
  double dynamic_range = 255.0;
  double k1 = 0.01;
  double k2 = 0.03;
  SsimWindow window = SsimWindow::global;
  int sliding_window_size = 11;

  double c1() const noexcept { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const noexcept { return (k2 * dynamic_range) * (k2 * dynamic_range); }
  void validate() const;
};

/// Real-valued image plane on the 0..L scale.
struct Plane {
  int height = 0;
  int width = 0;
  std::span<const double> values;
};

double mse(Plane x, Plane y);
/// 10 log10(L^2 / mse); +infinity when mse == 0.
double psnr(Plane x, Plane y, const MetricConfig& cfg = {});
/// Structural similarity. Global mode uses whole-image statistics with the
/// unbiased (n-1) covariance; sliding mode averages the same formula over
/// every window position and falls back to global for images smaller than
/// the window.
double ssim(Plane x, Plane y, const MetricConfig& cfg = {});

/// PSNR from a precomputed MSE.
double psnr_from_mse(double mse_value, const MetricConfig& cfg = {});

// Image overloads. Binary images are scaled to {0,255}.
double mse(const GrayImage& x, const GrayImage& y);
double psnr(const GrayImage& x, const GrayImage& y, const MetricConfig& cfg = {});
double ssim(const GrayImage& x, const GrayImage& y, const MetricConfig& cfg = {});
double mse(const BinaryImage& x, const BinaryImage& y);
double psnr(const BinaryImage& x, const BinaryImage& y, const MetricConfig& cfg = {});
double ssim(const BinaryImage& x, const BinaryImage& y, const MetricConfig& cfg = {});

struct QualityScores {
  double ssim = 0.0;
  double psnr = 0.0;
  double mse = 0.0;
};

QualityScores score(const BinaryImage& reference, const BinaryImage& candidate,
                    const MetricConfig& cfg = {});

}  // namespace docdenoise
