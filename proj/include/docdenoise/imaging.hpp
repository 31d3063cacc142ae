#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace docdenoise {

/// Raised when image arguments violate a shape or value contract.
class ImageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct GrayTag {
  static constexpr std::uint8_t kMaxValue = 255;
};
struct BinaryTag {
  static constexpr std::uint8_t kMaxValue = 1;
};

/// Row-major 8-bit raster. The tag fixes the admissible value range:
/// GrayImage holds intensities in [0,255], BinaryImage holds {0,1}
/// with 0 = ink and 1 = white background.
template <typename Tag>
class Raster {
 public:
  Raster() = default;

  Raster(int height, int width, std::uint8_t fill = Tag::kMaxValue)
      : height_(height), width_(width) {
    check_dims(height, width);
    check_value(fill);
    pixels_.assign(static_cast<std::size_t>(height) * width, fill);
  }

  Raster(int height, int width, std::vector<std::uint8_t> pixels)
      : height_(height), width_(width), pixels_(std::move(pixels)) {
    check_dims(height, width);
    if (pixels_.size() != static_cast<std::size_t>(height) * width) {
      throw ImageError("pixel buffer size does not match " + std::to_string(height) + "x" +
                       std::to_string(width));
    }
    for (auto v : pixels_) check_value(v);
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }

  std::uint8_t operator()(int row, int col) const noexcept {
    return pixels_[static_cast<std::size_t>(row) * width_ + col];
  }

  /// Unchecked write; callers keep values within the tag's range.
  void set(int row, int col, std::uint8_t v) noexcept {
    pixels_[static_cast<std::size_t>(row) * width_ + col] = v;
  }

  std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  static void check_dims(int height, int width) {
    if (height < 1 || width < 1) {
      throw ImageError("image dimensions must be positive, got " + std::to_string(height) + "x" +
                       std::to_string(width));
    }
  }
  static void check_value(std::uint8_t v) {
    if (v > Tag::kMaxValue) {
      throw ImageError("pixel value " + std::to_string(v) + " exceeds " +
                       std::to_string(Tag::kMaxValue));
    }
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> pixels_;
};

using GrayImage = Raster<GrayTag>;
using BinaryImage = Raster<BinaryTag>;

inline constexpr std::uint8_t kInk = 0;
inline constexpr std::uint8_t kBackground = 1;

/// Decomposition record for lossless patch reassembly.
struct PatchGrid {
  int patch_size = 0;
  int rows = 0;
  int cols = 0;
  int pad_top = 0;
  int pad_bottom = 0;
  int pad_left = 0;
  int pad_right = 0;
  int original_height = 0;
  int original_width = 0;

  int padded_height() const noexcept { return original_height + pad_top + pad_bottom; }
  int padded_width() const noexcept { return original_width + pad_left + pad_right; }
  int patch_count() const noexcept { return rows * cols; }

  /// True when the margins and counts are mutually consistent.
  bool consistent() const noexcept;

  friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

struct OtsuResult {
  int threshold = 0;
  bool degenerate = false;  // single-intensity histogram
};

/// Threshold minimizing the weighted within-class variance of the
/// histogram, classes being {v <= t} and {v > t}. Ties resolve to the
/// smallest t. A constant image returns its value with `degenerate` set.
OtsuResult otsu_threshold(const GrayImage& img);

/// pixel -> 0 when intensity <= t, else 1.
BinaryImage binarize(const GrayImage& img, int threshold);

/// Otsu + binarize. Degenerate histograms map >= 128 to background.
BinaryImage binarize_otsu(const GrayImage& img);

/// {0,1} -> {0,255}.
GrayImage to_gray(const BinaryImage& img);

/// Pads (centered, background-filled) up to the smallest multiple of
/// `multiple` on each axis. The returned grid records the margins with
/// rows/cols counted in units of `multiple`.
std::pair<BinaryImage, PatchGrid> pad_to_multiple(const BinaryImage& img, int multiple);

/// Centered background padding so that both sides are at least `min_height`/`min_width`.
BinaryImage pad_to_at_least(const BinaryImage& img, int min_height, int min_width);

/// Sub-image copy; the rectangle must lie inside `img`.
BinaryImage crop(const BinaryImage& img, int top, int left, int height, int width);

/// size x size window at a seed-determined origin, uniform over the valid
/// positions. Inputs smaller than `size` are padded first.
BinaryImage random_crop(const BinaryImage& img, int size, std::uint64_t seed);

/// Row-major non-overlapping patches of the padded image.
std::pair<std::vector<BinaryImage>, PatchGrid> split_into_patches(const BinaryImage& img,
                                                                  int patch_size);

/// Inverse of split_into_patches, padding cropped away.
BinaryImage reassemble_patches(std::span<const BinaryImage> patches, const PatchGrid& grid);

/// Counter-clockwise rotation by k * 90 degrees (k taken mod 4).
BinaryImage rotate90(const BinaryImage& img, int k);

/// Rotation by a seed-drawn k in {0,1,2,3}. Square input only.
std::pair<BinaryImage, int> random_rotate90(const BinaryImage& patch, std::uint64_t seed);

}  // namespace docdenoise
