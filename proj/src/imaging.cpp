#include "docdenoise/imaging.hpp"

#include <algorithm>
#include <array>
#include <random>

namespace docdenoise {

bool PatchGrid::consistent() const noexcept {
  if (patch_size < 1 || rows < 1 || cols < 1) return false;
  if (original_height < 1 || original_width < 1) return false;
  for (int pad : {pad_top, pad_bottom, pad_left, pad_right}) {
    if (pad < 0 || pad >= patch_size) return false;
  }
  return padded_height() == rows * patch_size && padded_width() == cols * patch_size;
}

OtsuResult otsu_threshold(const GrayImage& img) {
  if (img.empty()) throw ImageError("otsu_threshold: empty image");

  std::array<std::uint64_t, 256> hist{};
  for (auto v : img.pixels()) ++hist[v];

  const auto total = static_cast<std::uint64_t>(img.size());
  long double total_sum = 0;
  for (int v = 0; v < 256; ++v) total_sum += static_cast<long double>(v) * hist[v];

  // Minimizing within-class variance is maximizing S0^2/n0 + S1^2/n1
  // (the total sum of squares is fixed).
  std::uint64_t n0 = 0;
  long double s0 = 0;
  int best = -1;
  long double best_score = 0;
  for (int t = 0; t < 255; ++t) {
    n0 += hist[t];
    s0 += static_cast<long double>(t) * hist[t];
    const std::uint64_t n1 = total - n0;
    if (n0 == 0 || n1 == 0) continue;
    const long double s1 = total_sum - s0;
    const long double score = s0 * s0 / n0 + s1 * s1 / n1;
    if (best < 0 || score > best_score) {
      best = t;
      best_score = score;
    }
  }

  if (best < 0) return {static_cast<int>(img.pixels().front()), true};
  return {best, false};
}

BinaryImage binarize(const GrayImage& img, int threshold) {
  if (threshold < 0 || threshold > 255) {
    throw ImageError("binarize: threshold " + std::to_string(threshold) + " outside [0,255]");
  }
  std::vector<std::uint8_t> out(img.size());
  std::ranges::transform(img.pixels(), out.begin(), [threshold](std::uint8_t v) {
    return static_cast<std::uint8_t>(v <= threshold ? kInk : kBackground);
  });
  return {img.height(), img.width(), std::move(out)};
}

BinaryImage binarize_otsu(const GrayImage& img) {
  const auto otsu = otsu_threshold(img);
  return binarize(img, otsu.degenerate ? 127 : otsu.threshold);
}

GrayImage to_gray(const BinaryImage& img) {
  std::vector<std::uint8_t> out(img.size());
  std::ranges::transform(img.pixels(), out.begin(),
                         [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 255 : 0); });
  return {img.height(), img.width(), std::move(out)};
}

namespace {

BinaryImage pad(const BinaryImage& img, int top, int bottom, int left, int right) {
  BinaryImage out(img.height() + top + bottom, img.width() + left + right, kBackground);
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) out.set(r + top, c + left, img(r, c));
  }
  return out;
}

int round_up(int value, int multiple) { return (value + multiple - 1) / multiple * multiple; }

}  // namespace

std::pair<BinaryImage, PatchGrid> pad_to_multiple(const BinaryImage& img, int multiple) {
  if (multiple < 1) throw ImageError("pad_to_multiple: multiple must be >= 1");
  if (img.empty()) throw ImageError("pad_to_multiple: empty image");

  PatchGrid grid;
  grid.patch_size = multiple;
  grid.original_height = img.height();
  grid.original_width = img.width();
  const int extra_h = round_up(img.height(), multiple) - img.height();
  const int extra_w = round_up(img.width(), multiple) - img.width();
  grid.pad_top = extra_h / 2;
  grid.pad_bottom = extra_h - grid.pad_top;
  grid.pad_left = extra_w / 2;
  grid.pad_right = extra_w - grid.pad_left;
  grid.rows = grid.padded_height() / multiple;
  grid.cols = grid.padded_width() / multiple;

  if (extra_h == 0 && extra_w == 0) return {img, grid};
  return {pad(img, grid.pad_top, grid.pad_bottom, grid.pad_left, grid.pad_right), grid};
}

BinaryImage pad_to_at_least(const BinaryImage& img, int min_height, int min_width) {
  const int extra_h = std::max(0, min_height - img.height());
  const int extra_w = std::max(0, min_width - img.width());
  if (extra_h == 0 && extra_w == 0) return img;
  return pad(img, extra_h / 2, extra_h - extra_h / 2, extra_w / 2, extra_w - extra_w / 2);
}

BinaryImage crop(const BinaryImage& img, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || height < 1 || width < 1 || top + height > img.height() ||
      left + width > img.width()) {
    throw ImageError("crop: rectangle outside image");
  }
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(height) * width);
  const auto px = img.pixels();
  for (int r = top; r < top + height; ++r) {
    const auto row = px.subspan(static_cast<std::size_t>(r) * img.width() + left, width);
    out.insert(out.end(), row.begin(), row.end());
  }
  return {height, width, std::move(out)};
}

BinaryImage random_crop(const BinaryImage& img, int size, std::uint64_t seed) {
  if (size < 1) throw ImageError("random_crop: size must be >= 1");
  const BinaryImage padded = pad_to_at_least(img, size, size);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> row_dist(0, padded.height() - size);
  std::uniform_int_distribution<int> col_dist(0, padded.width() - size);
  const int top = row_dist(rng);
  const int left = col_dist(rng);
  return crop(padded, top, left, size, size);
}

std::pair<std::vector<BinaryImage>, PatchGrid> split_into_patches(const BinaryImage& img,
                                                                  int patch_size) {
  auto [padded, grid] = pad_to_multiple(img, patch_size);
  std::vector<BinaryImage> patches;
  patches.reserve(grid.patch_count());
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      patches.push_back(crop(padded, r * patch_size, c * patch_size, patch_size, patch_size));
    }
  }
  return {std::move(patches), grid};
}

BinaryImage reassemble_patches(std::span<const BinaryImage> patches, const PatchGrid& grid) {
  if (!grid.consistent()) throw ImageError("reassemble_patches: inconsistent patch grid");
  if (patches.size() != static_cast<std::size_t>(grid.patch_count())) {
    throw ImageError("reassemble_patches: expected " + std::to_string(grid.patch_count()) +
                     " patches, got " + std::to_string(patches.size()));
  }
  const int p = grid.patch_size;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    if (patches[i].height() != p || patches[i].width() != p) {
      throw ImageError("reassemble_patches: patch " + std::to_string(i) + " is " +
                       std::to_string(patches[i].height()) + "x" +
                       std::to_string(patches[i].width()) + ", expected " + std::to_string(p) +
                       "x" + std::to_string(p));
    }
  }

  BinaryImage out(grid.original_height, grid.original_width, kBackground);
  for (int r = 0; r < grid.original_height; ++r) {
    const int pr = r + grid.pad_top;
    for (int c = 0; c < grid.original_width; ++c) {
      const int pc = c + grid.pad_left;
      const auto& patch = patches[static_cast<std::size_t>(pr / p) * grid.cols + pc / p];
      out.set(r, c, patch(pr % p, pc % p));
    }
  }
  return out;
}

BinaryImage rotate90(const BinaryImage& img, int k) {
  k = ((k % 4) + 4) % 4;
  if (k == 0) return img;
  const int h = img.height();
  const int w = img.width();
  const bool swap = (k % 2) == 1;
  BinaryImage out(swap ? w : h, swap ? h : w, kBackground);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      switch (k) {
        case 1: out.set(w - 1 - c, r, img(r, c)); break;
        case 2: out.set(h - 1 - r, w - 1 - c, img(r, c)); break;
        default: out.set(c, h - 1 - r, img(r, c)); break;
      }
    }
  }
  return out;
}

std::pair<BinaryImage, int> random_rotate90(const BinaryImage& patch, std::uint64_t seed) {
  if (patch.height() != patch.width()) {
    throw ImageError("random_rotate90: patch must be square, got " +
                     std::to_string(patch.height()) + "x" + std::to_string(patch.width()));
  }
  std::mt19937_64 rng(seed);
  const int k = std::uniform_int_distribution<int>(0, 3)(rng);
  return {rotate90(patch, k), k};
}

}  // namespace docdenoise
