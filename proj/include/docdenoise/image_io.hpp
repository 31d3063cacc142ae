#pragma once

#include <filesystem>
#include <stdexcept>

#include "docdenoise/imaging.hpp"

namespace docdenoise {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads PNG (any bit depth / color type, converted to 8-bit gray) or
/// netpbm P1/P2/P4/P5. Format is chosen by file signature.
GrayImage read_gray(const std::filesystem::path& path);

/// Reads an image and maps it to {0,1}. Files whose pixels are exactly
/// {0,255} map directly; anything else is Otsu-binarized.
BinaryImage read_binary(const std::filesystem::path& path);

/// Writes 8-bit gray; `.pgm` selects binary netpbm, anything else PNG.
void write_gray(const std::filesystem::path& path, const GrayImage& img);

/// Writes {0,1} as 8-bit {0,255}.
void write_binary(const std::filesystem::path& path, const BinaryImage& img);

/// Writes an 8-bit RGB PNG with optional tEXt chunks (key, value).
void write_rgb_png(const std::filesystem::path& path, int height, int width,
                   std::span<const std::uint8_t> rgb,
                   std::span<const std::pair<std::string, std::string>> text = {});

bool is_image_file(const std::filesystem::path& path);

}  // namespace docdenoise
