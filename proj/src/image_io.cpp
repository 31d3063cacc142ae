#include "docdenoise/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

namespace docdenoise {

namespace fs = std::filesystem;

namespace {

std::string lower_ext(const fs::path& path) {
  auto ext = path.extension().string();
  std::ranges::transform(ext, ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

GrayImage read_png(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw ImageIoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw ImageIoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  return {static_cast<int>(image.height), static_cast<int>(image.width), std::move(buffer)};
}

// Netpbm header token reader that skips '#' comments.
class PnmReader {
 public:
  explicit PnmReader(std::istream& in) : in_(in) {}

  int next_int() {
    skip_space_and_comments();
    int value = 0;
    if (!(in_ >> value)) throw ImageIoError("malformed netpbm header");
    return value;
  }

  void skip_space_and_comments() {
    for (;;) {
      int c = in_.peek();
      if (c == '#') {
        std::string line;
        std::getline(in_, line);
      } else if (c != EOF && std::isspace(c)) {
        in_.get();
      } else {
        return;
      }
    }
  }

 private:
  std::istream& in_;
};

GrayImage read_pnm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path.string());
  char magic[2] = {};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] < '1' || magic[1] > '5' || magic[1] == '3') {
    throw ImageIoError("unsupported netpbm variant in " + path.string());
  }
  const char kind = magic[1];
  PnmReader header(in);
  const int width = header.next_int();
  const int height = header.next_int();
  const bool bitmap = kind == '1' || kind == '4';
  const int maxval = bitmap ? 1 : header.next_int();
  if (width < 1 || height < 1 || maxval < 1 || maxval > 255) {
    throw ImageIoError("unsupported netpbm geometry in " + path.string());
  }

  std::vector<std::uint8_t> px(static_cast<std::size_t>(width) * height);
  auto scale = [maxval](int v) { return static_cast<std::uint8_t>(v * 255 / maxval); };
  if (kind == '2') {
    for (auto& p : px) p = scale(header.next_int());
  } else if (kind == '5') {
    in.get();  // single whitespace after maxval
    in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
    if (!in) throw ImageIoError("truncated pixel data in " + path.string());
    for (auto& p : px) p = scale(p);
  } else if (kind == '1') {
    // In PBM 1 is black.
    for (auto& p : px) {
      header.skip_space_and_comments();
      const int c = in.get();
      if (c != '0' && c != '1') throw ImageIoError("malformed PBM data in " + path.string());
      p = c == '1' ? 0 : 255;
    }
  } else {
    in.get();
    const std::size_t row_bytes = (static_cast<std::size_t>(width) + 7) / 8;
    std::vector<std::uint8_t> row(row_bytes);
    for (int r = 0; r < height; ++r) {
      in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row_bytes));
      if (!in) throw ImageIoError("truncated pixel data in " + path.string());
      for (int c = 0; c < width; ++c) {
        const bool black = (row[c / 8] >> (7 - c % 8)) & 1;
        px[static_cast<std::size_t>(r) * width + c] = black ? 0 : 255;
      }
    }
  }
  return {height, width, std::move(px)};
}

}  // namespace

bool is_image_file(const fs::path& path) {
  const auto ext = lower_ext(path);
  return ext == ".png" || ext == ".pgm" || ext == ".pbm" || ext == ".pnm";
}

GrayImage read_gray(const fs::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw ImageIoError("cannot open " + path.string());
  unsigned char sig[8] = {};
  probe.read(reinterpret_cast<char*>(sig), 8);
  if (probe.gcount() >= 8 && png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
  if (probe.gcount() >= 2 && sig[0] == 'P') return read_pnm(path);
  throw ImageIoError("unrecognized image format: " + path.string());
}

BinaryImage read_binary(const fs::path& path) {
  const GrayImage gray = read_gray(path);
  const bool two_level =
      std::ranges::all_of(gray.pixels(), [](std::uint8_t v) { return v == 0 || v == 255; });
  return two_level ? binarize(gray, 127) : binarize_otsu(gray);
}

void write_gray(const fs::path& path, const GrayImage& img) {
  if (lower_ext(path) == ".pgm") {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ImageIoError("cannot write " + path.string());
    out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels().data()),
              static_cast<std::streamsize>(img.size()));
    if (!out) throw ImageIoError("write failed for " + path.string());
    return;
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels().data(), 0, nullptr)) {
    throw ImageIoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

void write_binary(const fs::path& path, const BinaryImage& img) { write_gray(path, to_gray(img)); }

void write_rgb_png(const fs::path& path, int height, int width, std::span<const std::uint8_t> rgb,
                   std::span<const std::pair<std::string, std::string>> text) {
  if (rgb.size() != static_cast<std::size_t>(height) * width * 3) {
    throw ImageIoError("write_rgb_png: buffer size mismatch");
  }
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw ImageIoError("cannot write " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("libpng error while writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);

  std::vector<png_text> chunks(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    chunks[i].compression = PNG_TEXT_COMPRESSION_NONE;
    chunks[i].key = const_cast<char*>(text[i].first.c_str());
    chunks[i].text = const_cast<char*>(text[i].second.c_str());
    chunks[i].text_length = text[i].second.size();
  }
  if (!chunks.empty()) png_set_text(png, info, chunks.data(), static_cast<int>(chunks.size()));

  png_write_info(png, info);
  for (int r = 0; r < height; ++r) {
    png_write_row(png, rgb.data() + static_cast<std::size_t>(r) * width * 3);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace docdenoise
