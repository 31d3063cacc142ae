#include "docdenoise/noisegen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "docdenoise/image_io.hpp"

namespace docdenoise {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 4> kKindNames = {"speckle_blobs", "salt_clusters",
                                                        "edge_distortion", "blur_threshold"};
constexpr std::array<std::string_view, 3> kSplitNames = {"train", "val", "test"};

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string_view to_string(NoiseKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<NoiseKind> parse_noise_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<NoiseKind>(i);
  }
  return std::nullopt;
}

std::string_view to_string(Split split) { return kSplitNames[static_cast<std::size_t>(split)]; }

std::optional<Split> parse_split(std::string_view name) {
  for (std::size_t i = 0; i < kSplitNames.size(); ++i) {
    if (kSplitNames[i] == name) return static_cast<Split>(i);
  }
  return std::nullopt;
}

void NoiseProfile::validate() const {
  auto fail = [](const std::string& field) {
    throw std::invalid_argument("noise profile field '" + field + "' out of range");
  };
  if (iterations < kMinIterations || iterations > kMaxIterations) fail("iterations");
  if (blob_size < kMinBlobSize || blob_size > kMaxBlobSize) fail("blob_size");
  if (value_low < kMinValue || value_low > value_high) fail("value_low");
  if (value_high > kMaxValue) fail("value_high");
  if (!(sparsity >= 0.0 && sparsity <= 1.0)) fail("sparsity");
  if (!(blur_sigma >= 0.0)) fail("blur_sigma");
}

std::string NoiseProfile::to_json() const {
  json j = json::object();
  j["kind"] = to_string(kind);
  j["iterations"] = iterations;
  j["blob_size"] = blob_size;
  j["value_low"] = value_low;
  j["value_high"] = value_high;
  j["sparsity"] = sparsity;
  j["region_mask_seed"] = region_mask_seed;
  j["blur_sigma"] = blur_sigma;
  return j.dump();
}

NoiseProfile NoiseProfile::from_json(std::string_view text) {
  const json j = json::parse(text);
  NoiseProfile p;
  const auto kind = parse_noise_kind(j.at("kind").get<std::string>());
  if (!kind) throw std::invalid_argument("unknown noise kind in profile");
  p.kind = *kind;
  p.iterations = j.at("iterations").get<int>();
  p.blob_size = j.at("blob_size").get<int>();
  p.value_low = j.at("value_low").get<int>();
  p.value_high = j.at("value_high").get<int>();
  p.sparsity = j.at("sparsity").get<double>();
  p.region_mask_seed = j.at("region_mask_seed").get<std::uint64_t>();
  p.blur_sigma = j.at("blur_sigma").get<double>();
  p.validate();
  return p;
}

NoiseProfile sample_noise_profile(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  NoiseProfile p;
  p.kind = static_cast<NoiseKind>(std::uniform_int_distribution<int>(0, 3)(rng));
  p.iterations = std::uniform_int_distribution<int>(NoiseProfile::kMinIterations,
                                                    NoiseProfile::kMaxIterations)(rng);
  p.blob_size = std::uniform_int_distribution<int>(NoiseProfile::kMinBlobSize,
                                                   NoiseProfile::kMaxBlobSize)(rng);
  std::uniform_int_distribution<int> value(NoiseProfile::kMinValue, NoiseProfile::kMaxValue);
  const int a = value(rng);
  const int b = value(rng);
  p.value_low = std::min(a, b);
  p.value_high = std::max(a, b);
  p.sparsity = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  p.region_mask_seed = rng();
  p.blur_sigma = std::uniform_real_distribution<double>(0.0, NoiseProfile::kMaxBlurSigma)(rng);
  return p;
}

std::vector<bool> region_mask(int height, int width, double sparsity, std::uint64_t seed) {
  std::vector<bool> mask(static_cast<std::size_t>(height) * width, false);
  if (sparsity <= 0.0) return mask;

  const int cell = std::clamp(std::min(height, width) / 4, 8, 128);
  const int lat_h = height / cell + 2;
  const int lat_w = width / cell + 2;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> lattice(static_cast<std::size_t>(lat_h) * lat_w);
  for (auto& v : lattice) v = unit(rng);

  auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
  for (int r = 0; r < height; ++r) {
    const int i0 = r / cell;
    const double fy = smooth(static_cast<double>(r % cell) / cell);
    for (int c = 0; c < width; ++c) {
      const int j0 = c / cell;
      const double fx = smooth(static_cast<double>(c % cell) / cell);
      auto at = [&](int i, int j) { return lattice[static_cast<std::size_t>(i) * lat_w + j]; };
      const double top = at(i0, j0) * (1 - fx) + at(i0, j0 + 1) * fx;
      const double bottom = at(i0 + 1, j0) * (1 - fx) + at(i0 + 1, j0 + 1) * fx;
      const double v = top * (1 - fy) + bottom * fy;
      mask[static_cast<std::size_t>(r) * width + c] = v < sparsity;
    }
  }
  return mask;
}

namespace {

// Grayscale working buffer for the degradation passes.
struct Canvas {
  int height;
  int width;
  std::vector<double> px;

  double& at(int r, int c) { return px[static_cast<std::size_t>(r) * width + c]; }
  bool inside(int r, int c) const { return r >= 0 && c >= 0 && r < height && c < width; }

  void stamp_disc(int cr, int cc, double radius, double value, bool darken) {
    const int ir = static_cast<int>(std::ceil(radius));
    for (int dr = -ir; dr <= ir; ++dr) {
      for (int dc = -ir; dc <= ir; ++dc) {
        if (dr * dr + dc * dc > radius * radius) continue;
        const int r = cr + dr;
        const int c = cc + dc;
        if (!inside(r, c)) continue;
        at(r, c) = darken ? std::min(at(r, c), value) : std::max(at(r, c), value);
      }
    }
  }
};

void gaussian_blur(Canvas& canvas, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double norm = std::accumulate(kernel.begin(), kernel.end(), 0.0);
  for (auto& k : kernel) k /= norm;

  const int h = canvas.height;
  const int w = canvas.width;
  std::vector<double> tmp(canvas.px.size());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        const int cc = std::clamp(c + i, 0, w - 1);
        acc += kernel[i + radius] * canvas.px[static_cast<std::size_t>(r) * w + cc];
      }
      tmp[static_cast<std::size_t>(r) * w + c] = acc;
    }
  }
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        const int rr = std::clamp(r + i, 0, h - 1);
        acc += kernel[i + radius] * tmp[static_cast<std::size_t>(rr) * w + c];
      }
      canvas.px[static_cast<std::size_t>(r) * w + c] = acc;
    }
  }
}

}  // namespace

BinaryImage apply_noise(const BinaryImage& clean, const NoiseProfile& profile,
                        std::uint64_t seed) {
  profile.validate();
  const int h = clean.height();
  const int w = clean.width();
  const auto mask = region_mask(h, w, profile.sparsity, profile.region_mask_seed);

  std::vector<int> admitted;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) admitted.push_back(static_cast<int>(i));
  }
  if (admitted.empty()) return clean;

  Canvas canvas{h, w, std::vector<double>(clean.size())};
  for (std::size_t i = 0; i < clean.size(); ++i) canvas.px[i] = clean.pixels()[i] ? 255.0 : 0.0;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, admitted.size() - 1);
  std::uniform_real_distribution<double> intensity(profile.value_low, profile.value_high);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int s = profile.blob_size;
  const auto area = static_cast<double>(admitted.size());

  for (int it = 0; it < profile.iterations; ++it) {
    switch (profile.kind) {
      case NoiseKind::speckle_blobs: {
        const int blobs = std::max(1, static_cast<int>(area / (s * s * 60.0)));
        for (int b = 0; b < blobs; ++b) {
          const int idx = admitted[pick(rng)];
          const double radius = 0.5 * s * (0.6 + 0.8 * unit(rng));
          canvas.stamp_disc(idx / w, idx % w, radius, intensity(rng), true);
        }
        break;
      }
      case NoiseKind::salt_clusters: {
        const int clusters = std::max(1, static_cast<int>(area / (s * s * 150.0)));
        const int spread = 2 * s;
        std::uniform_int_distribution<int> offset(-spread, spread);
        for (int k = 0; k < clusters; ++k) {
          const int idx = admitted[pick(rng)];
          for (int d = 0; d < 4 * s; ++d) {
            const int r = idx / w + offset(rng);
            const int c = idx % w + offset(rng);
            if (!canvas.inside(r, c)) continue;
            const double dot = std::max(0.5, s / 4.0);
            if (canvas.at(r, c) < 128.0) {
              canvas.stamp_disc(r, c, dot, 255.0, false);  // salt on ink
            } else {
              canvas.stamp_disc(r, c, dot, intensity(rng), true);  // pepper on the page
            }
          }
        }
        break;
      }
      case NoiseKind::edge_distortion: {
        const double radius = std::max(1.0, s / 2.0);
        std::vector<int> edges;
        for (int idx : admitted) {
          const int r = idx / w;
          const int c = idx % w;
          if (clean(r, c) != kInk) continue;
          const bool boundary = (r > 0 && clean(r - 1, c)) || (r + 1 < h && clean(r + 1, c)) ||
                                (c > 0 && clean(r, c - 1)) || (c + 1 < w && clean(r, c + 1));
          if (boundary) edges.push_back(idx);
        }
        for (int idx : edges) {
          if (unit(rng) >= 0.25) continue;
          if (unit(rng) < 0.5) {
            canvas.stamp_disc(idx / w, idx % w, radius, intensity(rng) * 0.5, true);
          } else {
            canvas.stamp_disc(idx / w, idx % w, radius, 255.0, false);
          }
        }
        break;
      }
      case NoiseKind::blur_threshold: {
        gaussian_blur(canvas, 0.5 * s);
        const double amplitude = 0.5 * (profile.value_high - profile.value_low) + 20.0;
        std::uniform_real_distribution<double> jitter(-amplitude, amplitude);
        for (int idx : admitted) canvas.px[idx] += jitter(rng);
        break;
      }
    }
  }
  gaussian_blur(canvas, profile.blur_sigma);

  std::vector<std::uint8_t> gray(canvas.px.size());
  for (std::size_t i = 0; i < gray.size(); ++i) {
    gray[i] = static_cast<std::uint8_t>(std::clamp(std::lround(canvas.px[i]), 0L, 255L));
  }
  const GrayImage degraded(h, w, std::move(gray));
  const BinaryImage rebinarized = binarize_otsu(degraded);

  std::vector<std::uint8_t> out(clean.pixels().begin(), clean.pixels().end());
  for (int idx : admitted) out[idx] = rebinarized.pixels()[idx];
  return {h, w, std::move(out)};
}

std::size_t DatasetManifest::count(Split split) const {
  return static_cast<std::size_t>(
      std::ranges::count_if(entries, [split](const auto& e) { return e.split == split; }));
}

std::vector<ManifestEntry> DatasetManifest::select(Split split) const {
  std::vector<ManifestEntry> out;
  std::ranges::copy_if(entries, std::back_inserter(out),
                       [split](const auto& e) { return e.split == split; });
  return out;
}

namespace {

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n") == std::string::npos) return value;
  std::string quoted = "\"";
  for (char ch : value) {
    if (ch == '"') quoted += '"';
    quoted += ch;
  }
  return quoted + "\"";
}

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        current += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        current += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current += ch;
    }
  }
  if (quoted) throw std::runtime_error("unterminated quote in manifest line");
  fields.push_back(std::move(current));
  return fields;
}

constexpr std::string_view kManifestHeader = "clean_path,noisy_path,split,seed,profile";

}  // namespace

void write_manifest(const DatasetManifest& manifest, const fs::path& csv_path) {
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest " + csv_path.string());
  out << kManifestHeader << '\n';
  for (const auto& e : manifest.entries) {
    out << csv_field(e.clean_path.generic_string()) << ','
        << csv_field(e.noisy_path.generic_string()) << ',' << to_string(e.split) << ','
        << e.seed << ',' << csv_field(e.profile.to_json()) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for manifest " + csv_path.string());
}

DatasetManifest read_manifest(const fs::path& csv_path) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open manifest " + csv_path.string());
  DatasetManifest manifest;
  manifest.root = csv_path.parent_path();

  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) {
    throw std::runtime_error("manifest " + csv_path.string() + " lacks the expected header");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = parse_csv_line(line);
    if (fields.size() != 5) {
      throw std::runtime_error("manifest line " + std::to_string(line_no) + ": expected 5 fields");
    }
    ManifestEntry e;
    e.clean_path = fields[0];
    e.noisy_path = fields[1];
    const auto split = parse_split(fields[2]);
    if (!split) throw std::runtime_error("manifest line " + std::to_string(line_no) + ": bad split");
    e.split = *split;
    e.seed = std::stoull(fields[3]);
    e.profile = NoiseProfile::from_json(fields[4]);
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

DatasetManifest build_paired_dataset(const fs::path& clean_dir, const fs::path& out_dir,
                                     const DatasetOptions& options) {
  if (options.variants_per_clean < 1) {
    throw std::invalid_argument("variants_per_clean must be >= 1");
  }
  const auto& fr = options.split_fractions;
  if (std::ranges::any_of(fr, [](double f) { return f < 0.0; }) ||
      std::abs(fr[0] + fr[1] + fr[2] - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must be nonnegative and sum to 1");
  }
  if (!fs::is_directory(clean_dir)) {
    throw std::runtime_error("clean directory does not exist: " + clean_dir.string());
  }

  std::vector<fs::path> candidates;
  for (const auto& item : fs::directory_iterator(clean_dir)) {
    if (item.is_regular_file() && is_image_file(item.path())) candidates.push_back(item.path());
  }
  std::ranges::sort(candidates);

  std::vector<std::pair<std::string, BinaryImage>> cleans;
  for (const auto& path : candidates) {
    try {
      cleans.emplace_back(path.stem().string(), binarize_otsu(read_gray(path)));
    } catch (const std::exception& err) {
      std::cerr << "warning: skipping " << path.string() << ": " << err.what() << '\n';
    }
  }
  if (cleans.empty()) {
    throw std::runtime_error("no readable images in " + clean_dir.string());
  }

  // Split assignment is per clean page so variants never straddle splits.
  const std::size_t n = cleans.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 split_rng(mix_seed(options.seed, 0x5B117));
  std::ranges::shuffle(order, split_rng);
  const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(fr[0] * n)));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(fr[1] * n)));
  std::vector<Split> split_of(n, Split::test);
  for (std::size_t i = 0; i < n; ++i) {
    split_of[order[i]] = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
  }

  fs::create_directories(out_dir / "clean");
  fs::create_directories(out_dir / "noisy");

  DatasetManifest manifest;
  manifest.root = out_dir;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [stem, clean] = cleans[i];
    const fs::path clean_rel = fs::path("clean") / (stem + ".png");
    write_binary(out_dir / clean_rel, clean);
    for (int v = 0; v < options.variants_per_clean; ++v) {
      const std::uint64_t seed = mix_seed(options.seed, i * 1024 + static_cast<std::uint64_t>(v));
      ManifestEntry entry;
      entry.clean_path = clean_rel;
      entry.noisy_path = fs::path("noisy") / (stem + "_v" + std::to_string(v) + ".png");
      entry.split = split_of[i];
      entry.seed = seed;
      entry.profile = sample_noise_profile(seed);
      write_binary(out_dir / entry.noisy_path, apply_noise(clean, entry.profile, mix_seed(seed, 1)));
      manifest.entries.push_back(std::move(entry));
    }
  }
  write_manifest(manifest, out_dir / kManifestFileName);
  return manifest;
}

}  // namespace docdenoise
