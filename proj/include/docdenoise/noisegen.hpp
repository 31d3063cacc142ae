#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "docdenoise/imaging.hpp"

namespace docdenoise {

enum class NoiseKind { speckle_blobs, salt_clusters, edge_distortion, blur_threshold };

std::string_view to_string(NoiseKind kind);
std::optional<NoiseKind> parse_noise_kind(std::string_view name);

/// Sampled degradation parameters for one noisy variant.
struct NoiseProfile {
  static constexpr int kMinIterations = 2;
  static constexpr int kMaxIterations = 5;
  static constexpr int kMinBlobSize = 2;
  static constexpr int kMaxBlobSize = 6;
  static constexpr int kMinValue = 20;
  static constexpr int kMaxValue = 200;
  static constexpr double kMaxBlurSigma = 1.5;

  NoiseKind kind = NoiseKind::speckle_blobs;
  int iterations = 2;
  int blob_size = 2;
  int value_low = 20;
  int value_high = 200;
  double sparsity = 0.5;  // fraction of the page the region mask admits
  std::uint64_t region_mask_seed = 0;
  double blur_sigma = 0.0;

  /// Throws std::invalid_argument naming the first out-of-range field.
  void validate() const;

  /// Compact JSON object, stable key order.
  std::string to_json() const;
  static NoiseProfile from_json(std::string_view json);

  friend bool operator==(const NoiseProfile&, const NoiseProfile&) = default;
};

/// Every field uniform over its admissible range; deterministic per seed.
NoiseProfile sample_noise_profile(std::uint64_t seed);

/// Low-frequency value-noise mask: true where noise may land. Pixels are
/// admitted when the smooth field falls below `sparsity`, so 0 yields an
/// empty mask and 1 a full one.
std::vector<bool> region_mask(int height, int width, double sparsity, std::uint64_t seed);

/// Degrades `clean` in a grayscale intermediate and re-binarizes with Otsu.
/// Pixels outside the region mask are copied from `clean` unchanged.
BinaryImage apply_noise(const BinaryImage& clean, const NoiseProfile& profile, std::uint64_t seed);

enum class Split { train, val, test };

std::string_view to_string(Split split);
std::optional<Split> parse_split(std::string_view name);

struct ManifestEntry {
  std::filesystem::path clean_path;  // relative to the manifest directory
  std::filesystem::path noisy_path;
  Split split = Split::train;
  std::uint64_t seed = 0;
  NoiseProfile profile;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Paired clean/noisy dataset index persisted as `manifest.csv`.
struct DatasetManifest {
  std::filesystem::path root;  // directory holding manifest.csv
  std::vector<ManifestEntry> entries;

  std::size_t count(Split split) const;
  std::vector<ManifestEntry> select(Split split) const;
  std::filesystem::path resolve(const std::filesystem::path& relative) const {
    return relative.is_absolute() ? relative : root / relative;
  }
};

inline constexpr std::string_view kManifestFileName = "manifest.csv";

/// Header: clean_path,noisy_path,split,seed,profile
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv_path);
DatasetManifest read_manifest(const std::filesystem::path& csv_path);

struct DatasetOptions {
  int variants_per_clean = 3;
  std::array<double, 3> split_fractions = {0.8, 0.1, 0.1};  // train, val, test
  std::uint64_t seed = 0;
};

/// Binarizes each readable image in `clean_dir` (sorted by name), writes
/// `variants_per_clean` noisy variants with distinct profiles and persists
/// the manifest. Unreadable files are skipped with a warning on stderr.
DatasetManifest build_paired_dataset(const std::filesystem::path& clean_dir,
                                     const std::filesystem::path& out_dir,
                                     const DatasetOptions& options);

/// SplitMix64 mixing step; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace docdenoise
