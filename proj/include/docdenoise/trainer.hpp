#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "docdenoise/imaging.hpp"
#include "docdenoise/losses.hpp"
#include "docdenoise/metrics.hpp"
#include "docdenoise/nets.hpp"
#include "docdenoise/noisegen.hpp"

namespace docdenoise {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A loss came out NaN or infinite; the optimizer step was not taken.
class NonFiniteLossError : public TrainingError {
 public:
  using TrainingError::TrainingError;
};

enum class Regime { classical, hybrid };

std::string_view to_string(Regime r);
std::optional<Regime> parse_regime(std::string_view s);

struct TrainConfig {
  Regime regime = Regime::hybrid;
  double lr_gen = 0.0002;
  double lr_dis = 0.0002;
  int batch_size = 4;         // images per batch
  int patches_per_image = 1;  // patches drawn from each image's crop
  PenaltyConfig penalty;
  int epochs = 100;
  int f_save = 10;
  int n_critic = 1;
  int64_t patch_size = 256;
  int crop_size = 1024;
  uint64_t seed = 0;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double grad_ema_decay = 0.9;
  // Calibrated at 1/100 of a seeded healthy toy run (see README).
  double collapse_var_threshold = 8.0;
  double collapse_std_threshold = 2e-3;
  int collapse_window = 3;  // consecutive epochs for a `collapsed` verdict

  void validate() const;
};

struct GeneratorBreakdown {
  double adv = 0.0;
  double l1 = 0.0;
  double total = 0.0;
};

struct DiscriminatorBreakdown {
  double real_term = 0.0;
  double fake_term = 0.0;
  double diff = 0.0;
  double gp = 0.0;
  double total = 0.0;
};

struct GeneratorStep {
  GeneratorBreakdown loss;
  double grad_variance = 0.0;  // sample variance of the flattened gradient
  double output_std = 0.0;     // std of the generator outputs in the batch
};

enum class CollapseVerdict { ok, warning, collapsed };

std::string_view to_string(CollapseVerdict v);

struct EpochReport {
  int epoch = 0;
  GeneratorBreakdown generator;
  DiscriminatorBreakdown discriminator;
  double gp_mean = 0.0;
  double grad_variance = 0.0;  // exponential moving average at epoch end
  double output_std = 0.0;     // mean over the epoch's batches
  double val_ssim = 0.0;
  double val_psnr = 0.0;
  double val_mse = 0.0;
  double wall_time = 0.0;  // seconds; kept out of metrics.jsonl
  CollapseVerdict verdict = CollapseVerdict::ok;

  /// One-line JSON without wall_time, so identical runs log identical bytes.
  std::string to_json_line() const;
};

struct ImagePair {
  std::string name;
  BinaryImage clean;
  BinaryImage noisy;
};

struct Batch {
  torch::Tensor clean;  // (N,1,P,P) in [0,1]
  torch::Tensor noisy;
};

/// Everything a checkpoint restores.
struct TrainingState {
  GeneratorConfig gen_cfg;
  DiscriminatorConfig dis_cfg;
  Generator gen{nullptr};
  Discriminator dis{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_gen;
  std::unique_ptr<torch::optim::Adam> opt_dis;
  int epoch = 0;  // completed epochs
  double grad_variance_ema = std::numeric_limits<double>::quiet_NaN();

  static TrainingState create(const GeneratorConfig& gen_cfg, const DiscriminatorConfig& dis_cfg,
                              const TrainConfig& cfg);
};

/// Loads every pair of `split`, images read from the manifest root.
std::vector<ImagePair> load_pairs(const DatasetManifest& manifest, Split split);

/// {0,1} images -> (N,1,H,W) float tensor with identical values.
torch::Tensor to_tensor(std::span<const BinaryImage> images);

/// Builds a batch from the listed pairs. Each pair gets one shared
/// transform: pad + random crop to crop_size, `patches_per_image` patch
/// picks, and a k*90 degree rotation.
Batch make_batch(std::span<const ImagePair> pairs, std::span<const std::size_t> indices,
                 const TrainConfig& cfg, uint64_t seed);

/// Samples batch_size pairs uniformly with replacement, then make_batch.
Batch preprocess_batch(std::span<const ImagePair> pairs, const TrainConfig& cfg, uint64_t seed);
Batch preprocess_batch(const DatasetManifest& manifest, const TrainConfig& cfg, uint64_t seed);

/// One critic update on detached generator output. Only the discriminator's
/// parameters move.
DiscriminatorBreakdown train_step_discriminator(Generator& gen, Discriminator& dis,
                                                torch::optim::Adam& opt, const Batch& batch,
                                                const TrainConfig& cfg, uint64_t seed);

/// One generator update. Only the generator's parameters move.
GeneratorStep train_step_generator(Generator& gen, Discriminator& dis, torch::optim::Adam& opt,
                                   const Batch& batch, const TrainConfig& cfg);

/// Full-page inference: pad, split at the generator's patch size, forward
/// in eval mode, threshold at 0.5, reassemble and crop.
BinaryImage denoise_document(Generator& gen, const BinaryImage& noisy, int max_batch = 16);

struct ValidationScores {
  double ssim = 0.0;
  double psnr = 0.0;
  double mse = 0.0;
};

/// Unweighted means over the documents.
ValidationScores validate_epoch(Generator& gen, std::span<const ImagePair> pairs,
                                const MetricConfig& metric_cfg = {});

/// Baseline: noisy input scored against clean.
ValidationScores noisy_baseline(std::span<const ImagePair> pairs, const MetricConfig& metric_cfg = {});

struct CollapseThresholds {
  double var_threshold = 8.0;
  double std_threshold = 2e-3;
  int window = 3;
};

/// `collapsed` when both grad_variance and output_std sit below their
/// thresholds for the last `window` reports; `warning` when at least one
/// does on the latest report; `ok` otherwise.
CollapseVerdict detect_mode_collapse(std::span<const EpochReport> reports,
                                     const CollapseThresholds& thresholds);

struct RunConfig {
  TrainConfig train;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  MetricConfig metrics;
  std::filesystem::path manifest;
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> resume_from;

  /// Propagates the shared patch size into the network configs and
  /// validates everything.
  void resolve();
};

struct TrainResult {
  std::vector<EpochReport> reports;
  std::filesystem::path final_checkpoint;
  CollapseVerdict final_verdict = CollapseVerdict::ok;
};

using EpochCallback = std::function<void(const EpochReport&)>;

/// Runs the alternating schedule for cfg.train.epochs epochs, writing
/// metrics.jsonl, timing.jsonl, checkpoints/epoch_<n> every f_save epochs
/// and checkpoints/final under output_dir. A non-finite loss aborts with
/// TrainingError; checkpoints already written are left in place.
TrainResult train(const DatasetManifest& manifest, const RunConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace docdenoise
