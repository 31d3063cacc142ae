#include "docdenoise/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "docdenoise/checkpoint.hpp"
#include "docdenoise/config.hpp"
#include "docdenoise/image_io.hpp"

namespace docdenoise {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 2> kRegimeNames = {"classical", "hybrid"};
constexpr std::array<std::string_view, 3> kVerdictNames = {"ok", "warning", "collapsed"};

Critic critic_of(Discriminator& dis) {
  return [dis](const torch::Tensor& a, const torch::Tensor& b) mutable { return dis->forward(a, b); };
}

double scalar(const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; }

void require_finite(const torch::Tensor& t, const char* what) {
  const double v = scalar(t);
  if (!std::isfinite(v)) throw NonFiniteLossError(std::string(what) + " loss is not finite");
}

// Writes autograd results into .grad so the optimizer only sees `params`.
// Returns the flattened gradient.
torch::Tensor assign_gradients(const torch::Tensor& loss, const std::vector<torch::Tensor>& params) {
  std::vector<torch::Tensor> trainable;
  for (const auto& p : params) {
    if (p.requires_grad()) trainable.push_back(p);
  }
  if (trainable.empty() || !loss.requires_grad()) return torch::Tensor();
  const auto grads = torch::autograd::grad({loss}, trainable, {}, /*retain_graph=*/false,
                                           /*create_graph=*/false, /*allow_unused=*/true);
  std::vector<torch::Tensor> flat;
  for (std::size_t i = 0; i < trainable.size(); ++i) {
    auto g = grads[i].defined() ? grads[i].detach() : torch::zeros_like(trainable[i]);
    trainable[i].mutable_grad() = g.clone();
    flat.push_back(g.reshape({-1}));
  }
  return torch::cat(flat);
}

DiscriminatorBreakdown discriminator_update(Discriminator& dis, torch::optim::Adam& opt,
                                            const Batch& batch, const torch::Tensor& denoised,
                                            const TrainConfig& cfg, uint64_t seed) {
  const auto critic = critic_of(dis);
  const auto fake = denoised.detach();
  DiscriminatorLoss loss = cfg.regime == Regime::hybrid
                               ? wgan_discriminator_loss(critic, batch.clean, fake, batch.noisy,
                                                         cfg.penalty, seed)
                               : pix2pix_discriminator_loss(critic, batch.clean, fake, batch.noisy);
  require_finite(loss.total, "discriminator");

  opt.zero_grad();
  assign_gradients(loss.total, dis->parameters());
  opt.step();
  if (cfg.penalty.clamp_value) {
    torch::NoGradGuard no_grad;
    for (auto& p : dis->parameters()) p.clamp_(-*cfg.penalty.clamp_value, *cfg.penalty.clamp_value);
  }

  DiscriminatorBreakdown out;
  out.real_term = scalar(loss.real_term);
  out.fake_term = scalar(loss.fake_term);
  out.diff = scalar(loss.diff);
  out.gp = scalar(loss.gp);
  out.total = scalar(loss.total);
  return out;
}

GeneratorStep generator_update(Generator& gen, Discriminator& dis, torch::optim::Adam& opt,
                               const Batch& batch, const torch::Tensor& denoised,
                               const TrainConfig& cfg) {
  const auto critic = critic_of(dis);
  GeneratorLoss loss =
      cfg.regime == Regime::hybrid
          ? wgan_generator_loss(critic, denoised, batch.noisy, batch.clean, cfg.penalty)
          : pix2pix_generator_loss(critic, denoised, batch.noisy, batch.clean, cfg.penalty);
  require_finite(loss.total, "generator");

  opt.zero_grad();
  const auto flat = assign_gradients(loss.total, gen->parameters());
  opt.step();

  GeneratorStep step;
  step.loss = {scalar(loss.adv), scalar(loss.l1), scalar(loss.total)};
  step.grad_variance = flat.defined() && flat.numel() > 1 ? flat.var().item<double>() : 0.0;
  step.output_std = denoised.numel() > 1 ? denoised.detach().std(/*unbiased=*/false).item<double>() : 0.0;
  return step;
}

template <typename T>
void accumulate(T& into, const T& add);

template <>
void accumulate(GeneratorBreakdown& into, const GeneratorBreakdown& add) {
  into.adv += add.adv;
  into.l1 += add.l1;
  into.total += add.total;
}

template <>
void accumulate(DiscriminatorBreakdown& into, const DiscriminatorBreakdown& add) {
  into.real_term += add.real_term;
  into.fake_term += add.fake_term;
  into.diff += add.diff;
  into.gp += add.gp;
  into.total += add.total;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string_view to_string(Regime r) { return kRegimeNames[static_cast<std::size_t>(r)]; }

std::optional<Regime> parse_regime(std::string_view s) {
  for (std::size_t i = 0; i < kRegimeNames.size(); ++i) {
    if (kRegimeNames[i] == s) return static_cast<Regime>(i);
  }
  return std::nullopt;
}

std::string_view to_string(CollapseVerdict v) { return kVerdictNames[static_cast<std::size_t>(v)]; }

void TrainConfig::validate() const {
  if (!(lr_gen > 0)) throw std::invalid_argument("lr_gen must be > 0");
  if (!(lr_dis > 0)) throw std::invalid_argument("lr_dis must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (patches_per_image < 1) throw std::invalid_argument("patches_per_image must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (f_save < 1) throw std::invalid_argument("f_save must be >= 1");
  if (n_critic < 1) throw std::invalid_argument("n_critic must be >= 1");
  if (patch_size < 1) throw std::invalid_argument("patch_size must be >= 1");
  if (crop_size < patch_size) throw std::invalid_argument("crop_size must be >= patch_size");
  const int64_t per_crop = (crop_size / patch_size) * (crop_size / patch_size);
  if (patches_per_image > std::max<int64_t>(per_crop, 1)) {
    throw std::invalid_argument("patches_per_image exceeds the patches available in a crop");
  }
  if (!(beta1 >= 0 && beta1 < 1)) throw std::invalid_argument("beta1 must lie in [0,1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw std::invalid_argument("beta2 must lie in [0,1)");
  if (!(grad_ema_decay >= 0 && grad_ema_decay < 1)) throw std::invalid_argument("grad_ema_decay must lie in [0,1)");
  if (!(collapse_var_threshold >= 0)) throw std::invalid_argument("collapse_var_threshold must be >= 0");
  if (!(collapse_std_threshold >= 0)) throw std::invalid_argument("collapse_std_threshold must be >= 0");
  if (collapse_window < 1) throw std::invalid_argument("collapse_window must be >= 1");
  penalty.validate();
}

std::string EpochReport::to_json_line() const {
  json j = json::object();
  j["epoch"] = epoch;
  j["generator"] = {{"adv", finite_or_null(generator.adv)},
                    {"l1", finite_or_null(generator.l1)},
                    {"total", finite_or_null(generator.total)}};
  j["discriminator"] = {{"real_term", finite_or_null(discriminator.real_term)},
                        {"fake_term", finite_or_null(discriminator.fake_term)},
                        {"diff", finite_or_null(discriminator.diff)},
                        {"gp", finite_or_null(discriminator.gp)},
                        {"total", finite_or_null(discriminator.total)}};
  j["gp_mean"] = finite_or_null(gp_mean);
  j["grad_variance"] = finite_or_null(grad_variance);
  j["output_std"] = finite_or_null(output_std);
  j["val_ssim"] = finite_or_null(val_ssim);
  j["val_psnr"] = finite_or_null(val_psnr);  // null when the PSNR is infinite
  j["val_mse"] = finite_or_null(val_mse);
  j["collapse"] = to_string(verdict);
  return j.dump();
}

TrainingState TrainingState::create(const GeneratorConfig& gen_cfg,
                                    const DiscriminatorConfig& dis_cfg, const TrainConfig& cfg) {
  TrainingState s;
  s.gen_cfg = gen_cfg;
  s.dis_cfg = dis_cfg;
  s.gen = build_generator(gen_cfg, mix_seed(cfg.seed, 1));
  s.dis = build_discriminator(dis_cfg, mix_seed(cfg.seed, 2));
  s.opt_gen = std::make_unique<torch::optim::Adam>(
      s.gen->parameters(), torch::optim::AdamOptions(cfg.lr_gen).betas({cfg.beta1, cfg.beta2}));
  s.opt_dis = std::make_unique<torch::optim::Adam>(
      s.dis->parameters(), torch::optim::AdamOptions(cfg.lr_dis).betas({cfg.beta1, cfg.beta2}));
  return s;
}

std::vector<ImagePair> load_pairs(const DatasetManifest& manifest, Split split) {
  std::vector<ImagePair> pairs;
  for (const auto& e : manifest.entries) {
    if (e.split != split) continue;
    ImagePair p{e.noisy_path.stem().string(), read_binary(manifest.resolve(e.clean_path)),
                read_binary(manifest.resolve(e.noisy_path))};
    if (p.clean.height() != p.noisy.height() || p.clean.width() != p.noisy.width()) {
      throw TrainingError("pair " + p.name + ": clean and noisy sizes differ");
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

torch::Tensor to_tensor(std::span<const BinaryImage> images) {
  if (images.empty()) throw std::invalid_argument("to_tensor: no images");
  const int h = images[0].height();
  const int w = images[0].width();
  auto out = torch::empty({static_cast<int64_t>(images.size()), 1, h, w}, torch::kFloat32);
  auto* dst = out.data_ptr<float>();
  for (const auto& img : images) {
    if (img.height() != h || img.width() != w) throw std::invalid_argument("to_tensor: mixed sizes");
    for (auto v : img.pixels()) *dst++ = static_cast<float>(v);
  }
  return out;
}

Batch make_batch(std::span<const ImagePair> pairs, std::span<const std::size_t> indices,
                 const TrainConfig& cfg, uint64_t seed) {
  if (pairs.empty() || indices.empty()) throw TrainingError("make_batch: nothing to sample");
  const int p = static_cast<int>(cfg.patch_size);
  std::vector<BinaryImage> clean_patches;
  std::vector<BinaryImage> noisy_patches;
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const auto& pair = pairs[indices[j]];
    const uint64_t s = mix_seed(seed, j);
    // Same seed for both members gives the same crop origin and rotation.
    const auto clean_crop = random_crop(pair.clean, cfg.crop_size, mix_seed(s, 0));
    const auto noisy_crop = random_crop(pair.noisy, cfg.crop_size, mix_seed(s, 0));
    auto [clean_tiles, grid] = split_into_patches(clean_crop, p);
    auto noisy_tiles = split_into_patches(noisy_crop, p).first;

    std::vector<std::size_t> order(clean_tiles.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 pick_rng(mix_seed(s, 1));
    std::ranges::shuffle(order, pick_rng);
    for (int k = 0; k < cfg.patches_per_image; ++k) {
      const auto t = order[static_cast<std::size_t>(k) % order.size()];
      const uint64_t rot_seed = mix_seed(s, 2 + static_cast<uint64_t>(k));
      clean_patches.push_back(random_rotate90(clean_tiles[t], rot_seed).first);
      noisy_patches.push_back(random_rotate90(noisy_tiles[t], rot_seed).first);
    }
  }
  return {to_tensor(clean_patches), to_tensor(noisy_patches)};
}

Batch preprocess_batch(std::span<const ImagePair> pairs, const TrainConfig& cfg, uint64_t seed) {
  if (pairs.empty()) throw TrainingError("preprocess_batch: empty split");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
  std::vector<std::size_t> indices(static_cast<std::size_t>(cfg.batch_size));
  for (auto& i : indices) i = pick(rng);
  return make_batch(pairs, indices, cfg, mix_seed(seed, 1));
}

Batch preprocess_batch(const DatasetManifest& manifest, const TrainConfig& cfg, uint64_t seed) {
  const auto pairs = load_pairs(manifest, Split::train);
  return preprocess_batch(pairs, cfg, seed);
}

DiscriminatorBreakdown train_step_discriminator(Generator& gen, Discriminator& dis,
                                                torch::optim::Adam& opt, const Batch& batch,
                                                const TrainConfig& cfg, uint64_t seed) {
  torch::Tensor denoised;
  {
    torch::NoGradGuard no_grad;
    denoised = gen->forward(batch.noisy);
  }
  return discriminator_update(dis, opt, batch, denoised, cfg, seed);
}

GeneratorStep train_step_generator(Generator& gen, Discriminator& dis, torch::optim::Adam& opt,
                                   const Batch& batch, const TrainConfig& cfg) {
  const auto denoised = gen->forward(batch.noisy);
  return generator_update(gen, dis, opt, batch, denoised, cfg);
}

BinaryImage denoise_document(Generator& gen, const BinaryImage& noisy, int max_batch) {
  const int p = static_cast<int>(gen->config().patch_size);
  auto [patches, grid] = split_into_patches(noisy, p);

  const bool was_training = gen->is_training();
  gen->eval();
  torch::NoGradGuard no_grad;
  std::vector<BinaryImage> outputs;
  outputs.reserve(patches.size());
  const auto step = static_cast<std::size_t>(std::max(1, max_batch));
  for (std::size_t begin = 0; begin < patches.size(); begin += step) {
    const std::size_t end = std::min(patches.size(), begin + step);
    const auto input = to_tensor(std::span(patches).subspan(begin, end - begin));
    const auto output = (gen->forward(input) >= 0.5).to(torch::kUInt8).contiguous();
    const auto* px = output.data_ptr<std::uint8_t>();
    const auto per_patch = static_cast<std::size_t>(p) * p;
    for (std::size_t i = 0; i < end - begin; ++i) {
      outputs.emplace_back(p, p, std::vector<std::uint8_t>(px + i * per_patch, px + (i + 1) * per_patch));
    }
  }
  gen->train(was_training);
  return reassemble_patches(outputs, grid);
}

namespace {

ValidationScores average(const std::vector<QualityScores>& scores) {
  ValidationScores mean;
  for (const auto& s : scores) {
    mean.ssim += s.ssim;
    mean.psnr += s.psnr;
    mean.mse += s.mse;
  }
  const auto n = static_cast<double>(scores.size());
  mean.ssim /= n;
  mean.psnr /= n;
  mean.mse /= n;
  return mean;
}

}  // namespace

ValidationScores validate_epoch(Generator& gen, std::span<const ImagePair> pairs,
                                const MetricConfig& metric_cfg) {
  if (pairs.empty()) throw TrainingError("validate_epoch: validation split is empty");
  std::vector<QualityScores> scores;
  for (const auto& pair : pairs) {
    scores.push_back(score(pair.clean, denoise_document(gen, pair.noisy), metric_cfg));
  }
  return average(scores);
}

ValidationScores noisy_baseline(std::span<const ImagePair> pairs, const MetricConfig& metric_cfg) {
  if (pairs.empty()) throw TrainingError("noisy_baseline: no pairs");
  std::vector<QualityScores> scores;
  for (const auto& pair : pairs) scores.push_back(score(pair.clean, pair.noisy, metric_cfg));
  return average(scores);
}

CollapseVerdict detect_mode_collapse(std::span<const EpochReport> reports,
                                     const CollapseThresholds& thresholds) {
  if (reports.empty()) throw std::invalid_argument("detect_mode_collapse: no reports");
  auto low_var = [&](const EpochReport& r) { return r.grad_variance < thresholds.var_threshold; };
  auto low_std = [&](const EpochReport& r) { return r.output_std < thresholds.std_threshold; };

  const auto window = static_cast<std::size_t>(std::max(1, thresholds.window));
  if (reports.size() >= window) {
    const auto tail = reports.last(window);
    if (std::ranges::all_of(tail, [&](const auto& r) { return low_var(r) && low_std(r); })) {
      return CollapseVerdict::collapsed;
    }
  }
  const auto& latest = reports.back();
  return low_var(latest) || low_std(latest) ? CollapseVerdict::warning : CollapseVerdict::ok;
}

void RunConfig::resolve() {
  generator.patch_size = train.patch_size;
  discriminator.patch_size = train.patch_size;
  train.validate();
  generator.validate();
  discriminator.validate();
  metrics.validate();
}

TrainResult train(const DatasetManifest& manifest, const RunConfig& cfg_in,
                  const EpochCallback& on_epoch) {
  RunConfig cfg = cfg_in;
  cfg.resolve();
  const TrainConfig& tc = cfg.train;

  const auto train_pairs = load_pairs(manifest, Split::train);
  const auto val_pairs = load_pairs(manifest, Split::val);
  if (train_pairs.empty()) throw TrainingError("training split is empty");
  if (val_pairs.empty()) throw TrainingError("validation split is empty");

  TrainingState state = cfg.resume_from ? load_checkpoint(*cfg.resume_from)
                                        : TrainingState::create(cfg.generator, cfg.discriminator, tc);
  if (cfg.resume_from) {
    state.gen_cfg.patch_size = tc.patch_size;
    if (state.gen_cfg.patch_size != cfg.generator.patch_size) {
      throw TrainingError("resume checkpoint patch size differs from the config");
    }
  }

  const fs::path out = cfg.output_dir;
  const fs::path ckpt_dir = out / "checkpoints";
  fs::create_directories(ckpt_dir);
  {
    json run = to_json(cfg);
    std::ofstream(out / "run.json") << run.dump(2) << '\n';
  }
  const auto mode = cfg.resume_from ? std::ios::app : std::ios::trunc;
  std::ofstream metrics_out(out / "metrics.jsonl", std::ios::binary | mode);
  std::ofstream timing_out(out / "timing.jsonl", std::ios::binary | mode);
  if (!metrics_out || !timing_out) throw TrainingError("cannot open metrics streams in " + out.string());

  const CollapseThresholds thresholds{tc.collapse_var_threshold, tc.collapse_std_threshold,
                                      tc.collapse_window};
  TrainResult result;
  fs::path last_checkpoint;

  std::vector<std::size_t> order(train_pairs.size());
  for (int epoch = state.epoch + 1; epoch <= tc.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const uint64_t epoch_seed = mix_seed(tc.seed, 0x1000 + static_cast<uint64_t>(epoch));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(epoch_seed);
    std::ranges::shuffle(order, shuffle_rng);

    EpochReport report;
    report.epoch = epoch;
    double output_std_sum = 0.0;
    int gen_steps = 0;
    int dis_steps = 0;

    const auto batch_size = static_cast<std::size_t>(tc.batch_size);
    for (std::size_t begin = 0, b = 0; begin < order.size(); begin += batch_size, ++b) {
      const std::size_t end = std::min(order.size(), begin + batch_size);
      const uint64_t batch_seed = mix_seed(epoch_seed, b);
      const Batch batch = make_batch(train_pairs, std::span(order).subspan(begin, end - begin), tc, batch_seed);

      state.gen->train();
      state.dis->train();
      try {
        const auto denoised = state.gen->forward(batch.noisy);
        for (int c = 0; c < tc.n_critic; ++c) {
          accumulate(report.discriminator,
                     discriminator_update(state.dis, *state.opt_dis, batch, denoised, tc,
                                          mix_seed(batch_seed, 0x100 + static_cast<uint64_t>(c))));
          ++dis_steps;
        }
        const auto step = generator_update(state.gen, state.dis, *state.opt_gen, batch, denoised, tc);
        accumulate(report.generator, step.loss);
        output_std_sum += step.output_std;
        ++gen_steps;
        state.grad_variance_ema = std::isnan(state.grad_variance_ema)
                                      ? step.grad_variance
                                      : tc.grad_ema_decay * state.grad_variance_ema +
                                            (1.0 - tc.grad_ema_decay) * step.grad_variance;
      } catch (const NonFiniteLossError& err) {
        throw NonFiniteLossError(std::string(err.what()) + " at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(b) + "; last checkpoint: " +
                                 (last_checkpoint.empty() ? std::string("none") : last_checkpoint.string()));
      }
    }

    auto scale = [](auto& breakdown, int n, auto... members) { ((breakdown.*members /= n), ...); };
    scale(report.generator, gen_steps, &GeneratorBreakdown::adv, &GeneratorBreakdown::l1,
          &GeneratorBreakdown::total);
    scale(report.discriminator, dis_steps, &DiscriminatorBreakdown::real_term,
          &DiscriminatorBreakdown::fake_term, &DiscriminatorBreakdown::diff,
          &DiscriminatorBreakdown::gp, &DiscriminatorBreakdown::total);
    report.gp_mean = report.discriminator.gp;
    report.grad_variance = state.grad_variance_ema;
    report.output_std = output_std_sum / gen_steps;

    const auto val = validate_epoch(state.gen, val_pairs, cfg.metrics);
    report.val_ssim = val.ssim;
    report.val_psnr = val.psnr;
    report.val_mse = val.mse;

    result.reports.push_back(report);
    report.verdict = detect_mode_collapse(result.reports, thresholds);
    result.reports.back().verdict = report.verdict;
    report.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.reports.back().wall_time = report.wall_time;

    state.epoch = epoch;
    metrics_out << report.to_json_line() << '\n';
    metrics_out.flush();
    timing_out << json{{"epoch", epoch}, {"wall_time", report.wall_time}}.dump() << '\n';
    timing_out.flush();

    if (epoch % tc.f_save == 0) {
      last_checkpoint = ckpt_dir / ("epoch_" + std::to_string(epoch));
      save_checkpoint(state, last_checkpoint);
    }
    if (on_epoch) on_epoch(report);
  }

  result.final_checkpoint = ckpt_dir / "final";
  save_checkpoint(state, result.final_checkpoint);
  if (!result.reports.empty()) result.final_verdict = result.reports.back().verdict;
  return result;
}

}  // namespace docdenoise
