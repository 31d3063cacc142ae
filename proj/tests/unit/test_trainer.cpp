#include <gtest/gtest.h>

#include <torch/torch.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "docdenoise/checkpoint.hpp"
#include "docdenoise/trainer.hpp"
#include "synthetic.hpp"

using namespace docdenoise;
namespace fs = std::filesystem;
namespace dt = docdenoise::testing;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double checksum(const std::vector<torch::Tensor>& params) {
  double s = 0;
  for (const auto& p : params) s += p.detach().to(torch::kFloat64).abs().sum().item<double>() + p.numel();
  return s;
}

std::vector<torch::Tensor> snapshot(const std::vector<torch::Tensor>& params) {
  std::vector<torch::Tensor> out;
  for (const auto& p : params) out.push_back(p.detach().clone());
  return out;
}

bool unchanged(const std::vector<torch::Tensor>& before, const std::vector<torch::Tensor>& after) {
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (!torch::equal(before[i], after[i].detach())) return false;
  }
  return true;
}

// Tiny networks and a 48x48 toy dataset keep every run well under a second.
RunConfig tiny_config(const fs::path& manifest, const fs::path& out) {
  RunConfig cfg;
  cfg.train.patch_size = 16;
  cfg.train.crop_size = 32;
  cfg.train.batch_size = 2;
  cfg.train.patches_per_image = 2;
  cfg.train.epochs = 2;
  cfg.train.f_save = 1;
  cfg.train.seed = 7;
  cfg.generator.base_channels = 4;
  cfg.generator.num_res_blocks = 1;
  cfg.generator.down_steps = 1;
  cfg.discriminator.base_channels = 4;
  cfg.discriminator.max_channels = 8;
  cfg.discriminator.down_steps = 1;
  cfg.manifest = manifest;
  cfg.output_dir = out;
  cfg.resolve();
  return cfg;
}

class TrainerFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = dt::scratch_dir("trainer");
    dt::write_synthetic_pages(root_ / "clean", 10, 48, 48, 5);
    DatasetOptions opt;
    opt.seed = 5;
    manifest_ = build_paired_dataset(root_ / "clean", root_ / "data", opt);
  }

  static fs::path root_;
  static DatasetManifest manifest_;
};

fs::path TrainerFixture::root_;
DatasetManifest TrainerFixture::manifest_;

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  auto expect_bad = [](auto mutate, const std::string& key) {
    TrainConfig c;
    mutate(c);
    try {
      c.validate();
      ADD_FAILURE() << "accepted bad " << key;
    } catch (const std::invalid_argument& e) {
      EXPECT_EQ(std::string(e.what()).rfind(key, 0), 0u) << e.what();
    }
  };
  expect_bad([](TrainConfig& c) { c.lr_gen = 0; }, "lr_gen");
  expect_bad([](TrainConfig& c) { c.beta1 = 1.0; }, "beta1");
  expect_bad([](TrainConfig& c) { c.batch_size = 0; }, "batch_size");
  expect_bad([](TrainConfig& c) { c.epochs = 0; }, "epochs");
  expect_bad([](TrainConfig& c) { c.n_critic = 0; }, "n_critic");
  expect_bad([](TrainConfig& c) { c.f_save = 0; }, "f_save");
}

TEST(TrainConfig, Names) {
  EXPECT_EQ(parse_regime("hybrid"), Regime::hybrid);
  EXPECT_EQ(parse_regime("classical"), Regime::classical);
  EXPECT_FALSE(parse_regime("wgan").has_value());
  EXPECT_EQ(to_string(Regime::classical), "classical");
  EXPECT_EQ(to_string(CollapseVerdict::collapsed), "collapsed");
}

TEST(EpochReport, JsonLineNullsNonFinite) {
  EpochReport r;
  r.epoch = 3;
  r.grad_variance = std::numeric_limits<double>::quiet_NaN();
  r.gp_mean = std::numeric_limits<double>::infinity();
  r.wall_time = 12.5;
  const auto line = r.to_json_line();
  EXPECT_NE(line.find("\"grad_variance\":null"), std::string::npos) << line;
  EXPECT_NE(line.find("\"gp_mean\":null"), std::string::npos) << line;
  EXPECT_EQ(line.find("wall_time"), std::string::npos);
  EXPECT_EQ(line.find('\n'), std::string::npos);
}

TEST(Collapse, Verdicts) {
  const CollapseThresholds th{1e-4, 1e-3, 3};
  EXPECT_THROW(detect_mode_collapse({}, th), std::invalid_argument);
  EpochReport healthy;
  healthy.grad_variance = 1.0;
  healthy.output_std = 0.4;
  EpochReport dead;
  EpochReport half = healthy;
  half.output_std = 0;
  std::vector<EpochReport> r = {healthy};
  EXPECT_EQ(detect_mode_collapse(r, th), CollapseVerdict::ok);
  r = {healthy, half};
  EXPECT_EQ(detect_mode_collapse(r, th), CollapseVerdict::warning);
  r = {healthy, dead, dead};
  EXPECT_EQ(detect_mode_collapse(r, th), CollapseVerdict::warning);
  r = {dead, dead, dead};
  EXPECT_EQ(detect_mode_collapse(r, th), CollapseVerdict::collapsed);
  r = {dead, dead, dead, healthy};
  EXPECT_EQ(detect_mode_collapse(r, th), CollapseVerdict::ok);
}

TEST(ToTensor, ValuesAndErrors) {
  const auto a = dt::random_binary(5, 6, 1);
  const auto t = to_tensor(std::span(&a, 1));
  EXPECT_EQ(t.sizes(), (std::vector<int64_t>{1, 1, 5, 6}));
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 6; ++x) EXPECT_EQ(t[0][0][y][x].item<float>(), a(y, x));
  }
  EXPECT_THROW(to_tensor({}), std::invalid_argument);
}

TEST_F(TrainerFixture, MakeBatchKeepsPairsAligned) {
  auto pairs = load_pairs(manifest_, Split::train);
  ASSERT_FALSE(pairs.empty());
  // Replace noisy with the clean page: any misalignment would show up as a difference.
  for (auto& p : pairs) p.noisy = p.clean;
  const auto cfg = tiny_config(manifest_.root / kManifestFileName, root_ / "unused").train;
  const std::vector<std::size_t> idx = {0, 1, 2};
  const auto batch = make_batch(pairs, idx, cfg, 11);
  EXPECT_EQ(batch.clean.sizes(), (std::vector<int64_t>{6, 1, 16, 16}));
  EXPECT_TRUE(torch::equal(batch.clean, batch.noisy));
  const auto again = make_batch(pairs, idx, cfg, 11);
  EXPECT_TRUE(torch::equal(batch.clean, again.clean));
  const auto other = make_batch(pairs, idx, cfg, 12);
  EXPECT_FALSE(torch::equal(batch.clean, other.clean));
  EXPECT_THROW(make_batch(pairs, {}, cfg, 1), TrainingError);
  EXPECT_THROW(preprocess_batch(std::span<const ImagePair>(), cfg, 1), TrainingError);
}

TEST_F(TrainerFixture, StepsOnlyMoveTheirOwnNetwork) {
  const auto cfg = tiny_config(manifest_.root / kManifestFileName, root_ / "unused");
  for (const auto regime : {Regime::classical, Regime::hybrid}) {
    auto tc = cfg.train;
    tc.regime = regime;
    auto s = TrainingState::create(cfg.generator, cfg.discriminator, tc);
    const auto batch = preprocess_batch(manifest_, tc, 3);

    auto gen_before = snapshot(s.gen->parameters());
    auto dis_before = snapshot(s.dis->parameters());
    train_step_discriminator(s.gen, s.dis, *s.opt_dis, batch, tc, 4);
    EXPECT_TRUE(unchanged(gen_before, s.gen->parameters()));
    EXPECT_FALSE(unchanged(dis_before, s.dis->parameters()));

    dis_before = snapshot(s.dis->parameters());
    const double dis_sum = checksum(s.dis->parameters());
    const auto step = train_step_generator(s.gen, s.dis, *s.opt_gen, batch, tc);
    EXPECT_TRUE(unchanged(dis_before, s.dis->parameters()));
    EXPECT_EQ(dis_sum, checksum(s.dis->parameters()));
    EXPECT_FALSE(unchanged(gen_before, s.gen->parameters()));
    EXPECT_GT(step.grad_variance, 0.0);
    EXPECT_GT(step.output_std, 0.0);
    EXPECT_TRUE(std::isfinite(step.loss.total));
  }
}

TEST_F(TrainerFixture, ConstantStubDescendsTowardTarget) {
  auto cfg = tiny_config(manifest_.root / kManifestFileName, root_ / "unused");
  cfg.generator.kind = GeneratorKind::constant_stub;
  cfg.generator.stub_level = 0.0;  // pages are mostly white (1), so L1 pulls the level up
  cfg.train.lr_gen = 0.01;
  auto s = TrainingState::create(cfg.generator, cfg.discriminator, cfg.train);
  const auto batch = preprocess_batch(manifest_, cfg.train, 8);
  const double before = s.gen->named_parameters()["level"].item<double>();
  double last_l1 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 5; ++i) {
    const auto step = train_step_generator(s.gen, s.dis, *s.opt_gen, batch, cfg.train);
    EXPECT_LT(step.loss.l1, last_l1);
    last_l1 = step.loss.l1;
    EXPECT_EQ(step.grad_variance, 0.0);  // a single parameter
    EXPECT_LT(step.output_std, 1e-6);  // float rounding only
  }
  EXPECT_GT(s.gen->named_parameters()["level"].item<double>(), before);
}

TEST_F(TrainerFixture, NonFiniteLossIsReported) {
  auto cfg = tiny_config(manifest_.root / kManifestFileName, root_ / "nonfinite");
  cfg.generator.kind = GeneratorKind::constant_stub;
  cfg.generator.stub_level = std::numeric_limits<double>::quiet_NaN();
  auto s = TrainingState::create(cfg.generator, cfg.discriminator, cfg.train);
  const auto batch = preprocess_batch(manifest_, cfg.train, 8);
  const auto dis_before = snapshot(s.dis->parameters());
  EXPECT_THROW(train_step_discriminator(s.gen, s.dis, *s.opt_dis, batch, cfg.train, 1), NonFiniteLossError);
  EXPECT_TRUE(unchanged(dis_before, s.dis->parameters()));
  try {
    train(manifest_, cfg);
    ADD_FAILURE() << "expected NonFiniteLossError";
  } catch (const NonFiniteLossError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 1, batch 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("last checkpoint: none"), std::string::npos) << msg;
  }
}

TEST_F(TrainerFixture, ValidationWithStubs) {
  const auto val = load_pairs(manifest_, Split::val);
  ASSERT_FALSE(val.empty());
  GeneratorConfig gc;
  gc.patch_size = 16;
  gc.kind = GeneratorKind::identity_stub;
  auto identity = build_generator(gc, 0);
  const auto scores = validate_epoch(identity, val);
  const auto baseline = noisy_baseline(val);
  EXPECT_DOUBLE_EQ(scores.ssim, baseline.ssim);
  EXPECT_DOUBLE_EQ(scores.mse, baseline.mse);

  // Denoising a clean page with the identity stub is exact and keeps the size.
  const auto page = dt::synthetic_page(37, 29, 2);
  const auto out = denoise_document(identity, page);
  EXPECT_EQ(out.height(), 37);
  EXPECT_EQ(out.width(), 29);
  EXPECT_EQ(out, page);
  EXPECT_TRUE(identity->is_training());

  gc.kind = GeneratorKind::constant_stub;
  gc.stub_level = 1.0;
  auto white = build_generator(gc, 0);
  std::vector<ImagePair> clean_pairs;
  for (const auto& p : val) clean_pairs.push_back({p.name, p.clean, p.clean});
  EXPECT_DOUBLE_EQ(validate_epoch(identity, clean_pairs).ssim, 1.0);
  EXPECT_LT(validate_epoch(white, clean_pairs).ssim, 1.0);
  EXPECT_THROW(validate_epoch(white, {}), TrainingError);
}

TEST_F(TrainerFixture, ScheduleWritesCheckpointsAndMetrics) {
  const auto out = dt::scratch_dir("trainer_schedule");
  auto cfg = tiny_config(manifest_.root / kManifestFileName, out);
  std::vector<int> seen;
  const auto result = train(manifest_, cfg, [&](const EpochReport& r) { seen.push_back(r.epoch); });
  EXPECT_EQ(seen, (std::vector<int>{1, 2}));
  EXPECT_TRUE(fs::exists(out / "checkpoints" / "epoch_1"));
  EXPECT_TRUE(fs::exists(out / "checkpoints" / "epoch_2"));
  EXPECT_TRUE(fs::exists(out / "checkpoints" / "final"));
  EXPECT_TRUE(fs::exists(out / "run.json"));
  EXPECT_TRUE(fs::exists(out / "timing.jsonl"));
  EXPECT_EQ(result.final_checkpoint, out / "checkpoints" / "final");
  for (const auto& r : result.reports) {
    EXPECT_TRUE(std::isfinite(r.gp_mean));
    EXPECT_GE(r.gp_mean, 0.0);
    EXPECT_GT(r.val_ssim, 0.0);
  }

  // A second identical run logs identical metrics bytes.
  const auto out2 = dt::scratch_dir("trainer_schedule_repeat");
  cfg.output_dir = out2;
  train(manifest_, cfg);
  const auto metrics = slurp(out / "metrics.jsonl");
  EXPECT_FALSE(metrics.empty());
  EXPECT_EQ(metrics, slurp(out2 / "metrics.jsonl"));
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 2);

  // f_save larger than the run only leaves the final checkpoint.
  const auto out3 = dt::scratch_dir("trainer_schedule_sparse");
  cfg.output_dir = out3;
  cfg.train.f_save = 5;
  train(manifest_, cfg);
  EXPECT_FALSE(fs::exists(out3 / "checkpoints" / "epoch_1"));
  EXPECT_TRUE(fs::exists(out3 / "checkpoints" / "final"));
}

TEST_F(TrainerFixture, ResumeContinuesNumbering) {
  const auto out = dt::scratch_dir("trainer_resume");
  auto cfg = tiny_config(manifest_.root / kManifestFileName, out);
  cfg.train.epochs = 1;
  train(manifest_, cfg);
  cfg.train.epochs = 3;
  cfg.resume_from = out / "checkpoints" / "final";
  std::vector<int> seen;
  train(manifest_, cfg, [&](const EpochReport& r) { seen.push_back(r.epoch); });
  EXPECT_EQ(seen, (std::vector<int>{2, 3}));
  EXPECT_TRUE(fs::exists(out / "checkpoints" / "epoch_3"));
  std::ifstream in(out / "metrics.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 3);
  EXPECT_EQ(load_checkpoint(out / "checkpoints" / "final").epoch, 3);
}

TEST_F(TrainerFixture, ConstantStubCollapsesIdentityDoesNot) {
  auto cfg = tiny_config(manifest_.root / kManifestFileName, dt::scratch_dir("trainer_collapse"));
  cfg.train.epochs = 3;
  cfg.train.f_save = 10;
  cfg.generator.kind = GeneratorKind::constant_stub;
  const auto collapsed = train(manifest_, cfg);
  EXPECT_EQ(collapsed.final_verdict, CollapseVerdict::collapsed);

  cfg.output_dir = dt::scratch_dir("trainer_identity");
  cfg.generator.kind = GeneratorKind::identity_stub;
  const auto identity = train(manifest_, cfg);
  EXPECT_NE(identity.final_verdict, CollapseVerdict::collapsed);
  EXPECT_GT(identity.reports.back().output_std, cfg.train.collapse_std_threshold);
}

TEST_F(TrainerFixture, EmptySplitsAreRejected) {
  auto cfg = tiny_config(manifest_.root / kManifestFileName, dt::scratch_dir("trainer_empty"));
  DatasetManifest only_train = manifest_;
  std::erase_if(only_train.entries, [](const ManifestEntry& e) { return e.split != Split::train; });
  EXPECT_THROW(train(only_train, cfg), TrainingError);
  DatasetManifest none = manifest_;
  none.entries.clear();
  EXPECT_THROW(train(none, cfg), TrainingError);
}
