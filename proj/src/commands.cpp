#include "docdenoise/commands.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "docdenoise/checkpoint.hpp"
#include "docdenoise/config.hpp"
#include "docdenoise/image_io.hpp"
#include "docdenoise/plot.hpp"

namespace docdenoise {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json scores_json(const QualityScores& s) {
  return {{"ssim", number_or_null(s.ssim)}, {"psnr", number_or_null(s.psnr)}, {"mse", number_or_null(s.mse)}};
}

QualityScores mean_scores(const std::vector<QualityScores>& all) {
  QualityScores m{0.0, 0.0, 0.0};
  for (const auto& s : all) {
    m.ssim += s.ssim;
    m.psnr += s.psnr;
    m.mse += s.mse;
  }
  const auto n = static_cast<double>(all.size());
  m.ssim /= n;
  m.psnr /= n;
  m.mse /= n;
  return m;
}

std::vector<fs::path> list_images(const fs::path& input) {
  if (!fs::is_directory(input)) return {input};
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(input)) {
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  }
  std::ranges::sort(files);
  return files;
}

std::optional<MetricConfig> metric_config(const GlobalOptions& global) {
  if (!global.config) return std::nullopt;
  return load_run_config(*global.config).metrics;
}

}  // namespace

fs::path denoised_name(const fs::path& input) {
  const auto ext = input.extension().string();
  if (ext == ".png" || ext == ".pgm") return input.filename();
  return input.stem().string() + ".png";
}

RunConfig resolve_train_config(const GlobalOptions& global, const TrainArgs& args) {
  json doc = json::object();
  fs::path base;
  if (global.config) {
    std::ifstream in(*global.config);
    if (!in) throw ConfigError("<file>", "cannot open " + global.config->string());
    try {
      doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
      throw ConfigError("<file>", std::string("malformed JSON: ") + e.what());
    }
    base = global.config->parent_path();
  }
  // Flags are absolute or relative to the working directory, so they are
  // applied after the file's paths have been resolved.
  if (global.seed) doc["seed"] = *global.seed;
  if (args.regime) doc["regime"] = to_string(*args.regime);
  if (args.epochs) doc["epochs"] = *args.epochs;
  RunConfig cfg = parse_run_config(doc, base);
  if (args.manifest) cfg.manifest = *args.manifest;
  if (args.output_dir) cfg.output_dir = *args.output_dir;
  if (args.resume_from) cfg.resume_from = *args.resume_from;
  if (cfg.manifest.empty()) throw ConfigError("manifest", "no dataset manifest given");
  if (cfg.output_dir.empty()) throw ConfigError("output_dir", "no output directory given");
  return cfg;
}

int cmd_dataset(const GlobalOptions& global, const DatasetArgs& args, std::ostream& out, std::ostream& err) {
  try {
    if (!fs::is_directory(args.clean_dir)) {
      err << "dataset: clean directory not found: " << args.clean_dir.string() << '\n';
      return kExitFailure;
    }
    DatasetOptions options;
    options.variants_per_clean = args.variants;
    options.split_fractions = args.split_fractions;
    options.seed = global.seed.value_or(0);
    const auto manifest = build_paired_dataset(args.clean_dir, args.out_dir, options);
    out << manifest.entries.size() << " pairs written (train " << manifest.count(Split::train) << ", val "
        << manifest.count(Split::val) << ", test " << manifest.count(Split::test) << ") to "
        << (args.out_dir / kManifestFileName).string() << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    err << "dataset: " << e.what() << '\n';
    return kExitFailure;
  }
}

int cmd_train(const GlobalOptions& global, const TrainArgs& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  try {
    cfg = resolve_train_config(global, args);
  } catch (const std::exception& e) {
    err << "train: " << e.what() << '\n';
    return kExitFailure;
  }
  try {
    const auto manifest = read_manifest(cfg.manifest);
    const auto result = train(manifest, cfg, [&](const EpochReport& r) {
      out << "epoch " << r.epoch << " g_total " << r.generator.total << " d_total " << r.discriminator.total
          << " gp " << r.gp_mean << " val_ssim " << r.val_ssim << " collapse " << to_string(r.verdict) << '\n';
    });
    const auto baseline = noisy_baseline(load_pairs(manifest, Split::val), cfg.metrics);
    out << "noisy baseline val_ssim " << baseline.ssim << '\n';
    out << "final checkpoint " << result.final_checkpoint.string() << '\n';
    if (result.final_verdict == CollapseVerdict::collapsed) {
      err << "train: mode collapse detected\n";
      return kExitCollapsed;
    }
    return kExitOk;
  } catch (const std::exception& e) {
    err << "train: " << e.what() << '\n';
    return kExitFailure;
  }
}

int cmd_denoise(const GlobalOptions&, const DenoiseArgs& args, std::ostream& out, std::ostream& err) {
  TrainingState state;
  try {
    state = load_checkpoint(args.checkpoint);
  } catch (const std::exception& e) {
    err << "denoise: " << e.what() << '\n';
    return kExitFailure;
  }
  if (!fs::exists(args.input)) {
    err << "denoise: input not found: " << args.input.string() << '\n';
    return kExitFailure;
  }
  fs::create_directories(args.out_dir);
  int failures = 0;
  int written = 0;
  for (const auto& file : list_images(args.input)) {
    try {
      const auto noisy = read_binary(file);
      const auto clean = denoise_document(state.gen, noisy);
      write_binary(args.out_dir / denoised_name(file), clean);
      ++written;
    } catch (const std::exception& e) {
      err << "denoise: " << file.string() << ": " << e.what() << '\n';
      ++failures;
    }
  }
  out << written << " images denoised, " << failures << " failed\n";
  return failures == 0 && written > 0 ? kExitOk : kExitFailure;
}

int cmd_eval(const GlobalOptions& global, const EvalArgs& args, std::ostream& out, std::ostream& err) {
  try {
    const auto metric_cfg = metric_config(global).value_or(MetricConfig{});
    const auto manifest = read_manifest(args.manifest);
    std::ostringstream lines;
    std::vector<QualityScores> scores;
    std::vector<QualityScores> baseline;
    json missing = json::array();
    for (const auto& e : manifest.select(args.split)) {
      const auto denoised_path = args.denoised_dir / denoised_name(e.noisy_path.filename());
      if (!fs::exists(denoised_path)) {
        missing.push_back(denoised_path.string());
        continue;
      }
      const auto clean = read_binary(manifest.resolve(e.clean_path));
      const auto noisy = read_binary(manifest.resolve(e.noisy_path));
      const auto denoised = read_binary(denoised_path);
      scores.push_back(score(clean, denoised, metric_cfg));
      baseline.push_back(score(clean, noisy, metric_cfg));
      json line = scores_json(scores.back());
      line["image"] = denoised_path.filename().string();
      lines << line.dump() << '\n';
    }
    json summary = {{"count", scores.size()}, {"missing", missing}};
    if (!scores.empty()) {
      summary["mean"] = scores_json(mean_scores(scores));
      summary["noisy_baseline"] = scores_json(mean_scores(baseline));
    }
    lines << summary.dump() << '\n';
    out << lines.str();
    if (args.report) std::ofstream(*args.report) << lines.str();
    if (!missing.empty()) {
      err << "eval: " << missing.size() << " denoised images missing\n";
      return kExitFailure;
    }
    if (scores.empty()) {
      err << "eval: split '" << to_string(args.split) << "' is empty\n";
      return kExitFailure;
    }
    return kExitOk;
  } catch (const std::exception& e) {
    err << "eval: " << e.what() << '\n';
    return kExitFailure;
  }
}

int cmd_plot(const GlobalOptions&, const PlotArgs& args, std::ostream& out, std::ostream& err) {
  try {
    std::ifstream in(args.metrics);
    if (!in) throw std::runtime_error("cannot read " + args.metrics.string());
    Series g_total{"total", {}, {}};
    Series g_adv{"adversarial", {}, {}};
    Series g_l1{"l1", {}, {}};
    Series gp{"gradient penalty", {}, {}};
    Series ssim{"validation ssim", {}, {}};
    auto value = [](const json& v) { return v.is_number() ? v.get<double>() : std::nan(""); };
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
        const double epoch = j.at("epoch").get<double>();
        const auto& g = j.at("generator");
        for (auto* s : {&g_total, &g_adv, &g_l1, &gp, &ssim}) s->x.push_back(epoch);
        g_total.y.push_back(value(g.at("total")));
        g_adv.y.push_back(value(g.at("adv")));
        g_l1.y.push_back(value(g.at("l1")));
        gp.y.push_back(value(j.at("gp_mean")));
        ssim.y.push_back(value(j.at("val_ssim")));
      } catch (const json::exception& e) {
        throw std::runtime_error(args.metrics.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    if (ssim.x.empty()) throw std::runtime_error("metrics stream is empty");

    fs::create_directories(args.out_dir);
    const std::vector<std::pair<std::string, Chart>> charts = {
        {"generator_loss.png", {"Generator training loss", "epoch", "loss", {g_total, g_adv, g_l1}}},
        {"gradient_penalty.png", {"Discriminator gradient penalty", "epoch", "penalty", {gp}}},
        {"validation_ssim.png", {"Validation SSIM", "epoch", "SSIM", {ssim}}},
    };
    for (const auto& [name, chart] : charts) {
      render_chart_png(chart, args.out_dir / name);
      out << (args.out_dir / name).string() << '\n';
    }
    return kExitOk;
  } catch (const std::exception& e) {
    err << "plot: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace docdenoise
