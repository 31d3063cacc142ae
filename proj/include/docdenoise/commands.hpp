#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include "docdenoise/metrics.hpp"
#include "docdenoise/noisegen.hpp"
#include "docdenoise/trainer.hpp"

namespace docdenoise {

/// Process exit codes shared by every subcommand.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitCollapsed = 2 };

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> config;
};

struct DatasetArgs {
  std::filesystem::path clean_dir;
  std::filesystem::path out_dir;
  int variants = 3;
  std::array<double, 3> split_fractions = {0.8, 0.1, 0.1};
};

struct TrainArgs {
  std::optional<std::filesystem::path> manifest;
  std::optional<std::filesystem::path> output_dir;
  std::optional<Regime> regime;
  std::optional<int> epochs;
  std::optional<std::filesystem::path> resume_from;
};

struct DenoiseArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path input;  // image file or directory
  std::filesystem::path out_dir;
};

struct EvalArgs {
  std::filesystem::path manifest;
  std::filesystem::path denoised_dir;
  Split split = Split::test;
  std::optional<std::filesystem::path> report;  // JSON-lines copy of stdout
};

struct PlotArgs {
  std::filesystem::path metrics;
  std::filesystem::path out_dir;
};

/// Builds the run config: defaults, then the --config file, then flags.
RunConfig resolve_train_config(const GlobalOptions& global, const TrainArgs& args);

int cmd_dataset(const GlobalOptions& global, const DatasetArgs& args, std::ostream& out, std::ostream& err);
int cmd_train(const GlobalOptions& global, const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_denoise(const GlobalOptions& global, const DenoiseArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const GlobalOptions& global, const EvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_plot(const GlobalOptions& global, const PlotArgs& args, std::ostream& out, std::ostream& err);

/// Output file name used by cmd_denoise for an input: PNG and PGM keep
/// their name, anything else becomes <stem>.png.
std::filesystem::path denoised_name(const std::filesystem::path& input);

}  // namespace docdenoise
