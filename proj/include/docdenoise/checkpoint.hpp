#pragma once

#include <filesystem>
#include <stdexcept>

#include "docdenoise/trainer.hpp"

namespace docdenoise {

/// Unreadable, truncated, corrupted or version-mismatched checkpoint. The
/// message names the offending field.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary record stream: magic, version, then named records (configs as
/// JSON, every generator/discriminator parameter and buffer, Adam moments
/// and step counts per parameter, epoch) and a trailing FNV-1a checksum.
void save_checkpoint(const TrainingState& state, const std::filesystem::path& path);

/// Rebuilds the networks from the stored configs and restores all state
/// bit-for-bit.
TrainingState load_checkpoint(const std::filesystem::path& path);

}  // namespace docdenoise
