#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "msnet/optim.hpp"

namespace msnet {

// Binary layout, all integers little-endian:
//   "MSNC" | u16 version (1) | u32 entry count |
//   entries: u16 name length, name bytes, u8 rank, rank x u32 dims, f32 values |
//   u32 CRC-32 of every preceding byte.

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

std::string serialize_checkpoint(const ParameterSet& params);
/// `origin` names the source in error messages. Throws DataError on bad
/// magic, truncation, or CRC mismatch ("checkpoint corrupt") and ConfigError
/// on an unknown version.
std::vector<CheckpointEntry> parse_checkpoint(std::string_view bytes, const std::string& origin);

/// Atomic write; throws IoError.
void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path);
std::vector<CheckpointEntry> load_checkpoint(const std::filesystem::path& path);

/// Copies entry values into every parameter of `params`; extra entries are
/// ignored. A missing name or a shape mismatch throws ConfigError.
void apply_checkpoint(ParameterSet& params, const std::vector<CheckpointEntry>& entries);

}  // namespace msnet
