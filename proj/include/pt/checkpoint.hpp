#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pt/model.hpp"

namespace pt {

/// Layout (all integers little-endian u32):
///   "PTCK" | version | config byte length | config text (`key=value\n` lines)
///   | block count | per block: name length, name, rank, extents..., f32 values
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ModelParams<float> params;
};

std::vector<std::uint8_t> encode_checkpoint(const ModelConfig& config,
                                            const ModelParams<float>& params);
/// Rejects bad magic, unknown versions, truncation and any block whose name or
/// shape disagrees with the embedded config.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelParams<float>& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pt
