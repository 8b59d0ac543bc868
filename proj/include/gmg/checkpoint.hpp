#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "gmg/trainer.hpp"

namespace gmg {

/// Binary checkpoint layout (little-endian):
///   "GMG1" | u32 version | u64 payload length | payload | u32 CRC-32 of payload
/// The payload is a u32-length-prefixed JSON header (config, vocabulary,
/// grammar, stages, optimizer step counts) followed by named tensor sections
/// holding every parameter, the Adam moments and the reward baseline.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(Trainer& trainer);
void save_checkpoint(Trainer& trainer, const std::filesystem::path& path);

/// Rebuilds a trainer from checkpoint bytes. With `rebuild_data` the dataset
/// is regenerated from the stored config (needed to continue training);
/// otherwise only the vocabulary and grammar are restored. Corruption raises
/// FormatError.
std::unique_ptr<Trainer> deserialize_checkpoint(const std::string& bytes, bool rebuild_data = false);
std::unique_ptr<Trainer> load_checkpoint(const std::filesystem::path& path, bool rebuild_data = false);

}  // namespace gmg
