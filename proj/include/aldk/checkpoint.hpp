#pragma once

// Checkpoint file: "ALDK", u32 version, then length-prefixed little-endian
// sections: config (JSON text), student and critic tensors by name, both Adam
// states, the iteration counter and the batch-sampler cursor.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "aldk/training.hpp"

namespace aldk {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const TrainState& state);
TrainState decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");

void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace aldk
