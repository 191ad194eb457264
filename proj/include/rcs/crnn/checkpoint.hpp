// SPDX-License-Identifier: Apache-2.0
/**
 * @file checkpoint.hpp
 * @brief Binary model checkpoints.
 *
 * Layout (little-endian): "CRNN", u32 version, u32 length + UTF-8 JSON model
 * config, u32 tensor count, then per tensor u32 length + UTF-8 name, u8 rank,
 * rank x u32 dims and the float32 data.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rcs/crnn/model.hpp"

namespace rcs::crnn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::byte> serialize_checkpoint(const Crnn& model);
void save_checkpoint(const Crnn& model, const std::filesystem::path& path);

/// Load errors for malformed files; Shape errors naming the tensor whose name or shape disagrees with the config.
Crnn parse_checkpoint(std::span<const std::byte> bytes, const std::string& context,
                      const ModelConfig* expected = nullptr);
Crnn load_checkpoint(const std::filesystem::path& path);
/// As load_checkpoint, but the tensors must fit @p expected rather than the stored config.
Crnn load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace rcs::crnn
