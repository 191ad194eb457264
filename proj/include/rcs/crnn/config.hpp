// SPDX-License-Identifier: Apache-2.0
/**
 * @file config.hpp
 * @brief Architecture hyperparameters of the convolutional recurrent network.
 */
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace rcs::crnn {

/// How the frequency axis is folded into channels before the recurrent layer.
enum class FrequencyIntegration { Flatten, GlobalAverage, GlobalMax };

std::string_view to_string(FrequencyIntegration f) noexcept;
/// Accepts flatten, global-average (gap), global-max (gmp). Config error otherwise.
FrequencyIntegration parse_frequency_integration(std::string_view text);

struct ModelConfig {
  std::size_t conv_depth = 2;
  std::size_t channel_size = 96;  ///< every conv layer and the recurrent layer
  std::size_t pool_size = 2;      ///< frequency pooling size == stride
  FrequencyIntegration freq_integration = FrequencyIntegration::GlobalAverage;
  bool bidirectional = true;
  std::size_t input_frames = 500;
  std::size_t input_bands = 80;

  /// Band count at the input of each conv layer plus the final one (depth + 1 entries).
  [[nodiscard]] std::vector<std::size_t> band_chain() const;
  [[nodiscard]] std::size_t final_bands() const { return band_chain().back(); }
  /// Width of the per-frame vector fed to the recurrent layer.
  [[nodiscard]] std::size_t integrated_size() const;
  /// Units per recurrent direction.
  [[nodiscard]] std::size_t gru_units() const { return bidirectional ? channel_size / 2 : channel_size; }
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace rcs::crnn
