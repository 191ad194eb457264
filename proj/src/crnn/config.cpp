// SPDX-License-Identifier: Apache-2.0
#include "rcs/crnn/config.hpp"

#include <sstream>

#include "rcs/error.hpp"

namespace rcs::crnn {

std::string_view to_string(FrequencyIntegration f) noexcept {
  switch (f) {
    case FrequencyIntegration::Flatten: return "flatten";
    case FrequencyIntegration::GlobalAverage: return "global-average";
    case FrequencyIntegration::GlobalMax: return "global-max";
  }
  return "unknown";
}

FrequencyIntegration parse_frequency_integration(std::string_view text) {
  if (text == "flatten") return FrequencyIntegration::Flatten;
  if (text == "global-average" || text == "gap") return FrequencyIntegration::GlobalAverage;
  if (text == "global-max" || text == "gmp") return FrequencyIntegration::GlobalMax;
  throw Error(ErrorKind::Config, "unknown frequency integration '" + std::string(text) + "'");
}

std::vector<std::size_t> ModelConfig::band_chain() const {
  std::vector<std::size_t> chain{input_bands};
  for (std::size_t l = 0; l < conv_depth && pool_size > 0; ++l) chain.push_back(chain.back() / pool_size);
  return chain;
}

std::size_t ModelConfig::integrated_size() const {
  return freq_integration == FrequencyIntegration::Flatten ? final_bands() * channel_size : channel_size;
}

void ModelConfig::validate() const {
  if (conv_depth < 1) throw Error(ErrorKind::Config, "conv_depth must be >= 1");
  if (channel_size < 1) throw Error(ErrorKind::Config, "channel_size must be >= 1");
  if (pool_size < 2) throw Error(ErrorKind::Config, "pool_size must be >= 2");
  if (bidirectional && channel_size % 2 != 0)
    throw Error(ErrorKind::Config, "bidirectional models need an even channel_size");
  if (input_frames < 1 || input_bands < 1) throw Error(ErrorKind::Config, "input shape must be non-empty");
  const auto chain = band_chain();
  if (chain.back() < 1) {
    std::ostringstream s;
    for (std::size_t i = 0; i < chain.size(); ++i) s << (i ? "->" : "") << chain[i];
    throw Error(ErrorKind::Config, "pooling leaves no frequency bands (" + s.str() + ")");
  }
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"conv_depth", c.conv_depth},   {"channel_size", c.channel_size},
          {"pool_size", c.pool_size},     {"freq_integration", std::string(to_string(c.freq_integration))},
          {"bidirectional", c.bidirectional}, {"input_frames", c.input_frames},
          {"input_bands", c.input_bands}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.conv_depth = j.at("conv_depth").get<std::size_t>();
    c.channel_size = j.at("channel_size").get<std::size_t>();
    c.pool_size = j.at("pool_size").get<std::size_t>();
    c.freq_integration = parse_frequency_integration(j.at("freq_integration").get<std::string>());
    c.bidirectional = j.at("bidirectional").get<bool>();
    c.input_frames = j.at("input_frames").get<std::size_t>();
    c.input_bands = j.at("input_bands").get<std::size_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("model config: ") + e.what());
  }
}

}  // namespace rcs::crnn
