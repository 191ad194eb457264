// SPDX-License-Identifier: Apache-2.0
/**
 * @file config.hpp
 * @brief Experiment configuration: an INI file whose sections mirror the
 *        library modules ([data], [features], [denoise], [pipeline],
 *        [resample], [crnn], [loss], [train], [grid], [synth]).
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "rcs/crnn/config.hpp"
#include "rcs/crnn/loss.hpp"
#include "rcs/crnn/train.hpp"
#include "rcs/denoise.hpp"
#include "rcs/features.hpp"
#include "rcs/resample.hpp"
#include "rcs/synthgen.hpp"

namespace rcs::harness {

/// The four spectrogram denoising settings of the grid.
enum class DenoiseSetting { None, FrequencyRemoval, SpectralSubtraction, Both };

std::string_view to_string(DenoiseSetting d) noexcept;
DenoiseSetting parse_denoise_setting(std::string_view text);
DenoiseSetting denoise_setting(const DenoiseConfig& c);
DenoiseConfig with_setting(DenoiseConfig c, DenoiseSetting d);

struct DataConfig {
  std::filesystem::path train_dir;
  std::filesystem::path val_dir;
  std::filesystem::path test_dir;
  std::string target_class = "drumming";
};

struct PipelineSettings {
  double segment_seconds = 10.0;
  double threshold = 0.5;
  bool resample = false;  ///< apply undersampling/oversampling to the training split
};

struct GridAxes {
  std::vector<DenoiseSetting> denoise{DenoiseSetting::None, DenoiseSetting::FrequencyRemoval,
                                      DenoiseSetting::SpectralSubtraction, DenoiseSetting::Both};
  std::vector<std::size_t> channels{32, 64, 96};
  std::vector<std::size_t> depth{2, 3, 4};
  std::vector<std::size_t> pool{2, 3, 4, 5};
  std::vector<crnn::FrequencyIntegration> integration{crnn::FrequencyIntegration::Flatten,
                                                      crnn::FrequencyIntegration::GlobalAverage,
                                                      crnn::FrequencyIntegration::GlobalMax};
  std::vector<bool> bidirectional{true, false};
  std::vector<crnn::LossVariant> loss{crnn::LossVariant::Bce, crnn::LossVariant::WeightedBce,
                                      crnn::LossVariant::Focal, crnn::LossVariant::WeightedFocal};
  std::vector<int> oversample{0, 2, 4, 8, 16};
  std::vector<double> undersample{0.0, 0.5, 0.75, 0.9, 0.95};
  std::size_t repetitions = 5;
  /// Loss and resampling held fixed during round 1.
  crnn::LossVariant round1_loss = crnn::LossVariant::Bce;
  int round1_oversample = 2;
  double round1_undersample = 0.75;
};

struct HarnessConfig {
  DataConfig data;
  FeatureConfig features;
  DenoiseConfig denoise;
  PipelineSettings pipeline;
  ResampleConfig resample;
  crnn::ModelConfig model;  ///< input shape is filled in from the data at run time
  crnn::LossConfig loss;
  crnn::TrainConfig train;
  GridAxes grid;
  SynthConfig synth;
  /// Optional (split name, recording count) pairs; `rcs synth` then writes one corpus per split.
  std::vector<std::pair<std::string, std::size_t>> synth_splits;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Parse INI text; relative data paths are resolved against @p base_dir. Config error on bad keys or values.
HarnessConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
HarnessConfig load_config(const std::filesystem::path& path);

/// Config error naming the first data directory that does not exist.
void check_data_dirs(const DataConfig& data);

}  // namespace rcs::harness
