// SPDX-License-Identifier: Apache-2.0
/**
 * @file experiment.hpp
 * @brief One detection run end to end: features, denoising, segmentation,
 *        resampling, training, prediction and evaluation on train/val/test.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rcs/audio.hpp"
#include "rcs/crnn/model.hpp"
#include "rcs/crnn/train.hpp"
#include "rcs/denoise.hpp"
#include "rcs/eval.hpp"
#include "rcs/features.hpp"
#include "rcs/harness/config.hpp"
#include "rcs/pipeline.hpp"

namespace rcs::harness {

/// Recordings of one split with their spectrograms and per-frame targets.
struct Split {
  std::string name;
  std::vector<Spectrogram> spectrograms;
  std::vector<TargetVector> targets;
  EventList events;
};

/// Peak-normalised recordings and annotations of one corpus directory (*.wav + annotations.csv).
struct Corpus {
  std::vector<AudioSignal> recordings;
  EventList events;
};

Corpus load_corpus(const std::filesystem::path& dir);
/// Log-mel features and targets of the recordings (in order) for @p target_class.
Split featurize(const std::string& name, const Corpus& corpus, const FeatureConfig& features,
                const std::string& target_class);

struct Dataset {
  Split train, val, test;
};

Dataset load_dataset(const HarnessConfig& config);

/// Dataset after stage-3 denoising and standardisation, plus the fitted artifacts.
struct PreparedData {
  DenoiseSetting setting = DenoiseSetting::None;
  Split train, val, test;
  std::optional<ClassMask> mask;  ///< fitted on train + val events
  std::vector<float> mask_band_frequencies;
  Standardizer standardizer;      ///< fitted on train only
  std::size_t bands = 0;
};

PreparedData prepare(const Dataset& data, const DenoiseConfig& denoise, const std::string& target_class);

/// Test-time path: frequency removal with a fitted @p mask (when enabled), spectral subtraction, standardisation.
Split apply_fitted(Split split, const DenoiseConfig& denoise, const ClassMask* mask, const Standardizer& z);

/// Whole-recording probabilities: segment, predict, reassemble.
std::vector<PredictionVector> predict_recordings(const crnn::Crnn& model, std::span<const Spectrogram> spectrograms,
                                                 std::size_t batch_size);

struct RunSettings {
  crnn::ModelConfig model;  ///< input shape is overwritten from the data
  crnn::LossConfig loss;
  crnn::TrainConfig train;
  std::optional<ResampleConfig> resample;
  double segment_seconds = 10.0;
  double threshold = 0.5;
  std::uint64_t seed = 0;
};

/// AP is NaN when a split holds no positive frame.
struct SplitScores {
  EvalReport report;
  std::vector<PredictionVector> predictions;
};

struct RunOutcome {
  explicit RunOutcome(crnn::Crnn m) : model(std::move(m)) {}

  crnn::Crnn model;
  crnn::TrainHistory history;
  SplitScores train, val, test;
  std::size_t train_segments = 0;
  std::size_t val_segments = 0;
  std::size_t test_segments = 0;
  double wall_seconds = 0.0;
};

/// Segment length in frames for @p seconds at hop @p hop.
std::size_t segment_frames(double seconds, double hop);

RunOutcome run_experiment(const PreparedData& data, const RunSettings& settings,
                          const std::function<void(const crnn::EpochRecord&)>& on_epoch = {});

/// Evaluate @p predictions against @p targets; AP fields are NaN when there is no positive.
EvalReport evaluate_split(std::span<const PredictionVector> predictions, std::span<const TargetVector> targets,
                          double threshold, double hop);

/// run_pipeline: full run from a config file, with artifacts written under @p out_dir.
struct PipelineResult {
  RunOutcome outcome;
  PreparedData data;
};
PipelineResult run_pipeline(const HarnessConfig& config, const std::filesystem::path& out_dir,
                            const std::function<void(const std::string&)>& log = {});

}  // namespace rcs::harness
