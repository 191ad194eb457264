// SPDX-License-Identifier: Apache-2.0
/**
 * @file denoise.hpp
 * @brief Spectrogram denoising: class-mask frequency removal, local spectral
 *        subtraction and global z-standardisation.
 */
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rcs/audio.hpp"
#include "rcs/features.hpp"

namespace rcs {

/// Per-band mean Pearson correlation between band energy and event presence.
struct ClassMask {
  std::vector<double> r;
  std::string class_label;
  std::size_t context_frames = 0;
  std::size_t event_count = 0;
};

struct DenoiseConfig {
  bool apply_frequency_removal = true;
  bool apply_spectral_subtraction = true;
  double mask_threshold = 0.025;
  double context_seconds = 60.0;
  double subtraction_window_seconds = 180.0;

  void validate() const;
};

/// One recording's worth of mask input. The spectrogram and target must share T.
struct AnnotatedSpectrogram {
  const Spectrogram* spectrogram = nullptr;
  const TargetVector* target = nullptr;
  const EventList* events = nullptr;  ///< may hold events of other recordings; filtered by source id
};

/**
 * @brief Average the per-event band/target correlations over every event of
 *        @p class_label in the corpus.
 *
 * Each event contributes the Pearson correlation between every band and the
 * full target vector over the frames [first - context, last + context] clipped
 * to the recording. Bands (or target windows) with zero variance contribute 0.
 * Events that cover no frame are skipped.
 */
ClassMask compute_class_mask(std::span<const AnnotatedSpectrogram> corpus, const std::string& class_label,
                             double context_seconds);

/// Keep the bands with r >= threshold in their original order.
Spectrogram apply_frequency_removal(const Spectrogram& s, const ClassMask& mask, double threshold);

/**
 * @brief Subtract per-band means over consecutive windows of floor(window/hop)
 *        frames. The final window may be shorter and uses its own mean.
 */
Spectrogram spectral_subtraction(const Spectrogram& s, double window_seconds);

struct Standardizer {
  double mean = 0.0;
  double std = 1.0;
};

/// Population mean and standard deviation over every entry of every spectrogram.
Standardizer fit_standardizer(std::span<const Spectrogram> training);
Spectrogram apply_standardizer(const Spectrogram& s, const Standardizer& z);

/// CSV `band_index,center_hz,r`.
void save_class_mask(const std::filesystem::path& path, const ClassMask& mask,
                     std::span<const float> band_frequencies);

struct LoadedClassMask {
  ClassMask mask;
  std::vector<float> band_frequencies;
};
LoadedClassMask load_class_mask(const std::filesystem::path& path);

void save_standardizer(const std::filesystem::path& path, const Standardizer& z);
Standardizer load_standardizer(const std::filesystem::path& path);

}  // namespace rcs
