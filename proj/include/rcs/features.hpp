// SPDX-License-Identifier: Apache-2.0
/**
 * @file features.hpp
 * @brief Log-mel spectrogram front end and the SPEC spectrogram file format.
 *
 * Analysis chain: reflect-padded centred framing, Hann window of frame_length
 * centred inside an fft_size buffer, magnitude spectrum, Slaney-normalised
 * triangular mel filterbank, natural log with a floor. With hop h samples and
 * L input samples the spectrogram has floor(L / h) + 1 frames.
 */
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rcs/audio.hpp"

namespace rcs {

struct FeatureConfig {
  double frame_length = 0.040;  ///< seconds
  double hop_length = 0.020;    ///< seconds
  int n_mels = 80;
  int fft_size = 0;     ///< 0: next power of two >= frame samples
  double fmin = 0.0;    ///< Hz
  double fmax = 0.0;    ///< Hz, 0: Nyquist
  double log_floor = 1e-10;
};

/// FeatureConfig resolved against a sample rate. Construction validates.
struct StftGeometry {
  std::size_t frame_samples = 0;
  std::size_t hop_samples = 0;
  std::size_t fft_size = 0;
  double fmin = 0.0;
  double fmax = 0.0;
  int n_mels = 0;
  int sample_rate = 0;
  double log_floor = 0.0;

  static StftGeometry resolve(const FeatureConfig& config, int sample_rate);
  [[nodiscard]] std::size_t frame_count(std::size_t signal_length) const {
    return signal_length / hop_samples + 1;
  }
  [[nodiscard]] double hop_seconds() const {
    return static_cast<double>(hop_samples) / sample_rate;
  }
};

/// Time-major T x F matrix with band metadata.
struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bands = 0;
  std::vector<float> data;  ///< frames * bands, row t holds all bands of frame t
  double hop = 0.0;         ///< seconds per frame
  std::vector<float> band_frequencies;
  std::string source_id;

  Spectrogram() = default;
  Spectrogram(std::size_t t, std::size_t f, double hop_seconds)
      : frames(t), bands(f), data(t * f, 0.0f), hop(hop_seconds) {}

  float& at(std::size_t t, std::size_t f) { return data[t * bands + f]; }
  [[nodiscard]] float at(std::size_t t, std::size_t f) const { return data[t * bands + f]; }
  std::span<float> frame(std::size_t t) { return {data.data() + t * bands, bands}; }
  [[nodiscard]] std::span<const float> frame(std::size_t t) const {
    return {data.data() + t * bands, bands};
  }
  /// Throws Shape if dimensions and buffers disagree, Validation on NaN/Inf.
  void check() const;
};

double hz_to_mel(double hz);  ///< Slaney scale: linear below 1 kHz, logarithmic above
double mel_to_hz(double mel);

/// Triangular filters over the rfft bins, Slaney area normalisation. Row-major n_mels x (fft/2+1).
class MelFilterbank {
 public:
  MelFilterbank(int sample_rate, std::size_t fft_size, int n_mels, double fmin, double fmax);

  [[nodiscard]] int bands() const { return n_mels_; }
  [[nodiscard]] std::size_t bins() const { return bins_; }
  [[nodiscard]] double weight(int band, std::size_t bin) const { return weights_[band * bins_ + bin]; }
  /// First and one-past-last nonzero bin of a band.
  [[nodiscard]] std::pair<std::size_t, std::size_t> support(int band) const { return support_[band]; }
  void apply(std::span<const double> magnitude, std::span<double> out) const;

 private:
  int n_mels_;
  std::size_t bins_;
  std::vector<double> weights_;
  std::vector<std::pair<std::size_t, std::size_t>> support_;
};

/**
 * @brief Band labels: n_mels frequencies equally spaced on the mel scale from
 *        fmin to fmax inclusive (the axis labelling used to report band ranges).
 */
std::vector<float> band_center_frequencies(int n_mels, double fmin, double fmax);

Spectrogram compute_log_mel(const AudioSignal& signal, const FeatureConfig& config);

namespace reference {
/// Serial log-mel using a direct O(N^2) DFT. Test oracle for compute_log_mel.
Spectrogram compute_log_mel(const AudioSignal& signal, const FeatureConfig& config);
}  // namespace reference

/**
 * @brief Indices of bands whose label lies in [lo, hi] at whole-Hz resolution
 *        (labels are truncated to integer Hz before comparison).
 */
std::vector<std::size_t> band_range(std::span<const float> band_frequencies, double lo, double hi);

void save_spectrogram(const std::filesystem::path& path, const Spectrogram& s);
/// The source id is taken from the file stem.
Spectrogram load_spectrogram(const std::filesystem::path& path);

}  // namespace rcs
