// SPDX-License-Identifier: Apache-2.0
/**
 * @file synthgen.hpp
 * @brief Synthetic long-recording corpora with rare, annotated events.
 *
 * Every recording is stationary colored noise whose spectral envelope (log
 * slope plus a few random bumps) is drawn per recording, with events mixed in
 * at a fixed in-band SNR. Two event styles exist: trains of short band-limited
 * noise pulses, and harmonic stacks whose fundamental sweeps.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rcs/audio.hpp"

namespace rcs {

enum class EventStyle { Pulses, Harmonic };

std::string_view to_string(EventStyle s) noexcept;
EventStyle parse_event_style(std::string_view text);

struct EventClassSpec {
  std::string label = "drumming";
  EventStyle style = EventStyle::Pulses;
  double band_lo = 30.0;   ///< Hz
  double band_hi = 150.0;  ///< Hz
  double min_duration = 0.8;  ///< s
  double max_duration = 2.0;  ///< s
  /// Exact event count per recording; when unset, events are drawn until the prevalence budget is spent.
  std::optional<std::size_t> events_per_recording;
};

struct SynthConfig {
  std::size_t n_recordings = 10;
  double recording_seconds = 60.0;
  int sample_rate = 16000;
  std::vector<EventClassSpec> classes{EventClassSpec{}};
  double prevalence = 0.002;      ///< target fraction of positive frames, per class
  double noise_variance = 1.0;    ///< spread of the noise envelope across recordings; 0 = identical envelopes
  double snr_db = 10.0;           ///< event power over noise power, both within the event band
  std::uint64_t seed = 0;
  double frame_hop = 0.02;        ///< frame grid used for prevalence accounting
  std::string id_prefix = "rec";

  void validate() const;
};

/// Low-frequency pulse trains at the drumming prevalence of the long test recordings.
SynthConfig drumming_preset();
/// Harmonic stacks between 200 and 2000 Hz at the vocalization prevalence of the long test recordings.
SynthConfig vocalization_preset();

nlohmann::json to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const nlohmann::json& j);

struct SynthCorpus {
  std::vector<AudioSignal> recordings;
  EventList events;
  nlohmann::json manifest;  ///< config, per-recording noise parameters, realized prevalence per class
};

/// Deterministic in the config (including seed). Config error when events cannot be placed.
SynthCorpus generate_corpus(const SynthConfig& config);

/// <dir>/<id>.wav (16-bit), <dir>/annotations.csv and <dir>/manifest.json.
void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);

}  // namespace rcs
