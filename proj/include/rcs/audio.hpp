// SPDX-License-Identifier: Apache-2.0
/**
 * @file audio.hpp
 * @brief Recording and annotation ingest: WAV decoding, peak normalization,
 *        annotation tables and per-frame binary targets.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rcs {

/// Mono time-domain recording.
struct AudioSignal {
  std::vector<float> samples;
  int sample_rate = 0;
  std::string source_id;

  [[nodiscard]] double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

/**
 * @brief Decode a RIFF/WAVE file.
 *
 * Supports integer PCM at 8, 16 and 24 bits and IEEE float at 32 bits, with one
 * or two channels (plain or WAVE_FORMAT_EXTENSIBLE). Stereo is averaged to mono.
 * Integers map to [-1, 1) by dividing by 2^(bits-1); 8-bit data is unsigned.
 * The source id is the file stem.
 */
AudioSignal load_wav(const std::filesystem::path& path);

/// Write 16-bit mono PCM. Samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const AudioSignal& signal);

/// Divide by the peak magnitude so that max |x| == 1. All-zero input is returned unchanged.
AudioSignal peak_normalize(AudioSignal signal);

struct Event {
  std::string source_id;
  double start = 0.0;
  double end = 0.0;
  std::string class_label;
};

using EventList = std::vector<Event>;

/// Parse `recording_id,start_seconds,end_seconds,class` CSV (header required).
EventList parse_annotations(const std::filesystem::path& path);

void write_annotations(const std::filesystem::path& path, const EventList& events);

/// Per-frame presence of a class; values are 0 or 1.
struct TargetVector {
  std::vector<std::uint8_t> values;
  double hop = 0.0;

  [[nodiscard]] std::size_t size() const { return values.size(); }
  [[nodiscard]] std::size_t positives() const;
};

/**
 * @brief Rasterize events onto frame instants t*hop.
 *
 * Frame t is positive iff start <= t*hop < end for some event matching both
 * @p source_id and @p class_label. Instants within 1e-9 hop of a boundary are
 * snapped onto it so that decimal event times land on the intended frame.
 */
TargetVector rasterize_targets(const EventList& events, std::string_view source_id,
                               std::size_t frame_count, double hop,
                               std::string_view class_label);

/// First and one-past-last frame covered by [start, end) under the rasterization rule.
struct FrameSpan {
  std::size_t first = 0;
  std::size_t last = 0;
  [[nodiscard]] bool empty() const { return last <= first; }
};
FrameSpan event_frames(double start, double end, double hop, std::size_t frame_count);

}  // namespace rcs
