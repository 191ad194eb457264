// SPDX-License-Identifier: Apache-2.0
/**
 * @file pipeline.hpp
 * @brief Fixed-length segmentation of spectrograms, reassembly of per-segment
 *        predictions and output binarisation.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rcs/audio.hpp"
#include "rcs/features.hpp"

namespace rcs {

/// T^seg x F patch cut from one recording, optionally with its target patch.
struct Segment {
  std::size_t frames = 0;
  std::size_t bands = 0;
  std::vector<float> patch;  ///< time-major, frames * bands
  std::optional<std::vector<std::uint8_t>> target;
  std::string source_id;
  std::size_t start_frame = 0;

  [[nodiscard]] bool positive() const;
};

/// Segments are shared and immutable; duplicates (oversampling) alias the same content.
struct SegmentBatch {
  std::vector<std::shared_ptr<const Segment>> segments;

  [[nodiscard]] std::size_t size() const { return segments.size(); }
  [[nodiscard]] bool empty() const { return segments.empty(); }
  void append(const SegmentBatch& other);
  /// Positive and total target frames over the batch (Usage error if a target is missing).
  [[nodiscard]] std::pair<std::size_t, std::size_t> frame_counts() const;
};

/// Where each segment of one recording starts, and how the tail was handled.
struct SegmentationMap {
  std::string source_id;
  std::size_t total_frames = 0;
  std::size_t segment_frames = 0;
  std::vector<std::size_t> starts;
  bool final_overlapped = false;  ///< last segment ends at total_frames and overlaps its predecessor
  std::size_t covered_frames = 0; ///< frames [covered_frames, total_frames) were discarded

  [[nodiscard]] std::size_t segment_count() const { return starts.size(); }
};

/// Final segments overlapping their predecessor by at least this fraction are discarded.
inline constexpr double kMaxTailOverlap = 0.75;

struct Segmentation {
  SegmentBatch batch;
  SegmentationMap map;
};

Segmentation segment(const Spectrogram& s, const TargetVector* target, std::size_t segment_frames);

/// Segment start positions for a recording of @p total frames (no data needed).
SegmentationMap plan_segments(const std::string& source_id, std::size_t total, std::size_t segment_frames);

struct PredictionVector {
  std::vector<float> p;
  double hop = 0.0;
  std::string source_id;

  [[nodiscard]] std::size_t size() const { return p.size(); }
};

/// Later segments overwrite earlier ones on overlap; discarded tail frames are 0.
PredictionVector concatenate_predictions(std::span<const std::vector<float>> segment_predictions,
                                         const SegmentationMap& map, double hop);

/// y[t] = 1 iff p[t] > threshold.
TargetVector binarize(const PredictionVector& p, double threshold);

/// CSV `source_id,frame_index,probability`, or with a trailing `label` column when @p threshold is set.
void save_predictions(const std::filesystem::path& path, std::span<const PredictionVector> predictions,
                      std::optional<double> threshold = std::nullopt);
std::vector<PredictionVector> load_predictions(const std::filesystem::path& path, double hop);

}  // namespace rcs
