// SPDX-License-Identifier: Apache-2.0
/**
 * @file eval.hpp
 * @brief Segment-based evaluation: average precision and F1 on 20 ms frames
 *        and on 5 s max-pooled blocks of the concatenated predictions.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rcs/audio.hpp"
#include "rcs/pipeline.hpp"

namespace rcs {

/// ceil(T / pool) window maxima; the final window may be short.
std::vector<float> pool_max(std::span<const float> values, std::size_t pool);
std::vector<std::uint8_t> pool_max(std::span<const std::uint8_t> values, std::size_t pool);

/**
 * @brief Step-wise area under the precision-recall curve.
 *
 * Thresholds run over the distinct scores in decreasing order;
 * AP = sum_n (R_n - R_{n-1}) P_n with R_0 = 0. Raises UndefinedMetric when
 * @p labels has no positive.
 */
double average_precision(std::span<const float> scores, std::span<const std::uint8_t> labels);

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
};

Confusion confusion(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> labels);

/// 2TP / (2TP + FP + FN), 0 when the denominator is 0.
double f1_score(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> labels);

struct ResolutionScores {
  double ap = 0.0;
  double f1 = 0.0;
  Confusion counts;
  std::size_t pool_frames = 1;
};

struct EvalReport {
  ResolutionScores frame;
  ResolutionScores pooled;  ///< 5 s blocks
  double ap_avg = 0.0;
  double f1_avg = 0.0;
  double threshold = 0.5;
  double frame_hop = 0.02;
  double pooled_seconds = 5.0;
};

/**
 * Concatenate all recordings (sources must match pairwise, in order), score the
 * frames, then max-pool scores and labels with round(5 s / frame_hop) frames
 * and score again. Scores are pooled before thresholding.
 */
EvalReport evaluate(std::span<const PredictionVector> predictions, std::span<const TargetVector> targets,
                    double threshold, double frame_hop, double pooled_seconds = 5.0);

nlohmann::json to_json(const EvalReport& report);
std::string eval_csv_header();
std::string eval_csv_row(const EvalReport& report);

}  // namespace rcs
