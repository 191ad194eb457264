// SPDX-License-Identifier: Apache-2.0
/**
 * @file resample.hpp
 * @brief Training-time random undersampling of negative segments and
 *        duplication of positive segments, per recording.
 */
#pragma once

#include <cstdint>
#include <span>

#include "rcs/pipeline.hpp"

namespace rcs {

struct ResampleConfig {
  double undersample_fraction = 0.75;  ///< share of negative segments discarded, U
  int oversample_duplications = 2;     ///< extra copies of each positive segment, O
  std::uint64_t seed = 0;

  void validate() const;
};

struct PositiveNegativeSplit {
  SegmentBatch positives;
  SegmentBatch negatives;
};

/// Positive iff the segment's target patch contains a 1. Usage error when a target is missing.
PositiveNegativeSplit split_pos_neg(const SegmentBatch& batch);

/// round-half-up((1 - U) * negatives)
std::size_t kept_negative_count(std::size_t negatives, double undersample_fraction);

/**
 * @brief Resample each recording's batch independently, then shuffle the union.
 *
 * Recording i keeps kept_negative_count(|Neg_i|, U) negatives drawn without
 * replacement with a generator seeded from (seed, i), and contributes every
 * positive O + 1 times. The concatenation is shuffled with a generator seeded
 * from @p config.seed.
 */
SegmentBatch resample(std::span<const SegmentBatch> per_signal_batches, const ResampleConfig& config);

}  // namespace rcs
