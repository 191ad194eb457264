// SPDX-License-Identifier: Apache-2.0
#include "rcs/resample.hpp"

#include <cmath>
#include <numeric>

#include "rcs/detail/random.hpp"
#include "rcs/error.hpp"

namespace rcs {

void ResampleConfig::validate() const {
  if (!(undersample_fraction >= 0.0 && undersample_fraction <= 1.0))
    throw Error(ErrorKind::Config, "resample.undersample_fraction must lie in [0, 1]");
  if (oversample_duplications < 0)
    throw Error(ErrorKind::Config, "resample.oversample_duplications must be >= 0");
}

PositiveNegativeSplit split_pos_neg(const SegmentBatch& batch) {
  PositiveNegativeSplit split;
  for (const auto& seg : batch.segments) {
    (seg->positive() ? split.positives : split.negatives).segments.push_back(seg);
  }
  return split;
}

std::size_t kept_negative_count(std::size_t negatives, double undersample_fraction) {
  const double keep = (1.0 - undersample_fraction) * static_cast<double>(negatives);
  // The epsilon absorbs representation error in U (e.g. (1 - 0.95) * 20 = 0.99999...).
  return static_cast<std::size_t>(std::floor(keep + 0.5 + 1e-9));
}

SegmentBatch resample(std::span<const SegmentBatch> per_signal_batches, const ResampleConfig& config) {
  config.validate();
  const auto signals = static_cast<std::ptrdiff_t>(per_signal_batches.size());
  std::vector<SegmentBatch> per_signal(per_signal_batches.size());
  // Nothing may throw inside the parallel region.
  for (const SegmentBatch& b : per_signal_batches)
    for (const auto& seg : b.segments)
      if (!seg->target) throw Error(ErrorKind::Usage, "resampling requires target patches (" + seg->source_id + ")");

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < signals; ++i) {
    const PositiveNegativeSplit split = split_pos_neg(per_signal_batches[static_cast<std::size_t>(i)]);
    detail::Rng rng(detail::splitmix64(config.seed + static_cast<std::uint64_t>(i)));
    std::vector<std::size_t> order(split.negatives.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t keep = kept_negative_count(order.size(), config.undersample_fraction);
    // Partial Fisher-Yates: the first `keep` slots become a uniform sample without replacement.
    for (std::size_t k = 0; k < keep; ++k) {
      const auto j = k + static_cast<std::size_t>(detail::uniform_below(rng, order.size() - k));
      std::swap(order[k], order[j]);
    }
    SegmentBatch& out = per_signal[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < keep; ++k) out.segments.push_back(split.negatives.segments[order[k]]);
    for (const auto& pos : split.positives.segments)
      for (int c = 0; c <= config.oversample_duplications; ++c) out.segments.push_back(pos);
  }

  SegmentBatch merged;
  for (const SegmentBatch& b : per_signal) merged.append(b);
  detail::Rng rng(detail::splitmix64(config.seed ^ 0xA5A5A5A5A5A5A5A5ull));
  detail::shuffle(merged.segments, rng);
  return merged;
}

}  // namespace rcs
