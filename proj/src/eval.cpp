// SPDX-License-Identifier: Apache-2.0
#include "rcs/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rcs/detail/text.hpp"
#include "rcs/error.hpp"

namespace rcs {

namespace {

template <typename T>
std::vector<T> pool_max_impl(std::span<const T> values, std::size_t pool) {
  if (pool == 0) throw Error(ErrorKind::Validation, "pool must be >= 1");
  std::vector<T> out;
  out.reserve((values.size() + pool - 1) / pool);
  for (std::size_t begin = 0; begin < values.size(); begin += pool) {
    const std::size_t end = std::min(values.size(), begin + pool);
    out.push_back(*std::max_element(values.begin() + static_cast<std::ptrdiff_t>(begin),
                                    values.begin() + static_cast<std::ptrdiff_t>(end)));
  }
  return out;
}

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b)
    throw Error(ErrorKind::Shape, "length mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
}

ResolutionScores score(std::span<const float> p, std::span<const std::uint8_t> y, double threshold,
                       std::size_t pool) {
  ResolutionScores r;
  r.pool_frames = pool;
  r.ap = average_precision(p, y);
  std::vector<std::uint8_t> yhat(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) yhat[i] = static_cast<double>(p[i]) > threshold ? 1 : 0;
  r.counts = confusion(yhat, y);
  r.f1 = f1_score(yhat, y);
  return r;
}

nlohmann::json counts_json(const Confusion& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
}

}  // namespace

std::vector<float> pool_max(std::span<const float> values, std::size_t pool) {
  return pool_max_impl(values, pool);
}

std::vector<std::uint8_t> pool_max(std::span<const std::uint8_t> values, std::size_t pool) {
  return pool_max_impl(values, pool);
}

double average_precision(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  check_lengths(scores.size(), labels.size());
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  if (positives == 0) throw Error(ErrorKind::UndefinedMetric, "average precision needs at least one positive");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const float threshold = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == threshold; ++i) {
      if (labels[order[i]]) ++tp; else ++fp;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

Confusion confusion(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> labels) {
  check_lengths(predicted.size(), labels.size());
  Confusion c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i]) {
      if (labels[i]) ++c.tp; else ++c.fp;
    } else {
      if (labels[i]) ++c.fn; else ++c.tn;
    }
  }
  return c;
}

double f1_score(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> labels) {
  const Confusion c = confusion(predicted, labels);
  const std::size_t denom = 2 * c.tp + c.fp + c.fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

EvalReport evaluate(std::span<const PredictionVector> predictions, std::span<const TargetVector> targets,
                    double threshold, double frame_hop, double pooled_seconds) {
  if (predictions.size() != targets.size())
    throw Error(ErrorKind::Shape, std::to_string(predictions.size()) + " prediction vectors for " +
                                      std::to_string(targets.size()) + " target vectors");
  if (!(frame_hop > 0.0)) throw Error(ErrorKind::Validation, "frame hop must be positive");
  std::vector<float> p;
  std::vector<std::uint8_t> y;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].size() != targets[i].size())
      throw Error(ErrorKind::Shape, predictions[i].source_id + ": " + std::to_string(predictions[i].size()) +
                                        " predictions for " + std::to_string(targets[i].size()) + " targets");
    p.insert(p.end(), predictions[i].p.begin(), predictions[i].p.end());
    y.insert(y.end(), targets[i].values.begin(), targets[i].values.end());
  }
  EvalReport report;
  report.threshold = threshold;
  report.frame_hop = frame_hop;
  report.pooled_seconds = pooled_seconds;
  report.frame = score(p, y, threshold, 1);
  const auto pool = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(pooled_seconds / frame_hop)));
  report.pooled = score(pool_max(std::span<const float>(p), pool), pool_max(std::span<const std::uint8_t>(y), pool),
                        threshold, pool);
  report.ap_avg = (report.frame.ap + report.pooled.ap) / 2.0;
  report.f1_avg = (report.frame.f1 + report.pooled.f1) / 2.0;
  return report;
}

nlohmann::json to_json(const EvalReport& r) {
  return {
      {"ap_frame", r.frame.ap},
      {"ap_5s", r.pooled.ap},
      {"ap_avg", r.ap_avg},
      {"f1_frame", r.frame.f1},
      {"f1_5s", r.pooled.f1},
      {"f1_avg", r.f1_avg},
      {"counts_frame", counts_json(r.frame.counts)},
      {"counts_5s", counts_json(r.pooled.counts)},
      {"threshold", r.threshold},
      {"frame_hop", r.frame_hop},
      {"pooled_seconds", r.pooled_seconds},
      {"pool_frames", r.pooled.pool_frames},
  };
}

std::string eval_csv_header() {
  return "ap_frame,ap_5s,ap_avg,f1_frame,f1_5s,f1_avg,tp_frame,fp_frame,fn_frame,tn_frame,"
         "tp_5s,fp_5s,fn_5s,tn_5s,threshold";
}

std::string eval_csv_row(const EvalReport& r) {
  std::ostringstream out;
  const auto d = [](double v) { return detail::format_double(v); };
  out << d(r.frame.ap) << ',' << d(r.pooled.ap) << ',' << d(r.ap_avg) << ',' << d(r.frame.f1) << ','
      << d(r.pooled.f1) << ',' << d(r.f1_avg) << ',' << r.frame.counts.tp << ',' << r.frame.counts.fp << ','
      << r.frame.counts.fn << ',' << r.frame.counts.tn << ',' << r.pooled.counts.tp << ','
      << r.pooled.counts.fp << ',' << r.pooled.counts.fn << ',' << r.pooled.counts.tn << ',' << d(r.threshold);
  return out.str();
}

}  // namespace rcs
