// SPDX-License-Identifier: Apache-2.0
#include "rcs/pipeline.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "rcs/detail/text.hpp"
#include "rcs/error.hpp"

namespace rcs {

bool Segment::positive() const {
  if (!target) throw Error(ErrorKind::Usage, "segment of " + source_id + " has no target patch");
  return std::find(target->begin(), target->end(), std::uint8_t{1}) != target->end();
}

void SegmentBatch::append(const SegmentBatch& other) {
  segments.insert(segments.end(), other.segments.begin(), other.segments.end());
}

std::pair<std::size_t, std::size_t> SegmentBatch::frame_counts() const {
  std::size_t pos = 0, total = 0;
  for (const auto& s : segments) {
    if (!s->target) throw Error(ErrorKind::Usage, "segment of " + s->source_id + " has no target patch");
    pos += static_cast<std::size_t>(std::count(s->target->begin(), s->target->end(), std::uint8_t{1}));
    total += s->target->size();
  }
  return {pos, total};
}

SegmentationMap plan_segments(const std::string& source_id, std::size_t total, std::size_t segment_frames) {
  if (segment_frames == 0) throw Error(ErrorKind::Validation, "segment length must be >= 1 frame");
  SegmentationMap map;
  map.source_id = source_id;
  map.total_frames = total;
  map.segment_frames = segment_frames;
  const std::size_t full = total / segment_frames;
  for (std::size_t j = 0; j < full; ++j) map.starts.push_back(j * segment_frames);
  map.covered_frames = full * segment_frames;
  const std::size_t remainder = total % segment_frames;
  if (remainder != 0 && full > 0) {
    const std::size_t overlap = segment_frames - remainder;
    if (static_cast<double>(overlap) < kMaxTailOverlap * static_cast<double>(segment_frames)) {
      map.starts.push_back(total - segment_frames);
      map.final_overlapped = true;
      map.covered_frames = total;
    }
  }
  return map;
}

Segmentation segment(const Spectrogram& s, const TargetVector* target, std::size_t segment_frames) {
  if (target && target->size() != s.frames)
    throw Error(ErrorKind::Shape, "target length " + std::to_string(target->size()) + " != spectrogram frames " +
                                      std::to_string(s.frames) + " for " + s.source_id);
  Segmentation out;
  out.map = plan_segments(s.source_id, s.frames, segment_frames);
  out.batch.segments.reserve(out.map.starts.size());
  for (const std::size_t start : out.map.starts) {
    auto seg = std::make_shared<Segment>();
    seg->frames = segment_frames;
    seg->bands = s.bands;
    seg->source_id = s.source_id;
    seg->start_frame = start;
    const auto first = s.data.begin() + static_cast<std::ptrdiff_t>(start * s.bands);
    seg->patch.assign(first, first + static_cast<std::ptrdiff_t>(segment_frames * s.bands));
    if (target) {
      const auto y = target->values.begin() + static_cast<std::ptrdiff_t>(start);
      seg->target.emplace(y, y + static_cast<std::ptrdiff_t>(segment_frames));
    }
    out.batch.segments.push_back(std::move(seg));
  }
  return out;
}

PredictionVector concatenate_predictions(std::span<const std::vector<float>> segment_predictions,
                                         const SegmentationMap& map, double hop) {
  if (segment_predictions.size() != map.segment_count())
    throw Error(ErrorKind::Assembly, map.source_id + ": " + std::to_string(segment_predictions.size()) +
                                         " segment predictions for " + std::to_string(map.segment_count()) +
                                         " mapped segments");
  PredictionVector out;
  out.hop = hop;
  out.source_id = map.source_id;
  out.p.assign(map.total_frames, 0.0f);
  for (std::size_t j = 0; j < map.segment_count(); ++j) {
    const auto& pred = segment_predictions[j];
    if (pred.size() != map.segment_frames)
      throw Error(ErrorKind::Assembly, map.source_id + ": segment " + std::to_string(j) + " has " +
                                           std::to_string(pred.size()) + " frames");
    std::copy(pred.begin(), pred.end(), out.p.begin() + static_cast<std::ptrdiff_t>(map.starts[j]));
  }
  return out;
}

TargetVector binarize(const PredictionVector& p, double threshold) {
  if (threshold < 0.0 || threshold > 1.0) throw Error(ErrorKind::Validation, "threshold outside [0, 1]");
  TargetVector y;
  y.hop = p.hop;
  y.values.resize(p.size());
  for (std::size_t t = 0; t < p.size(); ++t) y.values[t] = static_cast<double>(p.p[t]) > threshold ? 1 : 0;
  return y;
}

void save_predictions(const std::filesystem::path& path, std::span<const PredictionVector> predictions,
                      std::optional<double> threshold) {
  std::ostringstream out;
  out << "source_id,frame_index,probability" << (threshold ? ",label" : "") << '\n';
  for (const PredictionVector& pv : predictions) {
    const TargetVector labels = threshold ? binarize(pv, *threshold) : TargetVector{};
    for (std::size_t t = 0; t < pv.size(); ++t) {
      out << pv.source_id << ',' << t << ',' << detail::format_float(pv.p[t]);
      if (threshold) out << ',' << static_cast<int>(labels.values[t]);
      out << '\n';
    }
  }
  detail::write_text_file(path, out.str());
}

std::vector<PredictionVector> load_predictions(const std::filesystem::path& path, double hop) {
  std::istringstream in(detail::read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Format, path.string() + ": missing header");
  const auto header = detail::split_csv_line(detail::strip_bom(line));
  if (header.size() < 3 || header[0] != "source_id" || header[1] != "frame_index" || header[2] != "probability")
    throw Error(ErrorKind::Format, path.string() + ": header must start with source_id,frame_index,probability");
  std::vector<PredictionVector> out;
  std::map<std::string, std::size_t> index;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    const std::string where = path.string() + " row " + std::to_string(row);
    if (fields.size() < 3) throw Error(ErrorKind::Parse, where + ": expected at least 3 fields");
    const auto frame = detail::parse_double(fields[1]);
    const auto prob = detail::parse_double(fields[2]);
    if (!frame || !prob) throw Error(ErrorKind::Parse, where + ": non-numeric field");
    auto [it, inserted] = index.try_emplace(fields[0], out.size());
    if (inserted) out.push_back(PredictionVector{{}, hop, fields[0]});
    PredictionVector& pv = out[it->second];
    if (*frame != static_cast<double>(pv.p.size()))
      throw Error(ErrorKind::Validation, where + ": frame_index out of sequence");
    if (*prob < 0.0 || *prob > 1.0) throw Error(ErrorKind::Validation, where + ": probability outside [0, 1]");
    pv.p.push_back(static_cast<float>(*prob));
  }
  return out;
}

}  // namespace rcs
