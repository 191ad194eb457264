// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "rcs/error.hpp"
#include "rcs/resample.hpp"
#include "support/helpers.hpp"

using namespace rcs;
using namespace rcs::testing;

namespace {

std::shared_ptr<const Segment> make_segment(const std::string& id, std::size_t start, bool positive,
                                            bool with_target = true) {
  auto s = std::make_shared<Segment>();
  s->frames = 4;
  s->bands = 1;
  s->patch = {static_cast<float>(start), 0, 0, 0};
  if (with_target) s->target = std::vector<std::uint8_t>{0, 0, static_cast<std::uint8_t>(positive ? 1 : 0), 0};
  s->source_id = id;
  s->start_frame = start;
  return s;
}

SegmentBatch make_batch(const std::string& id, std::size_t pos, std::size_t neg) {
  SegmentBatch b;
  std::size_t start = 0;
  for (std::size_t i = 0; i < pos; ++i) b.segments.push_back(make_segment(id, 4 * start++, true));
  for (std::size_t i = 0; i < neg; ++i) b.segments.push_back(make_segment(id, 4 * start++, false));
  return b;
}

std::size_t half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); }

}  // namespace

TEST_CASE("split_pos_neg") {
  const auto b = make_batch("a", 3, 7);
  const auto s = split_pos_neg(b);
  CHECK(s.positives.size() == 3);
  CHECK(s.negatives.size() == 7);
  SegmentBatch missing;
  missing.segments.push_back(make_segment("a", 0, false, false));
  CHECK(error_kind([&] { split_pos_neg(missing); }) == ErrorKind::Usage);
}

TEST_CASE("kept negative count rounds half up") {
  CHECK(kept_negative_count(100, 0.75) == 25);
  CHECK(kept_negative_count(10, 0.95) == 1);   // 0.5 -> 1
  CHECK(kept_negative_count(3, 0.5) == 2);     // 1.5 -> 2
  CHECK(kept_negative_count(7, 1.0) == 0);
  CHECK(kept_negative_count(7, 0.0) == 7);
}

TEST_CASE("resample examples") {
  const std::vector<SegmentBatch> per{make_batch("a", 3, 100)};
  ResampleConfig c;
  c.undersample_fraction = 0.75;
  c.oversample_duplications = 2;
  const auto out = resample(per, c);
  const auto s = split_pos_neg(out);
  CHECK(s.positives.size() == 9);
  CHECK(s.negatives.size() == 25);

  c.undersample_fraction = 0.0;
  c.oversample_duplications = 0;
  const auto same = resample(per, c);
  std::multiset<const Segment*> x, y;
  for (const auto& p : per[0].segments) x.insert(p.get());
  for (const auto& p : same.segments) y.insert(p.get());
  CHECK(x == y);
}

TEST_CASE("resample properties over random per-signal batches") {
  Gen g(1);
  for (int it = 0; it < 100; ++it) {
    std::vector<SegmentBatch> per;
    std::size_t pos_before = 0, neg_expect = 0;
    ResampleConfig c;
    c.undersample_fraction = std::uniform_real_distribution<double>(0.0, 1.0)(g);
    c.oversample_duplications = static_cast<int>(random_size(g, 0, 16));
    c.seed = g();
    const std::size_t signals = random_size(g, 1, 5);
    std::map<const Segment*, std::size_t> original;
    for (std::size_t i = 0; i < signals; ++i) {
      const std::size_t p = random_size(g, 0, 6);
      const std::size_t n = random_size(g, 0, 60);
      per.push_back(make_batch("s" + std::to_string(i), p, n));
      pos_before += p;
      neg_expect += half_up((1.0 - c.undersample_fraction) * static_cast<double>(n));
      for (const auto& s : per.back().segments) original[s.get()] = 0;
    }
    const auto out = resample(per, c);
    const auto s = split_pos_neg(out);
    CHECK(s.positives.size() == (c.oversample_duplications + 1) * pos_before);
    CHECK(s.negatives.size() == neg_expect);

    // Contents untouched: every output segment is one of the inputs; negatives appear at most once.
    for (const auto& seg : out.segments) {
      REQUIRE(original.contains(seg.get()));
      ++original[seg.get()];
    }
    for (const auto& [seg, n] : original) {
      if (seg->positive())
        CHECK(n == static_cast<std::size_t>(c.oversample_duplications + 1));
      else
        CHECK(n <= 1);
    }

    // Same seed, same order.
    const auto again = resample(per, c);
    REQUIRE(again.size() == out.size());
    for (std::size_t k = 0; k < out.size(); ++k) CHECK(again.segments[k].get() == out.segments[k].get());
  }
}

TEST_CASE("different seeds change the selection") {
  const std::vector<SegmentBatch> per{make_batch("a", 2, 200)};
  ResampleConfig c;
  c.undersample_fraction = 0.5;
  c.seed = 1;
  const auto a = resample(per, c);
  c.seed = 2;
  const auto b = resample(per, c);
  bool differ = false;
  for (std::size_t k = 0; k < a.size(); ++k) differ |= a.segments[k].get() != b.segments[k].get();
  CHECK(differ);
}

TEST_CASE("resample config validation") {
  ResampleConfig c;
  c.undersample_fraction = 1.5;
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::Config);
  c = {};
  c.oversample_duplications = -1;
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::Config);
}
