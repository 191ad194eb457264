// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "rcs/error.hpp"
#include "rcs/eval.hpp"
#include "support/eval_oracle.hpp"
#include "support/helpers.hpp"

using namespace rcs;
using namespace rcs::testing;

namespace {

PredictionVector pv(std::vector<float> p, const std::string& id = "a") { return {std::move(p), 0.02, id}; }

TargetVector tv(std::vector<std::uint8_t> y) { return {std::move(y), 0.02}; }

}  // namespace

TEST_CASE("pool_max examples") {
  const std::vector<float> a{0, 0, 1, 0};
  CHECK(pool_max(std::span<const float>(a), 2) == std::vector<float>{0, 1});
  std::vector<std::uint8_t> b(500, 0);
  b[300] = 1;
  CHECK(pool_max(std::span<const std::uint8_t>(b), 250) == std::vector<std::uint8_t>{0, 1});
  CHECK(pool_max(std::span<const float>(a), 1) == a);
  const std::vector<float> c{0.1f, 0.2f, 0.3f, 0.9f, 0.5f};
  CHECK(pool_max(std::span<const float>(c), 2) == std::vector<float>{0.2f, 0.9f, 0.5f});
  CHECK(error_kind([&] { pool_max(std::span<const float>(c), 0); }) == ErrorKind::Validation);
}

TEST_CASE("average precision examples") {
  const std::vector<float> perfect{0.9f, 0.8f, 0.3f, 0.1f};
  const std::vector<std::uint8_t> yp{1, 1, 0, 0};
  CHECK(average_precision(perfect, yp) == 1.0);
  const std::vector<float> p{0.9f, 0.8f, 0.1f};
  const std::vector<std::uint8_t> y{1, 0, 1};
  CHECK(average_precision(p, y) == doctest::Approx(0.8333333333).epsilon(1e-9));
  for (std::size_t n : {1u, 2u, 7u, 100u}) {
    std::vector<float> s(n);
    std::vector<std::uint8_t> l(n, 0);
    for (std::size_t i = 0; i < n; ++i) s[i] = 1.0f - static_cast<float>(i) / n;
    l[n - 1] = 1;
    CHECK(average_precision(s, l) == doctest::Approx(1.0 / n));
  }
  const std::vector<std::uint8_t> none{0, 0, 0};
  CHECK(error_kind([&] { average_precision(p, none); }) == ErrorKind::UndefinedMetric);
  const std::vector<std::uint8_t> short_y{1};
  CHECK(error_kind([&] { average_precision(p, short_y); }) == ErrorKind::Shape);
}

TEST_CASE("f1 examples") {
  const std::vector<std::uint8_t> y{1, 0, 1, 0};
  CHECK(f1_score(y, y) == 1.0);
  const std::vector<std::uint8_t> yhat{1, 1, 0, 0};
  CHECK(f1_score(yhat, y) == 0.5);
  const std::vector<std::uint8_t> zero{0, 0, 0, 0};
  CHECK(f1_score(zero, y) == 0.0);
  CHECK(f1_score(zero, zero) == 0.0);
  const auto c = confusion(yhat, y);
  CHECK(c.tp == 1);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
  CHECK(c.tn == 1);
}

TEST_CASE("AP and F1 agree with brute-force oracles on random vectors") {
  Gen g(1);
  for (int it = 0; it < 200; ++it) {
    const std::size_t n = random_size(g, 1, 300);
    auto p = random_floats(g, n, 0.0f, 1.0f);
    // Coarse quantisation creates ties.
    if (it % 2 == 0)
      for (auto& v : p) v = std::round(v * 10.0f) / 10.0f;
    auto y = random_labels(g, n, 0.2);
    y[random_size(g, 0, n - 1)] = 1;
    CHECK(std::abs(average_precision(p, y) - oracle_ap(p, y)) < 1e-9);
    const auto yhat = oracle_binarize(p, 0.5);
    CHECK(std::abs(f1_score(yhat, y) - oracle_f1(yhat, y)) < 1e-12);
  }
}

TEST_CASE("AP is invariant under strictly monotone score transforms") {
  Gen g(2);
  for (int it = 0; it < 50; ++it) {
    const std::size_t n = random_size(g, 2, 200);
    const auto p = random_floats(g, n, 0.0f, 1.0f);
    auto y = random_labels(g, n, 0.3);
    y[0] = 1;
    std::vector<float> q(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = std::sqrt(p[i]) * 0.5f + 0.1f;
    CHECK(average_precision(p, y) == doctest::Approx(average_precision(q, y)).epsilon(1e-12));
  }
}

TEST_CASE("evaluate: identical predictions and targets score 1 everywhere") {
  std::vector<std::uint8_t> y(1000, 0);
  for (std::size_t t = 100; t < 130; ++t) y[t] = 1;
  std::vector<float> p(y.begin(), y.end());
  const std::vector<PredictionVector> preds{pv(p)};
  const std::vector<TargetVector> targets{tv(y)};
  const auto r = evaluate(preds, targets, 0.5, 0.02);
  CHECK(r.frame.ap == 1.0);
  CHECK(r.pooled.ap == 1.0);
  CHECK(r.ap_avg == 1.0);
  CHECK(r.frame.f1 == 1.0);
  CHECK(r.pooled.f1 == 1.0);
  CHECK(r.f1_avg == 1.0);
  CHECK(r.pooled.pool_frames == 250);
  CHECK(r.pooled.counts.tp + r.pooled.counts.fp + r.pooled.counts.fn + r.pooled.counts.tn == 4);
}

TEST_CASE("evaluate equals the oracle and is concatenation invariant") {
  Gen g(3);
  for (int it = 0; it < 30; ++it) {
    std::vector<PredictionVector> preds;
    std::vector<TargetVector> targets;
    std::vector<float> all_p;
    std::vector<std::uint8_t> all_y;
    const std::size_t k = random_size(g, 1, 4);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t n = random_size(g, 1, 700);
      auto p = random_floats(g, n, 0.0f, 1.0f);
      auto y = random_labels(g, n, 0.05);
      all_p.insert(all_p.end(), p.begin(), p.end());
      all_y.insert(all_y.end(), y.begin(), y.end());
      preds.push_back(pv(p, "s" + std::to_string(i)));
      targets.push_back(tv(y));
    }
    all_y[0] = 1;
    targets[0].values[0] = 1;
    const auto r = evaluate(preds, targets, 0.5, 0.02);
    CHECK(std::abs(r.frame.ap - oracle_ap(all_p, all_y)) < 1e-9);
    const auto pp = oracle_pool(all_p, 250);
    const auto py = oracle_pool(all_y, 250);
    CHECK(std::abs(r.pooled.ap - oracle_ap(pp, py)) < 1e-9);
    CHECK(std::abs(r.frame.f1 - oracle_f1(oracle_binarize(all_p, 0.5), all_y)) < 1e-12);
    CHECK(std::abs(r.pooled.f1 - oracle_f1(oracle_binarize(pp, 0.5), py)) < 1e-12);
    CHECK(r.ap_avg == (r.frame.ap + r.pooled.ap) / 2.0);
    CHECK(r.f1_avg == (r.frame.f1 + r.pooled.f1) / 2.0);

    const std::vector<PredictionVector> one{pv(all_p)};
    const std::vector<TargetVector> one_t{tv(all_y)};
    const auto s = evaluate(one, one_t, 0.5, 0.02);
    CHECK(s.frame.ap == r.frame.ap);
    CHECK(s.frame.counts.tp == r.frame.counts.tp);
    CHECK(s.pooled.ap == r.pooled.ap);
  }
}

TEST_CASE("pooling never lowers recall of short events") {
  Gen g(4);
  for (int it = 0; it < 50; ++it) {
    const std::size_t n = random_size(g, 250, 2000);
    std::vector<std::uint8_t> y(n, 0);
    const std::size_t start = random_size(g, 0, n - 10);
    for (std::size_t t = start; t < std::min(n, start + random_size(g, 1, 200)); ++t) y[t] = 1;
    const auto p = random_floats(g, n, 0.0f, 1.0f);
    const std::vector<PredictionVector> preds{pv(p)};
    const std::vector<TargetVector> targets{tv(y)};
    const auto r = evaluate(preds, targets, 0.5, 0.02);
    const auto recall = [](const Confusion& c) { return double(c.tp) / double(c.tp + c.fn); };
    CHECK(recall(r.pooled.counts) >= recall(r.frame.counts));
    CHECK(r.frame.f1 >= 0.0);
    CHECK(r.pooled.f1 <= 1.0);
  }
}

TEST_CASE("evaluate errors and report serialisation") {
  const std::vector<PredictionVector> preds{pv({0.1f, 0.9f})};
  const std::vector<TargetVector> bad{tv({1})};
  CHECK(error_kind([&] { evaluate(preds, bad, 0.5, 0.02); }) == ErrorKind::Shape);
  const std::vector<TargetVector> none{tv({0, 0})};
  CHECK(error_kind([&] { evaluate(preds, none, 0.5, 0.02); }) == ErrorKind::UndefinedMetric);

  const std::vector<TargetVector> ok{tv({0, 1})};
  const auto r = evaluate(preds, ok, 0.5, 0.02);
  const auto j = to_json(r);
  for (const char* k : {"ap_frame", "ap_5s", "ap_avg", "f1_frame", "f1_5s", "f1_avg", "counts_frame", "threshold"})
    CHECK(j.contains(k));
  const auto header = eval_csv_header();
  const auto row = eval_csv_row(r);
  CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));
}
