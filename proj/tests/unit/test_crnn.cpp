// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <numeric>

#include "rcs/crnn/checkpoint.hpp"
#include "rcs/crnn/train.hpp"
#include "rcs/error.hpp"
#include "support/gradcheck.hpp"
#include "support/helpers.hpp"

using namespace rcs;
using namespace rcs::crnn;
using namespace rcs::testing;

namespace {

constexpr FrequencyIntegration kIntegrations[] = {FrequencyIntegration::Flatten, FrequencyIntegration::GlobalAverage,
                                                  FrequencyIntegration::GlobalMax};
constexpr LossVariant kLosses[] = {LossVariant::Bce, LossVariant::WeightedBce, LossVariant::Focal,
                                   LossVariant::WeightedFocal};

ModelConfig small_config(std::size_t frames, std::size_t bands) {
  ModelConfig c;
  c.conv_depth = 1;
  c.channel_size = 4;
  c.pool_size = 2;
  c.input_frames = frames;
  c.input_bands = bands;
  return c;
}

// Separable toy task: frames whose band 1 carries energy are positive.
SegmentBatch toy_batch(Gen& g, std::size_t count, std::size_t frames, std::size_t bands) {
  SegmentBatch b;
  std::normal_distribution<float> noise(0.0f, 0.3f);
  for (std::size_t k = 0; k < count; ++k) {
    auto s = std::make_shared<Segment>();
    s->frames = frames;
    s->bands = bands;
    s->patch.resize(frames * bands);
    s->target = std::vector<std::uint8_t>(frames, 0);
    const std::size_t on = random_size(g, 0, frames - 4);
    for (std::size_t t = on; t < on + 4; ++t) (*s->target)[t] = 1;
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t f = 0; f < bands; ++f)
        s->patch[t * bands + f] = noise(g) + (((*s->target)[t] && f == 1) ? 2.0f : 0.0f);
    s->source_id = "toy" + std::to_string(k);
    b.segments.push_back(std::move(s));
  }
  return b;
}

}  // namespace

TEST_CASE("model config validation follows the floor-division chain") {
  ModelConfig c;
  c.conv_depth = 4;
  c.pool_size = 5;
  c.input_bands = 39;
  CHECK(c.band_chain() == std::vector<std::size_t>{39, 7, 1, 0, 0});
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::Config);

  c = ModelConfig{};
  c.input_bands = 5;
  c.channel_size = 96;
  CHECK_NOTHROW(c.validate());
  CHECK(c.band_chain() == std::vector<std::size_t>{5, 2, 1});

  c.channel_size = 7;  // odd with bidirectional
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::Config);
  c = ModelConfig{};
  c.pool_size = 1;
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::Config);
  c = ModelConfig{};
  c.conv_depth = 0;
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::Config);
  CHECK(error_kind([] { parse_frequency_integration("median"); }) == ErrorKind::Config);
  CHECK(parse_frequency_integration("gap") == FrequencyIntegration::GlobalAverage);
}

TEST_CASE("model config JSON round-trip") {
  ModelConfig c = small_config(12, 9);
  c.freq_integration = FrequencyIntegration::GlobalMax;
  c.bidirectional = false;
  CHECK(model_config_from_json(to_json(c)) == c);
}

TEST_CASE("build_model: output bias is the log odds of the training frames") {
  const auto m = build_model(small_config(8, 6), 1000, 99000, 1);
  CHECK(m.tensor("out.bias").data[0] == doctest::Approx(std::log(1.0 / 99.0)).epsilon(1e-6));
  CHECK(std::log(1.0 / 99.0) == doctest::Approx(-4.595).epsilon(1e-3));
  CHECK(m.tensor("bn0.scale").data == std::vector<float>(4, 1.0f));
  CHECK(m.tensor("bn0.shift").data == std::vector<float>(4, 0.0f));
  CHECK(m.tensor("conv0.bias").data == std::vector<float>(4, 0.0f));
  const float bound = 1.0f / std::sqrt(25.0f);
  for (float w : m.tensor("conv0.kernel").data) CHECK(std::abs(w) <= bound);
  CHECK(error_kind([] { build_model(small_config(8, 6), 0, 10, 1); }) == ErrorKind::Config);

  // With every pre-activation zeroed the output is sigmoid(bias) = positive fraction.
  auto z = build_model(small_config(8, 6), 30, 70, 2);
  z.tensor("out.weight").data.assign(4, 0.0f);
  const std::vector<float> x(8 * 6, 0.5f);
  for (float p : z.forward(x, 1, Mode::Inference)) CHECK(p == doctest::Approx(0.3).epsilon(1e-5));
}

TEST_CASE("forward: 500x80 input through depth 2, pool 2, 96 channels, GAP") {
  ModelConfig c;
  const auto m = build_model(c, 1, 1, 3);
  CHECK(c.band_chain() == std::vector<std::size_t>{80, 40, 20});
  CHECK(c.integrated_size() == 96);
  Gen g(3);
  const auto x = random_floats(g, 500 * 80, -2.0f, 2.0f);
  ForwardCache<float> cache;
  const auto p = m.forward(x, 1, Mode::Inference, &cache);
  REQUIRE(p.size() == 500);
  CHECK(cache.activations.back().size() == 500 * 20 * 96);
  CHECK(cache.features.size() == 500 * 96);
  CHECK(cache.hidden.size() == 500 * 96);
  double mean = 0.0;
  for (float v : p) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
    mean += v;
  }
  CHECK(mean / 500.0 == doctest::Approx(0.5).epsilon(0.1));
  CHECK(error_kind([&] { m.forward(std::span(x).first(100), 1, Mode::Inference); }) == ErrorKind::Shape);
}

TEST_CASE("forward preserves the time axis for every tiny config") {
  Gen g(4);
  for (auto integ : kIntegrations)
    for (bool bidi : {false, true})
      for (std::size_t frames : {1u, 3u, 17u}) {
        auto c = small_config(frames, 7);
        c.freq_integration = integ;
        c.bidirectional = bidi;
        const auto m = build_model(c, 1, 3, 5);
        const auto x = random_floats(g, 2 * frames * 7, -1.0f, 1.0f);
        CHECK(m.forward(x, 2, Mode::Inference).size() == 2 * frames);
        CHECK(m.forward(x, 2, Mode::Training).size() == 2 * frames);
      }
}

TEST_CASE("GAP and GMP are invariant to band order at the integration point") {
  // Mirroring the input bands and the kernel's frequency taps mirrors the pooled volume,
  // which mean and max over bands cannot see.
  Gen g(5);
  for (auto integ : {FrequencyIntegration::GlobalAverage, FrequencyIntegration::GlobalMax}) {
    auto c = small_config(10, 8);
    c.freq_integration = integ;
    auto a = build_model(c, 1, 1, 6).cast<double>();
    auto b = a;
    auto& ka = a.tensor("conv0.kernel");
    auto& kb = b.tensor("conv0.kernel");
    const std::size_t co = 4;
    for (std::size_t dt = 0; dt < 5; ++dt)
      for (std::size_t df = 0; df < 5; ++df)
        for (std::size_t o = 0; o < co; ++o) kb.data[(dt * 5 + (4 - df)) * co + o] = ka.data[(dt * 5 + df) * co + o];
    std::vector<double> x(2 * 10 * 8), xr(x.size());
    std::normal_distribution<double> d;
    for (auto& v : x) v = d(g);
    for (std::size_t t = 0; t < 20; ++t)
      for (std::size_t f = 0; f < 8; ++f) xr[t * 8 + f] = x[t * 8 + (7 - f)];
    for (auto mode : {Mode::Inference, Mode::Training}) {
      const auto pa = a.forward(x, 2, mode);
      const auto pb = b.forward(xr, 2, mode);
      for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == doctest::Approx(pb[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("loss examples") {
  LossConfig bce;
  CHECK(frame_loss(bce, 0.5, 1) == doctest::Approx(0.6931).epsilon(1e-4));
  LossConfig focal{LossVariant::Focal, 2.0};
  CHECK(frame_loss(focal, 0.5, 1) == doctest::Approx(0.1733).epsilon(1e-3));
  CHECK(frame_loss(focal, 0.9, 0) == doctest::Approx(1.8651).epsilon(1e-4));
  const auto w = with_class_weights({LossVariant::WeightedBce}, 10, 1000);
  CHECK(w.w1 == doctest::Approx(50.0));
  CHECK(w.w0 == doctest::Approx(0.5051).epsilon(1e-4));
  CHECK(error_kind([] { with_class_weights({LossVariant::WeightedBce}, 0, 1000); }) == ErrorKind::Config);
  CHECK(error_kind([] { parse_loss_variant("hinge"); }) == ErrorKind::Config);
  // Clamp keeps log finite.
  CHECK(frame_loss(bce, 0.0, 1) == doctest::Approx(-std::log(1e-7)));
  CHECK(frame_loss_grad_logit(bce, 1.0, 1) == 0.0);
}

TEST_CASE("loss identities: focal gamma 0 and balanced weighted BCE equal BCE") {
  Gen g(7);
  LossConfig bce;
  LossConfig f0{LossVariant::Focal, 0.0};
  const auto wb = with_class_weights({LossVariant::WeightedBce}, 50, 100);
  const auto wf0 = with_class_weights({LossVariant::WeightedFocal, 0.0}, 50, 100);
  CHECK(wb.w0 == 1.0);
  CHECK(wb.w1 == 1.0);
  const auto p = random_floats(g, 500, 0.0f, 1.0f);
  for (float v : p)
    for (int y : {0, 1}) {
      CHECK(frame_loss(f0, v, y) == frame_loss(bce, v, y));
      CHECK(frame_loss(wb, v, y) == frame_loss(bce, v, y));
      CHECK(frame_loss(wf0, v, y) == frame_loss(bce, v, y));
      CHECK(frame_loss_grad_logit(f0, v, y) == doctest::Approx(frame_loss_grad_logit(bce, v, y)).epsilon(1e-12));
    }
}

TEST_CASE("loss gradient with respect to the logit matches finite differences") {
  for (auto variant : kLosses) {
    LossConfig c{variant, 2.0, 0.7, 1.9};
    for (double z = -4.0; z <= 4.0; z += 0.37)
      for (int y : {0, 1}) {
        const double h = 1e-6;
        const auto L = [&](double zz) { return frame_loss(c, 1.0 / (1.0 + std::exp(-zz)), y); };
        const double numeric = (L(z + h) - L(z - h)) / (2 * h);
        CHECK(frame_loss_grad_logit(c, 1.0 / (1.0 + std::exp(-z)), y) == doctest::Approx(numeric).epsilon(1e-6));
      }
  }
}

TEST_CASE("early stopping: patience 3 over [1.0, 0.9, 0.95, 0.96, 0.97]") {
  EarlyStopping es(3);
  const double losses[] = {1.0, 0.9, 0.95, 0.96, 0.97};
  std::size_t stopped_after = 0;
  for (std::size_t e = 0; e < 5; ++e) {
    es.update(losses[e]);
    if (es.should_stop()) {
      stopped_after = e + 1;
      break;
    }
  }
  CHECK(stopped_after == 5);
  CHECK(es.best_epoch() == 2);
  CHECK(es.best_loss() == 0.9);

  EarlyStopping eq(1);
  CHECK(eq.update(1.0));
  CHECK_FALSE(eq.update(1.0));  // equal is not an improvement
  CHECK(eq.should_stop());
}

TEST_CASE("gradient check, 32-bit: every loss x integration x direction x mode") {
  int combos = 0;
  for (auto loss : kLosses)
    for (auto integ : kIntegrations)
      for (bool bidi : {false, true})
        for (auto mode : {Mode::Training, Mode::Inference}) {
          const auto r = gradient_check<float>(tiny_config(integ, bidi), {loss, 2.0}, mode, 100 + combos);
          INFO("loss=" << to_string(loss) << " integration=" << to_string(integ) << " bidi=" << bidi
                       << " mode=" << (mode == Mode::Training ? "train" : "infer") << " worst=" << r.worst);
          CHECK(r.max_rel_error < 1e-3);
          CHECK(r.tensors.size() >= 9);
          ++combos;
        }
  CHECK(combos == 48);
}

TEST_CASE("gradient check, 64-bit") {
  int k = 0;
  for (auto loss : kLosses)
    for (auto integ : kIntegrations)
      for (bool bidi : {false, true})
        for (auto mode : {Mode::Training, Mode::Inference}) {
          const auto r = gradient_check<double>(tiny_config(integ, bidi), {loss, 2.0}, mode, 900 + k++);
          for (const auto& t : r.tensors) {
            INFO("loss=" << to_string(loss) << " integration=" << to_string(integ) << " bidi=" << bidi
                         << " tensor=" << t.name);
            if (mode == Mode::Training && t.name == "conv0.bias") {
              // Batch statistics cancel the conv bias exactly: both gradients are rounding noise.
              CHECK(t.analytic_norm < 1e-9);
              CHECK(t.numeric_norm < 1e-8);
            } else {
              CHECK(t.rel_error < 1e-6);
            }
          }
        }
}

TEST_CASE("training lowers the loss and is bit-reproducible") {
  Gen g(8);
  const auto train_set = toy_batch(g, 24, 16, 4);
  const auto val_set = toy_batch(g, 8, 16, 4);
  auto c = small_config(16, 4);
  const auto [pos, total] = train_set.frame_counts();
  TrainConfig tc;
  tc.batch_size = 8;
  tc.max_epochs = 5;
  tc.early_stop_patience = 10;
  tc.learning_rate = 1e-2;
  tc.seed = 9;
  const LossConfig loss = resolve_loss({LossVariant::Bce}, train_set);

  auto run = [&] {
    auto m = build_model(c, pos, total - pos, 10);
    const auto h = train(m, train_set, val_set, loss, tc);
    return std::pair{std::move(m), h};
  };
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  auto [m1, h1] = run();
  omp_set_num_threads(std::max(saved, 2));
  auto [m2, h2] = run();
  omp_set_num_threads(saved);

  REQUIRE(h1.epochs.size() == 5);
  for (std::size_t e = 1; e < 5; ++e) CHECK(h1.epochs[e].train_loss < h1.epochs[e - 1].train_loss);
  CHECK(m1 == m2);
  for (std::size_t e = 0; e < 5; ++e) CHECK(h1.epochs[e].val_loss == h2.epochs[e].val_loss);
  CHECK(h1.best_val_loss == doctest::Approx(evaluate_loss(m1, val_set, loss)).epsilon(1e-6));

  const auto preds = predict(m1, val_set, 3);
  REQUIRE(preds.size() == val_set.size());
  for (const auto& p : preds) CHECK(p.size() == 16);
}

TEST_CASE("train rejects empty batches, missing targets and wrong shapes") {
  Gen g(11);
  const auto good = toy_batch(g, 4, 16, 4);
  auto m = build_model(small_config(16, 4), 1, 3, 1);
  TrainConfig tc;
  tc.max_epochs = 1;
  CHECK(error_kind([&] { train(m, SegmentBatch{}, good, {}, tc); }) == ErrorKind::Usage);
  const auto wrong = toy_batch(g, 4, 12, 4);
  CHECK(error_kind([&] { train(m, wrong, good, {}, tc); }) == ErrorKind::Shape);
  tc.early_stop_patience = 0;
  CHECK(error_kind([&] { tc.validate(); }) == ErrorKind::Config);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  TempDir dir("ckpt");
  Gen g(12);
  for (auto integ : kIntegrations) {
    auto c = small_config(9, 6);
    c.freq_integration = integ;
    auto m = build_model(c, 3, 7, 13);
    // Non-trivial running statistics.
    const auto x = random_floats(g, 2 * 9 * 6, -1.0f, 1.0f);
    ForwardCache<float> cache;
    m.forward(x, 2, Mode::Training, &cache);
    m.update_running_stats(cache);
    save_checkpoint(m, dir / "m.ckpt");
    const auto back = load_checkpoint(dir / "m.ckpt");
    CHECK(back == m);
    CHECK(back.config() == c);
    CHECK(back.running_stats_initialised());
    const auto pa = m.forward(x, 2, Mode::Inference);
    const auto pb = back.forward(x, 2, Mode::Inference);
    CHECK(pa == pb);
  }
}

TEST_CASE("checkpoint load errors") {
  const auto m = build_model(small_config(9, 6), 1, 1, 1);
  const auto bytes = serialize_checkpoint(m);
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    INFO("cut=" << cut);
    CHECK(error_kind([&] { parse_checkpoint(std::span(bytes).first(cut), "t"); }) == ErrorKind::Load);
  }
  auto bad = bytes;
  bad[0] = std::byte{'X'};
  CHECK(error_kind([&] { parse_checkpoint(bad, "t"); }) == ErrorKind::Load);
  auto trailing = bytes;
  trailing.push_back(std::byte{0});
  CHECK(error_kind([&] { parse_checkpoint(trailing, "t"); }) == ErrorKind::Load);

  auto other = small_config(9, 6);
  other.channel_size = 6;
  const auto text = error_text([&] { parse_checkpoint(bytes, "t", &other); });
  CHECK(error_kind([&] { parse_checkpoint(bytes, "t", &other); }) == ErrorKind::Shape);
  CHECK(text.find("conv0.kernel") != std::string::npos);

  TempDir dir("ckpt2");
  CHECK(error_kind([&] { load_checkpoint(dir / "missing.ckpt"); }).has_value());
}
