// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion with the measured value and its tolerance.
// Usage: rcs_acceptance [criterion numbers...]   (default: all)
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rcs/crnn/checkpoint.hpp"
#include "rcs/crnn/loss.hpp"
#include "rcs/crnn/model.hpp"
#include "rcs/denoise.hpp"
#include "rcs/detail/random.hpp"
#include "rcs/eval.hpp"
#include "rcs/features.hpp"
#include "rcs/harness/config.hpp"
#include "rcs/harness/experiment.hpp"
#include "rcs/harness/grid.hpp"
#include "rcs/pipeline.hpp"
#include "rcs/resample.hpp"
#include "rcs/synthgen.hpp"
#include "support/eval_oracle.hpp"
#include "support/gradcheck.hpp"
#include "support/helpers.hpp"

using namespace rcs;
using namespace rcs::harness;
using namespace rcs::testing;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// In-memory split from a synthetic corpus, peak-normalised like load_corpus.
Split synth_split(const std::string& name, SynthConfig c, const FeatureConfig& fc) {
  c.id_prefix = name + "_";
  auto corpus = generate_corpus(c);
  Corpus k;
  for (auto& r : corpus.recordings) k.recordings.push_back(peak_normalize(std::move(r)));
  k.events = std::move(corpus.events);
  return featurize(name, k, fc, c.classes.at(0).label);
}

Dataset synth_dataset(const SynthConfig& base, std::size_t n_train, std::size_t n_val, std::size_t n_test,
                      std::uint64_t seed, const FeatureConfig& fc = {}) {
  auto part = [&](const std::string& name, std::size_t n) {
    auto c = base;
    c.n_recordings = n;
    c.seed = detail::hash_seed(seed, "split/" + name);
    return synth_split(name, c, fc);
  };
  return {part("train", n_train), part("val", n_val), part("test", n_test)};
}

// ---------------------------------------------------------------------------------------------

Verdict metric_oracles() {
  Gen g(2024);
  double worst = 0.0;
  for (int it = 0; it < 200; ++it) {
    const std::size_t n = random_size(g, 1, 1000);
    auto p = random_floats(g, n, 0.0f, 1.0f);
    if (it % 3 == 0)
      for (auto& v : p) v = std::round(v * 20.0f) / 20.0f;  // ties
    auto y = random_labels(g, n, std::uniform_real_distribution<double>(0.001, 0.5)(g));
    y[random_size(g, 0, n - 1)] = 1;
    const std::vector<PredictionVector> preds{{p, 0.02, "r"}};
    const std::vector<TargetVector> targets{{y, 0.02}};
    const auto r = evaluate(preds, targets, 0.5, 0.02);
    const auto pp = oracle_pool(p, 250);
    const auto py = oracle_pool(y, 250);
    worst = std::max({worst, std::abs(r.frame.ap - oracle_ap(p, y)), std::abs(r.pooled.ap - oracle_ap(pp, py)),
                      std::abs(r.frame.f1 - oracle_f1(oracle_binarize(p, 0.5), y)),
                      std::abs(r.pooled.f1 - oracle_f1(oracle_binarize(pp, 0.5), py))});
  }
  return {worst <= 1e-9, fmt("200 vectors, max |metric - oracle| = %.2e (tol 1e-9)", worst)};
}

Verdict gradient_checks() {
  using crnn::FrequencyIntegration;
  using crnn::LossVariant;
  double worst = 0.0;
  std::string where;
  int n = 0;
  for (auto loss : {LossVariant::Bce, LossVariant::WeightedBce, LossVariant::Focal, LossVariant::WeightedFocal})
    for (auto integ : {FrequencyIntegration::Flatten, FrequencyIntegration::GlobalAverage, FrequencyIntegration::GlobalMax})
      for (bool bidi : {true, false})
        for (auto mode : {crnn::Mode::Training, crnn::Mode::Inference}) {
        const auto r = gradient_check<float>(tiny_config(integ, bidi), {loss, 2.0}, mode, 7 + n++);
        if (r.max_rel_error >= worst) {
          worst = r.max_rel_error;
          where = std::string(crnn::to_string(loss)) + "/" + std::string(crnn::to_string(integ)) +
                  (bidi ? "/bi" : "/uni") + (mode == crnn::Mode::Training ? "/train " : "/infer ") + r.worst;
        }
      }
  return {worst < 1e-3, fmt("%d configs, worst rel. error %.2e at %s (tol 1e-3)", n, worst, where.c_str())};
}

Verdict exact_counts() {
  std::vector<std::string> bad;
  // Segmentation.
  const auto s1500 = plan_segments("a", 1500, 500).starts;
  const auto s1400 = plan_segments("a", 1400, 500).starts;
  const auto s1050 = plan_segments("a", 1050, 500).starts;
  if (s1500 != std::vector<std::size_t>{0, 500, 1000}) bad.push_back("T=1500");
  if (s1400 != std::vector<std::size_t>{0, 500, 900}) bad.push_back("T=1400");
  if (s1050 != std::vector<std::size_t>{0, 500}) bad.push_back("T=1050");

  // Resampling multiplicities per signal.
  Gen g(3);
  for (int it = 0; it < 50; ++it) {
    std::vector<SegmentBatch> per;
    std::size_t pos = 0, neg_expected = 0;
    ResampleConfig rc{std::uniform_real_distribution<double>(0.0, 1.0)(g), static_cast<int>(random_size(g, 0, 16)),
                      g()};
    for (std::size_t i = 0, k = random_size(g, 1, 6); i < k; ++i) {
      SegmentBatch b;
      const std::size_t np = random_size(g, 0, 5), nn = random_size(g, 0, 80);
      for (std::size_t j = 0; j < np + nn; ++j) {
        auto seg = std::make_shared<Segment>();
        seg->frames = 2;
        seg->bands = 1;
        seg->patch = {0.0f, 0.0f};
        seg->target = std::vector<std::uint8_t>{0, static_cast<std::uint8_t>(j < np)};
        seg->source_id = "s" + std::to_string(i);
        b.segments.push_back(seg);
      }
      pos += np;
      neg_expected += static_cast<std::size_t>(std::floor((1.0 - rc.undersample_fraction) * nn + 0.5));
      per.push_back(std::move(b));
    }
    const auto split = split_pos_neg(resample(per, rc));
    if (split.positives.size() != (rc.oversample_duplications + 1) * pos || split.negatives.size() != neg_expected) {
      bad.push_back("resample");
      break;
    }
  }

  // Spectral subtraction: zero means over full windows.
  double worst_mean = 0.0;
  for (int it = 0; it < 20; ++it) {
    auto s = random_spectrogram(g, random_size(g, 50, 400), random_size(g, 1, 8));
    for (auto& v : s.data) v = v * 3.0f + 5.0f;
    const double window = 0.02 * static_cast<double>(random_size(g, 5, 60));
    const auto out = spectral_subtraction(s, window);
    const auto w = static_cast<std::size_t>(std::floor(window / s.hop + 1e-9));
    for (std::size_t start = 0; start + w <= s.frames; start += w)
      for (std::size_t f = 0; f < s.bands; ++f) {
        double m = 0.0;
        for (std::size_t t = start; t < start + w; ++t) m += out.at(t, f);
        worst_mean = std::max(worst_mean, std::abs(m / static_cast<double>(w)));
      }
  }
  if (worst_mean > 1e-6) bad.push_back("spectral subtraction");

  // Standardiser on its own fit corpus.
  std::vector<Spectrogram> corpus;
  for (int i = 0; i < 5; ++i) {
    corpus.push_back(random_spectrogram(g, random_size(g, 10, 300), 6));
    for (auto& v : corpus.back().data) v = v * 4.0f - 2.0f;
  }
  const auto z = fit_standardizer(corpus);
  double sum = 0.0, sq = 0.0, n = 0.0;
  for (const auto& s : corpus)
    for (float v : apply_standardizer(s, z).data) {
      sum += v;
      sq += static_cast<double>(v) * v;
      n += 1.0;
    }
  const double mean = sum / n, sd = std::sqrt(sq / n - mean * mean);
  if (std::abs(mean) > 1e-6 || std::abs(sd - 1.0) > 1e-6) bad.push_back("standardizer");

  std::string which;
  for (const auto& b : bad) which += " " + b;
  return {bad.empty(), fmt("segmentation, resampling, window mean max %.1e, standardizer mean %.1e sd-1 %.1e (tol 1e-6)%s%s",
                           worst_mean, std::abs(mean), std::abs(sd - 1.0), bad.empty() ? "" : "; failed:", which.c_str())};
}

Verdict mask_recovery() {
  // Three events in every recording at a known band; both event styles.
  std::string detail;
  bool pass = true;
  for (auto preset : {drumming_preset(), vocalization_preset()}) {
    auto c = preset;
    c.n_recordings = 30;
    c.recording_seconds = 60.0;
    c.classes[0].events_per_recording = 3;
    c.snr_db = 10.0;
    c.seed = 404;
    const auto split = synth_split("mask", c, {});
    std::vector<AnnotatedSpectrogram> view;
    for (std::size_t i = 0; i < split.spectrograms.size(); ++i)
      view.push_back({&split.spectrograms[i], &split.targets[i], &split.events});
    const DenoiseConfig dc;
    const auto mask = compute_class_mask(view, c.classes[0].label, dc.context_seconds);
    const auto& freqs = split.spectrograms[0].band_frequencies;
    const auto band = band_range(freqs, c.classes[0].band_lo, c.classes[0].band_hi);
    std::size_t above = 0;
    for (auto f : band) above += mask.r[f] > dc.mask_threshold;
    double worst_out = -1.0;
    for (std::size_t f = 0; f < freqs.size(); ++f)
      if (freqs[f] > 2.0 * c.classes[0].band_hi) worst_out = std::max(worst_out, mask.r[f]);
    const double frac = band.empty() ? 0.0 : static_cast<double>(above) / static_cast<double>(band.size());
    pass = pass && frac >= 0.9 && worst_out < dc.mask_threshold;
    detail += fmt("%s: %zu/%zu in-band bins above 0.025 (need >= 90%%), max r above 2x band %.4f (need < 0.025); ",
                  c.classes[0].label.c_str(), above, band.size(), worst_out);
  }
  detail.resize(detail.size() - 2);
  return {pass, detail};
}

Verdict bias_init() {
  Gen g(5);
  double worst = 0.0;
  std::string detail;
  for (double frac : {0.5, 0.05, 0.005}) {
    crnn::ModelConfig c;
    c.input_bands = 5;
    const auto pos = static_cast<std::size_t>(std::llround(frac * 100000));
    const auto m = crnn::build_model(c, pos, 100000 - pos, 17);
    double mean = 0.0;
    const std::size_t batch = 4;
    const auto x = random_floats(g, batch * c.input_frames * c.input_bands, -2.0f, 2.0f);
    for (float p : m.forward(x, batch, crnn::Mode::Inference)) mean += p;
    mean /= static_cast<double>(batch * c.input_frames);
    worst = std::max(worst, std::abs(mean - frac));
    detail += fmt("%.3f -> %.4f, ", frac, mean);
  }
  return {worst <= 0.1, "fraction -> mean output: " + detail + fmt("max deviation %.4f (tol 0.1)", worst)};
}

RunSettings best_drumming_settings(std::uint64_t seed) {
  RunSettings s;
  s.model.conv_depth = 2;
  s.model.pool_size = 2;
  s.model.channel_size = 96;
  s.model.freq_integration = crnn::FrequencyIntegration::GlobalAverage;
  s.model.bidirectional = true;
  s.loss.variant = crnn::LossVariant::Bce;
  s.seed = seed;
  return s;
}

Verdict learnability() {
  auto c = drumming_preset();
  c.recording_seconds = 60.0;
  c.prevalence = 0.005;
  c.snr_db = 10.0;
  DenoiseConfig dc;  // both denoisers
  double sum = 0.0;
  std::string runs;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto data = synth_dataset(c, 10, 3, 5, 600 + seed);
    const auto prepared = prepare(data, dc, "drumming");
    const auto out = run_experiment(prepared, best_drumming_settings(seed));
    sum += out.test.report.ap_avg;
    runs += fmt("%.3f ", out.test.report.ap_avg);
  }
  const double mean = sum / 3.0;
  return {mean >= 0.8, fmt("test AP_avg per seed %smean %.3f (need >= 0.8)", runs.c_str(), mean)};
}

Verdict denoising_helps() {
  auto c = drumming_preset();
  c.recording_seconds = 60.0;
  c.prevalence = 0.005;
  c.snr_db = 10.0;
  c.noise_variance = 3.0;
  double with = 0.0, without = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto data = synth_dataset(c, 10, 3, 5, 700 + seed);
    for (bool denoise : {true, false}) {
      DenoiseConfig dc;
      dc.apply_frequency_removal = denoise;
      dc.apply_spectral_subtraction = denoise;
      auto s = best_drumming_settings(seed);
      s.model.channel_size = 16;
      const auto out = run_experiment(prepare(data, dc, "drumming"), s);
      (denoise ? with : without) += out.test.report.ap_avg / 3.0;
    }
  }
  return {with - without >= 0.05,
          fmt("mean test AP_avg both denoisers %.3f vs none %.3f, gain %.3f (need >= 0.05)", with, without,
              with - without)};
}

Verdict loss_equivalences() {
  using crnn::LossVariant;
  Gen g(8);
  const crnn::LossConfig bce;
  const crnn::LossConfig focal0{LossVariant::Focal, 0.0};
  const auto weighted = crnn::with_class_weights({LossVariant::WeightedBce}, 5000, 10000);
  double worst_focal = 0.0, worst_weighted = 0.0;
  for (float p : random_floats(g, 100000, 0.0f, 1.0f))
    for (int y : {0, 1}) {
      worst_focal = std::max(worst_focal, std::abs(crnn::frame_loss(focal0, p, y) - crnn::frame_loss(bce, p, y)));
      worst_weighted =
          std::max(worst_weighted, std::abs(crnn::frame_loss(weighted, p, y) - crnn::frame_loss(bce, p, y)));
    }
  return {worst_focal <= 1e-7 && worst_weighted <= 1e-7,
          fmt("max |focal(g=0) - bce| %.1e, max |weighted(equal counts) - bce| %.1e (tol 1e-7)", worst_focal,
              worst_weighted)};
}

Verdict determinism() {
  TempDir dir("accept9");
  auto c = drumming_preset();
  c.recording_seconds = 20.0;
  c.prevalence = 0.03;
  FeatureConfig fc;
  fc.n_mels = 40;
  const auto data = synth_dataset(c, 3, 2, 2, 900, fc);
  const auto config = parse_config(
      "[features]\nn_mels = 40\n[denoise]\nwindow_seconds = 10\n[pipeline]\nsegment_seconds = 4\nseed = 11\n"
      "[train]\nmax_epochs = 2\nbatch_size = 8\n"
      "[grid]\ndenoise = none, both\nchannels = 4\ndepth = 1\npool = 2\nintegration = global-average, global-max\n"
      "bidirectional = true\nrepetitions = 2\n");
  GridOptions o;
  o.workers = 1;
  const auto a = run_grid(config, data, o);
  const auto b = run_grid(config, data, o);
  bool grid_ok = same_results(a, b);
  export_results_csv(a, dir / "a.csv");
  export_results_csv(b, dir / "b.csv");
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  // CSV carries wall-clock; compare everything but that column.
  auto strip_wall = [](std::string s) {
    std::stringstream in(s), out;
    std::string line;
    while (std::getline(in, line)) out << line.substr(0, line.rfind(',')) << "\n";
    return out.str();
  };
  grid_ok = grid_ok && strip_wall(slurp(dir / "a.csv")) == strip_wall(slurp(dir / "b.csv"));

  // Checkpoint round trip after some training-mode statistics.
  crnn::ModelConfig mc;
  mc.input_frames = 50;
  mc.input_bands = 12;
  mc.channel_size = 8;
  auto model = crnn::build_model(mc, 3, 97, 5);
  Gen g(9);
  const auto x = random_floats(g, 2 * 50 * 12, -1.0f, 1.0f);
  crnn::ForwardCache<float> cache;
  model.forward(x, 2, crnn::Mode::Training, &cache);
  model.update_running_stats(cache);
  crnn::save_checkpoint(model, dir / "m.ckpt");
  const auto back = crnn::load_checkpoint(dir / "m.ckpt");
  const bool ckpt_ok = back == model && crnn::serialize_checkpoint(back) == crnn::serialize_checkpoint(model);

  // Spectrogram file.
  const auto& s = data.train.spectrograms[0];
  save_spectrogram(dir / "s.spec", s);
  const auto t = load_spectrogram(dir / "s.spec");
  const bool spec_ok = t.frames == s.frames && t.bands == s.bands && t.hop == s.hop &&
                       std::memcmp(t.data.data(), s.data.data(), s.data.size() * sizeof(float)) == 0 &&
                       t.band_frequencies == s.band_frequencies;

  return {grid_ok && ckpt_ok && spec_ok,
          fmt("grid table (%zu rows) identical: %s; checkpoint bit-exact: %s; spectrogram bit-exact: %s",
              a.rows.size(), grid_ok ? "yes" : "no", ckpt_ok ? "yes" : "no", spec_ok ? "yes" : "no")};
}

Verdict shape_law() {
  GridAxes axes;
  axes.denoise = {DenoiseSetting::FrequencyRemoval};
  const auto points = expand_grid(axes, GridRound::Architecture);
  const std::size_t frames = 500, bands = 39;
  Gen g(10);
  const auto x = random_floats(g, frames * bands, -2.0f, 2.0f);
  std::size_t feasible = 0, good = 0, skipped = 0;
  for (const auto& p : points) {
    if (infeasibility(p, frames, bands)) {
      ++skipped;
      continue;
    }
    ++feasible;
    const auto m = crnn::build_model(p.model(frames, bands), 1, 99, 1);
    good += m.forward(x, 1, crnn::Mode::Inference).size() == frames;
  }
  return {good == feasible && feasible + skipped == 216,
          fmt("%zu grid points: %zu feasible at 500x39, %zu with 500 outputs, %zu infeasible skipped", points.size(),
              feasible, good, skipped)};
}

struct Criterion {
  int id;
  const char* name;
  Verdict (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const Criterion all[] = {
      {1, "metric oracle equivalence", metric_oracles},
      {2, "gradient checks", gradient_checks},
      {3, "exact-count stage tests", exact_counts},
      {4, "class-mask recovery", mask_recovery},
      {5, "bias initialization", bias_init},
      {6, "end-to-end learnability", learnability},
      {7, "denoising helps", denoising_helps},
      {8, "loss equivalences", loss_equivalences},
      {9, "determinism and round-trips", determinism},
      {10, "shape law", shape_law},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.contains(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %s  %s: %s [%.1f s]\n", c.id, v.pass ? "PASS" : "FAIL", c.name, v.detail.c_str(), sec);
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
