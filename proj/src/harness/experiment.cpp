// SPDX-License-Identifier: Apache-2.0
#include "rcs/harness/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "rcs/crnn/checkpoint.hpp"
#include "rcs/detail/random.hpp"
#include "rcs/detail/text.hpp"
#include "rcs/error.hpp"
#include "rcs/resample.hpp"

namespace rcs::harness {

namespace {

/// Run @p f, prefixing any library error with the stage and source it came from.
template <typename F>
auto stage(const std::string& name, const std::string& source, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.message().rfind("stage ", 0) == 0) throw;
    throw Error(e.kind(), "stage " + name + (source.empty() ? "" : " (" + source + ")") + ": " + e.message());
  }
}

struct SegmentedSplit {
  std::vector<SegmentBatch> per_recording;
  std::vector<SegmentationMap> maps;
  SegmentBatch all;
};

SegmentedSplit segment_split(const Split& s, std::size_t frames) {
  SegmentedSplit out;
  for (std::size_t i = 0; i < s.spectrograms.size(); ++i) {
    auto seg = stage("segment", s.spectrograms[i].source_id,
                     [&] { return segment(s.spectrograms[i], &s.targets[i], frames); });
    out.all.append(seg.batch);
    out.per_recording.push_back(std::move(seg.batch));
    out.maps.push_back(std::move(seg.map));
  }
  return out;
}

SplitScores score_split(const crnn::Crnn& model, const Split& split, const SegmentedSplit& seg, double hop,
                        double threshold, std::size_t batch_size) {
  SplitScores scores;
  const auto probs = stage("predict", split.name, [&] { return crnn::predict(model, seg.all, batch_size); });
  std::size_t k = 0;
  for (std::size_t i = 0; i < seg.maps.size(); ++i) {
    const std::size_t n = seg.maps[i].segment_count();
    const std::span<const std::vector<float>> part(probs.data() + k, n);
    k += n;
    scores.predictions.push_back(stage("concatenate", seg.maps[i].source_id,
                                       [&] { return concatenate_predictions(part, seg.maps[i], hop); }));
  }
  scores.report = evaluate_split(scores.predictions, split.targets, threshold, hop);
  return scores;
}

ResolutionScores undefined_ap_scores(std::span<const float> p, std::span<const std::uint8_t> y, double threshold,
                                     std::size_t pool) {
  ResolutionScores r;
  r.pool_frames = pool;
  r.ap = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::uint8_t> yhat(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) yhat[i] = static_cast<double>(p[i]) > threshold ? 1 : 0;
  r.counts = confusion(yhat, y);
  r.f1 = f1_score(yhat, y);
  return r;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorKind::Config, "directory " + dir.string() + " does not exist");
  std::vector<std::filesystem::path> wavs;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".wav") wavs.push_back(entry.path());
  std::sort(wavs.begin(), wavs.end());
  if (wavs.empty()) throw Error(ErrorKind::EmptyCorpus, "no .wav files in " + dir.string());
  Corpus c;
  for (const auto& w : wavs)
    c.recordings.push_back(stage("ingest", w.stem().string(), [&] { return peak_normalize(load_wav(w)); }));
  const auto ann = dir / "annotations.csv";
  if (std::filesystem::exists(ann)) c.events = stage("ingest", ann.string(), [&] { return parse_annotations(ann); });
  return c;
}

Split featurize(const std::string& name, const Corpus& corpus, const FeatureConfig& features,
                const std::string& target_class) {
  Split s;
  s.name = name;
  s.events = corpus.events;
  for (const auto& r : corpus.recordings) {
    s.spectrograms.push_back(stage("features", r.source_id, [&] { return compute_log_mel(r, features); }));
    const auto& spec = s.spectrograms.back();
    s.targets.push_back(stage("targets", r.source_id, [&] {
      return rasterize_targets(corpus.events, r.source_id, spec.frames, spec.hop, target_class);
    }));
  }
  return s;
}

Dataset load_dataset(const HarnessConfig& config) {
  check_data_dirs(config.data);
  Dataset d;
  d.train = featurize("train", load_corpus(config.data.train_dir), config.features, config.data.target_class);
  d.val = featurize("val", load_corpus(config.data.val_dir), config.features, config.data.target_class);
  d.test = featurize("test", load_corpus(config.data.test_dir), config.features, config.data.target_class);
  return d;
}

PreparedData prepare(const Dataset& data, const DenoiseConfig& denoise, const std::string& target_class) {
  denoise.validate();
  PreparedData p;
  p.setting = denoise_setting(denoise);
  p.train = data.train;
  p.val = data.val;
  p.test = data.test;
  if (p.train.spectrograms.empty()) throw Error(ErrorKind::EmptyCorpus, "training split has no recordings");

  if (denoise.apply_frequency_removal) {
    std::vector<AnnotatedSpectrogram> corpus;
    for (const Split* s : {&p.train, &p.val})
      for (std::size_t i = 0; i < s->spectrograms.size(); ++i)
        corpus.push_back({&s->spectrograms[i], &s->targets[i], &s->events});
    p.mask = stage("mask", "", [&] { return compute_class_mask(corpus, target_class, denoise.context_seconds); });
    p.mask_band_frequencies = p.train.spectrograms.front().band_frequencies;
  }
  // The standardizer is fit after denoising, so run the train split through first.
  const Standardizer identity{0.0, 1.0};
  p.train = apply_fitted(std::move(p.train), denoise, p.mask ? &*p.mask : nullptr, identity);
  p.standardizer = stage("standardize", "train", [&] { return fit_standardizer(p.train.spectrograms); });
  for (auto& spec : p.train.spectrograms) spec = apply_standardizer(spec, p.standardizer);
  p.val = apply_fitted(std::move(p.val), denoise, p.mask ? &*p.mask : nullptr, p.standardizer);
  p.test = apply_fitted(std::move(p.test), denoise, p.mask ? &*p.mask : nullptr, p.standardizer);
  p.bands = p.train.spectrograms.front().bands;
  return p;
}

Split apply_fitted(Split split, const DenoiseConfig& denoise, const ClassMask* mask, const Standardizer& z) {
  if (denoise.apply_frequency_removal && !mask) throw Error(ErrorKind::Usage, "frequency removal needs a class mask");
  for (auto& spec : split.spectrograms) {
    if (denoise.apply_frequency_removal)
      spec = stage("frequency removal", spec.source_id,
                   [&] { return apply_frequency_removal(spec, *mask, denoise.mask_threshold); });
    if (denoise.apply_spectral_subtraction)
      spec = stage("spectral subtraction", spec.source_id,
                   [&] { return spectral_subtraction(spec, denoise.subtraction_window_seconds); });
    if (z.mean != 0.0 || z.std != 1.0) spec = apply_standardizer(spec, z);
  }
  return split;
}

std::vector<PredictionVector> predict_recordings(const crnn::Crnn& model, std::span<const Spectrogram> spectrograms,
                                                 std::size_t batch_size) {
  const std::size_t frames = model.config().input_frames;
  std::vector<PredictionVector> out;
  for (const auto& spec : spectrograms) {
    const auto seg = stage("segment", spec.source_id, [&] { return segment(spec, nullptr, frames); });
    const auto probs = stage("predict", spec.source_id, [&] { return crnn::predict(model, seg.batch, batch_size); });
    out.push_back(stage("concatenate", spec.source_id,
                        [&] { return concatenate_predictions(probs, seg.map, spec.hop); }));
  }
  return out;
}

std::size_t segment_frames(double seconds, double hop) {
  const auto n = std::llround(seconds / hop);
  if (n < 1) throw Error(ErrorKind::Config, "segment length shorter than one frame");
  return static_cast<std::size_t>(n);
}

EvalReport evaluate_split(std::span<const PredictionVector> predictions, std::span<const TargetVector> targets,
                          double threshold, double hop) {
  std::size_t positives = 0;
  for (const auto& t : targets) positives += t.positives();
  if (positives > 0) return evaluate(predictions, targets, threshold, hop);

  std::vector<float> p;
  std::vector<std::uint8_t> y;
  if (predictions.size() != targets.size()) return evaluate(predictions, targets, threshold, hop);  // raises Shape
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].size() != targets[i].size()) return evaluate(predictions, targets, threshold, hop);
    p.insert(p.end(), predictions[i].p.begin(), predictions[i].p.end());
    y.insert(y.end(), targets[i].values.begin(), targets[i].values.end());
  }
  EvalReport r;
  r.threshold = threshold;
  r.frame_hop = hop;
  const auto pool = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(r.pooled_seconds / hop)));
  r.frame = undefined_ap_scores(p, y, threshold, 1);
  r.pooled = undefined_ap_scores(pool_max(std::span<const float>(p), pool),
                                 pool_max(std::span<const std::uint8_t>(y), pool), threshold, pool);
  r.ap_avg = std::numeric_limits<double>::quiet_NaN();
  r.f1_avg = (r.frame.f1 + r.pooled.f1) / 2.0;
  return r;
}

RunOutcome run_experiment(const PreparedData& data, const RunSettings& settings,
                          const std::function<void(const crnn::EpochRecord&)>& on_epoch) {
  const auto t0 = std::chrono::steady_clock::now();
  const double hop = data.train.spectrograms.front().hop;
  const std::size_t frames = segment_frames(settings.segment_seconds, hop);

  crnn::ModelConfig cfg = settings.model;
  cfg.input_frames = frames;
  cfg.input_bands = data.bands;
  cfg.validate();

  const SegmentedSplit train = segment_split(data.train, frames);
  const SegmentedSplit val = segment_split(data.val, frames);
  const SegmentedSplit test = segment_split(data.test, frames);
  if (train.all.empty()) throw Error(ErrorKind::EmptyCorpus, "stage segment: training split yields no segment");
  if (val.all.empty()) throw Error(ErrorKind::EmptyCorpus, "stage segment: validation split yields no segment");

  SegmentBatch train_batch = train.all;
  if (settings.resample) {
    ResampleConfig rc = *settings.resample;
    rc.seed = detail::hash_seed(settings.seed, "resample");
    train_batch = stage("resample", "train", [&] { return resample(train.per_recording, rc); });
    if (train_batch.empty()) throw Error(ErrorKind::EmptyCorpus, "stage resample: no training segment left");
  }

  const auto [pos, total] = train_batch.frame_counts();
  RunOutcome out{stage("build", "", [&] { return crnn::build_model(cfg, pos, total - pos, detail::hash_seed(settings.seed, "init")); })};
  out.train_segments = train_batch.size();
  out.val_segments = val.all.size();
  out.test_segments = test.all.size();
  const crnn::LossConfig loss = stage("loss", "", [&] { return crnn::resolve_loss(settings.loss, train_batch); });
  crnn::TrainConfig tc = settings.train;
  tc.seed = detail::hash_seed(settings.seed, "train");
  out.history = stage("train", "", [&] { return crnn::train(out.model, train_batch, val.all, loss, tc, on_epoch); });

  out.train = score_split(out.model, data.train, train, hop, settings.threshold, tc.batch_size);
  out.val = score_split(out.model, data.val, val, hop, settings.threshold, tc.batch_size);
  out.test = score_split(out.model, data.test, test, hop, settings.threshold, tc.batch_size);
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

namespace {

nlohmann::json nan_safe(const nlohmann::json& j) {
  if (j.is_number_float() && !std::isfinite(j.get<double>())) return nullptr;
  if (j.is_object() || j.is_array()) {
    nlohmann::json out = j;
    for (auto& [k, v] : out.items()) v = nan_safe(v);
    return out;
  }
  return j;
}

}  // namespace

PipelineResult run_pipeline(const HarnessConfig& config, const std::filesystem::path& out_dir,
                            const std::function<void(const std::string&)>& log) {
  const auto say = [&](const std::string& m) {
    if (log) log(m);
  };
  config.validate();
  check_data_dirs(config.data);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + out_dir.string() + ": " + ec.message());

  say("loading corpora and computing features");
  const Dataset dataset = load_dataset(config);
  say("denoising (" + std::string(to_string(denoise_setting(config.denoise))) + ")");
  PreparedData data = prepare(dataset, config.denoise, config.data.target_class);
  say("training on " + std::to_string(data.train.spectrograms.size()) + " recordings, " +
      std::to_string(data.bands) + " bands");

  RunSettings rs;
  rs.model = config.model;
  rs.loss = config.loss;
  rs.train = config.train;
  if (config.pipeline.resample) rs.resample = config.resample;
  rs.segment_seconds = config.pipeline.segment_seconds;
  rs.threshold = config.pipeline.threshold;
  rs.seed = config.seed;
  RunOutcome o = run_experiment(data, rs, [&](const crnn::EpochRecord& e) {
    say("epoch " + std::to_string(e.epoch) + " train_loss " + detail::format_double(e.train_loss) + " val_loss " +
        detail::format_double(e.val_loss));
  });

  if (data.mask) save_class_mask(out_dir / "mask.csv", *data.mask, data.mask_band_frequencies);
  save_standardizer(out_dir / "standardizer.json", data.standardizer);
  crnn::save_checkpoint(o.model, out_dir / "model.ckpt");
  save_predictions(out_dir / "predictions_val.csv", o.val.predictions, config.pipeline.threshold);
  save_predictions(out_dir / "predictions_test.csv", o.test.predictions, config.pipeline.threshold);

  std::string history = "epoch,train_loss,val_loss\n";
  for (const auto& e : o.history.epochs)
    history += std::to_string(e.epoch) + "," + detail::format_double(e.train_loss) + "," +
               detail::format_double(e.val_loss) + "\n";
  detail::write_text_file(out_dir / "history.csv", history);

  nlohmann::json report{{"test", to_json(o.test.report)},
                        {"val", to_json(o.val.report)},
                        {"train", to_json(o.train.report)},
                        {"model", crnn::to_json(o.model.config())},
                        {"denoise", std::string(to_string(data.setting))},
                        {"loss", std::string(crnn::to_string(config.loss.variant))},
                        {"resample", config.pipeline.resample},
                        {"segments", {{"train", o.train_segments}, {"val", o.val_segments}, {"test", o.test_segments}}},
                        {"best_epoch", o.history.best_epoch},
                        {"epochs", o.history.epochs.size()},
                        {"seed", config.seed},
                        {"wall_seconds", o.wall_seconds}};
  detail::write_text_file(out_dir / "report.json", nan_safe(report).dump(2) + "\n");
  return PipelineResult{std::move(o), std::move(data)};
}

}  // namespace rcs::harness
