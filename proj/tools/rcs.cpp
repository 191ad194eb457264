// SPDX-License-Identifier: Apache-2.0
// rcs: command-line front end for the detection pipeline and grid search.
#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "rcs/crnn/checkpoint.hpp"
#include "rcs/detail/random.hpp"
#include "rcs/detail/text.hpp"
#include "rcs/error.hpp"
#include "rcs/harness/config.hpp"
#include "rcs/harness/experiment.hpp"
#include "rcs/harness/grid.hpp"

namespace fs = std::filesystem;
using namespace rcs;
using namespace rcs::harness;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::string target_class;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config = true) {
  auto* opt = cmd->add_option("--config", c.config, "experiment INI file");
  if (needs_config) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory")->required();
  cmd->add_option("--class", c.target_class, "target class label (overrides [data] class)");
  cmd->add_option("--seed", c.seed, "master seed (overrides [pipeline] seed)");
}

HarnessConfig load(const Common& c) {
  HarnessConfig cfg = load_config(c.config);
  if (!c.target_class.empty()) cfg.data.target_class = c.target_class;
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.synth.seed = *c.seed;
  }
  cfg.validate();
  return cfg;
}

void log_line(const std::string& m) { std::cerr << m << "\n"; }

fs::path make_dir(const std::string& out) {
  fs::create_directories(out);
  return fs::path(out);
}

const Split& split_by_name(const Dataset& d, const std::string& name) {
  if (name == "train") return d.train;
  if (name == "val") return d.val;
  if (name == "test") return d.test;
  throw Error(ErrorKind::Usage, "unknown split '" + name + "' (train, val or test)");
}

int cmd_synth(const Common& c) {
  const HarnessConfig cfg = load(c);
  const fs::path out = make_dir(c.out);
  if (cfg.synth_splits.empty()) {
    const SynthCorpus corpus = generate_corpus(cfg.synth);
    write_corpus(corpus, out);
    log_line("wrote " + std::to_string(corpus.recordings.size()) + " recordings to " + out.string());
    return 0;
  }
  for (const auto& [name, count] : cfg.synth_splits) {
    SynthConfig s = cfg.synth;
    s.n_recordings = count;
    s.seed = detail::hash_seed(cfg.synth.seed, "split/" + name);
    s.id_prefix = name + "_" + cfg.synth.id_prefix;
    const SynthCorpus corpus = generate_corpus(s);
    write_corpus(corpus, out / name);
    log_line("wrote " + std::to_string(count) + " recordings to " + (out / name).string());
  }
  return 0;
}

int cmd_features(const Common& c) {
  const HarnessConfig cfg = load(c);
  const Dataset d = load_dataset(cfg);
  const fs::path out = make_dir(c.out);
  for (const Split* s : {&d.train, &d.val, &d.test}) {
    fs::create_directories(out / s->name);
    for (const auto& spec : s->spectrograms) save_spectrogram(out / s->name / (spec.source_id + ".spec"), spec);
    log_line(s->name + ": " + std::to_string(s->spectrograms.size()) + " spectrograms");
  }
  return 0;
}

int cmd_mask(const Common& c) {
  HarnessConfig cfg = load(c);
  cfg.denoise.apply_frequency_removal = true;
  cfg.denoise.apply_spectral_subtraction = false;
  const PreparedData p = prepare(load_dataset(cfg), cfg.denoise, cfg.data.target_class);
  const fs::path out = make_dir(c.out);
  save_class_mask(out / "mask.csv", *p.mask, p.mask_band_frequencies);
  std::size_t kept = 0;
  for (double r : p.mask->r) kept += r >= cfg.denoise.mask_threshold ? 1 : 0;
  log_line("mask keeps " + std::to_string(kept) + " of " + std::to_string(p.mask->r.size()) + " bands");
  return 0;
}

int cmd_denoise(const Common& c) {
  const HarnessConfig cfg = load(c);
  const PreparedData p = prepare(load_dataset(cfg), cfg.denoise, cfg.data.target_class);
  const fs::path out = make_dir(c.out);
  if (p.mask) save_class_mask(out / "mask.csv", *p.mask, p.mask_band_frequencies);
  save_standardizer(out / "standardizer.json", p.standardizer);
  for (const Split* s : {&p.train, &p.val, &p.test}) {
    fs::create_directories(out / s->name);
    for (const auto& spec : s->spectrograms) save_spectrogram(out / s->name / (spec.source_id + ".spec"), spec);
  }
  log_line("denoising " + std::string(to_string(p.setting)) + ": " + std::to_string(p.bands) + " bands");
  return 0;
}

int cmd_train(const Common& c) {
  const HarnessConfig cfg = load(c);
  const PipelineResult r = run_pipeline(cfg, c.out, log_line);
  const auto& t = r.outcome.test.report;
  std::cout << "test AP_avg " << detail::format_double(t.ap_avg) << " F1_avg " << detail::format_double(t.f1_avg)
            << "\n";
  return 0;
}

int cmd_predict(const Common& c, const std::string& split, const std::string& artifacts) {
  const HarnessConfig cfg = load(c);
  const fs::path dir = artifacts.empty() ? fs::path(c.out) : fs::path(artifacts);
  const crnn::Crnn model = crnn::load_checkpoint(dir / "model.ckpt");
  const Standardizer z = load_standardizer(dir / "standardizer.json");
  std::optional<LoadedClassMask> mask;
  if (cfg.denoise.apply_frequency_removal) mask = load_class_mask(dir / "mask.csv");
  const Dataset d = load_dataset(cfg);
  const Split s = apply_fitted(split_by_name(d, split), cfg.denoise, mask ? &mask->mask : nullptr, z);
  const auto preds = predict_recordings(model, s.spectrograms, cfg.train.batch_size);
  const fs::path out = make_dir(c.out);
  save_predictions(out / ("predictions_" + split + ".csv"), preds, cfg.pipeline.threshold);
  log_line("wrote predictions for " + std::to_string(preds.size()) + " recordings");
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& split, const std::string& predictions) {
  const HarnessConfig cfg = load(c);
  const Split s = split_by_name(load_dataset(cfg), split);
  const double hop = s.spectrograms.front().hop;
  const fs::path pred_path = predictions.empty() ? fs::path(c.out) / ("predictions_" + split + ".csv")
                                                 : fs::path(predictions);
  const auto preds = load_predictions(pred_path, hop);
  const EvalReport r = evaluate_split(preds, s.targets, cfg.pipeline.threshold, hop);
  const fs::path out = make_dir(c.out);
  nlohmann::json j = to_json(r);
  detail::write_text_file(out / ("eval_" + split + ".json"), j.dump(2) + "\n");
  detail::write_text_file(out / ("eval_" + split + ".csv"), eval_csv_header() + "\n" + eval_csv_row(r) + "\n");
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_grid(const Common& c, const std::string& round_text, std::size_t workers, const std::string& winner) {
  const HarnessConfig cfg = load(c);
  GridOptions opt;
  opt.round = parse_grid_round(round_text);
  opt.workers = workers;
  opt.log = log_line;
  opt.fixed = fixed_point(cfg);
  if (opt.round == GridRound::LossResample && !winner.empty()) {
    const auto best = best_row(load_results(winner));
    if (!best) throw Error(ErrorKind::Usage, winner + " has no successful grid point");
    opt.fixed = best->point;
    log_line("round 2 uses " + best->point.key());
  }
  const Dataset d = load_dataset(cfg);
  const ResultsTable t = run_grid(cfg, d, opt);
  const fs::path out = make_dir(c.out);
  const std::string stem = "results_round" + std::to_string(static_cast<int>(opt.round));
  save_results(t, out / (stem + ".json"));
  export_results_csv(t, out / (stem + ".csv"));
  if (const auto best = best_row(t))
    std::cout << "best " << best->point.key() << " val AP_avg " << detail::format_double(best->val.ap_avg)
              << " test AP_avg " << detail::format_double(best->test.ap_avg) << "\n";
  return 0;
}

int cmd_export(const std::string& in, const std::string& out) {
  export_results_csv(load_results(in), out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rcs: sound event detection pipeline for long field recordings"};
  app.require_subcommand(1);

  Common common;
  std::string split = "test";
  std::string artifacts;
  std::string predictions;
  std::string round = "1";
  std::string winner;
  std::size_t workers = 1;
  std::string export_in;
  std::string export_out;

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  add_common(synth, common);
  auto* features = app.add_subcommand("features", "compute log-mel spectrograms");
  add_common(features, common);
  auto* mask = app.add_subcommand("mask", "fit the class mask on train + val");
  add_common(mask, common);
  auto* denoise = app.add_subcommand("denoise", "denoise and standardise all splits");
  add_common(denoise, common);
  auto* train = app.add_subcommand("train", "run the full pipeline and write all artifacts");
  add_common(train, common);
  auto* predict = app.add_subcommand("predict", "predict one split with trained artifacts");
  add_common(predict, common);
  predict->add_option("--split", split, "train, val or test")->capture_default_str();
  predict->add_option("--artifacts", artifacts, "directory holding model.ckpt, mask.csv, standardizer.json");
  auto* evaluate = app.add_subcommand("evaluate", "score saved predictions");
  add_common(evaluate, common);
  evaluate->add_option("--split", split, "train, val or test")->capture_default_str();
  evaluate->add_option("--predictions", predictions, "predictions CSV (default <out>/predictions_<split>.csv)");
  auto* grid = app.add_subcommand("grid", "run one round of the grid search");
  add_common(grid, common);
  grid->add_option("--round", round, "1 (architecture + denoising) or 2 (loss + resampling)")
      ->check(CLI::IsMember({"1", "2"}))
      ->capture_default_str();
  grid->add_option("--workers", workers, "concurrent runs (RCS_WORKERS overrides)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  grid->add_option("--winner", winner, "round-1 results JSON whose best point fixes the round-2 architecture");
  auto* exp = app.add_subcommand("export", "write a results table as CSV");
  exp->add_option("--in", export_in, "results JSON")->required()->check(CLI::ExistingFile);
  exp->add_option("--out", export_out, "CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(common);
    if (*features) return cmd_features(common);
    if (*mask) return cmd_mask(common);
    if (*denoise) return cmd_denoise(common);
    if (*train) return cmd_train(common);
    if (*predict) return cmd_predict(common, split, artifacts);
    if (*evaluate) return cmd_evaluate(common, split, predictions);
    if (*grid) return cmd_grid(common, round, workers, winner);
    if (*exp) return cmd_export(export_in, export_out);
  } catch (const Error& e) {
    std::cerr << "rcs: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "rcs: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
