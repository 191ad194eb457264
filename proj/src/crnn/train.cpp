// SPDX-License-Identifier: Apache-2.0
#include "rcs/crnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rcs/detail/random.hpp"
#include "rcs/error.hpp"

namespace rcs::crnn {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0) || !(epsilon > 0.0))
    throw Error(ErrorKind::Config, "Adam parameters must be positive (betas below 1)");
  if (batch_size < 1 || max_epochs < 1) throw Error(ErrorKind::Config, "batch_size and max_epochs must be >= 1");
  if (early_stop_patience < 1) throw Error(ErrorKind::Config, "early_stop_patience must be >= 1");
}

bool EarlyStopping::update(double loss) {
  ++epoch_;
  if (loss < best_) {
    best_ = loss;
    best_epoch_ = epoch_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

Adam::Adam(const TrainConfig& config, const Crnn& model) : config_(config) {
  for (const auto& t : model.tensors()) {
    m_.emplace_back(t.trainable ? t.size() : 0, 0.0f);
    v_.emplace_back(t.trainable ? t.size() : 0, 0.0f);
  }
}

void Adam::step(Crnn& model, const Gradients<float>& grads) {
  ++t_;
  const double td = static_cast<double>(t_);
  const double step = config_.learning_rate * std::sqrt(1.0 - std::pow(config_.beta2, td)) /
                      (1.0 - std::pow(config_.beta1, td));
  const auto b1 = static_cast<float>(config_.beta1);
  const auto b2 = static_cast<float>(config_.beta2);
  const auto lr = static_cast<float>(step);
  const auto eps = static_cast<float>(config_.epsilon);
  auto& tensors = model.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (!tensors[i].trainable) continue;
    auto& p = tensors[i].data;
    auto& m = m_[i];
    auto& v = v_[i];
    const auto& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (1.0f - b1) * g[k];
      v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
      p[k] -= lr * m[k] / (std::sqrt(v[k]) + eps);
    }
  }
}

namespace {

void check_segments(const Crnn& model, const SegmentBatch& batch, bool need_targets, const char* what) {
  const auto& cfg = model.config();
  for (const auto& s : batch.segments) {
    if (s->frames != cfg.input_frames || s->bands != cfg.input_bands)
      throw Error(ErrorKind::Shape, std::string(what) + " segment from " + s->source_id + " is " +
                                        std::to_string(s->frames) + "x" + std::to_string(s->bands) +
                                        ", model expects " + std::to_string(cfg.input_frames) + "x" +
                                        std::to_string(cfg.input_bands));
    if (need_targets && !s->target)
      throw Error(ErrorKind::Usage, std::string(what) + " segment from " + s->source_id + " has no target");
  }
}

std::vector<float> gather(const SegmentBatch& batch, std::span<const std::size_t> order) {
  std::vector<float> x;
  const auto& first = *batch.segments[order.front()];
  x.reserve(order.size() * first.patch.size());
  for (std::size_t i : order) x.insert(x.end(), batch.segments[i]->patch.begin(), batch.segments[i]->patch.end());
  return x;
}

std::vector<unsigned char> gather_targets(const SegmentBatch& batch, std::span<const std::size_t> order) {
  std::vector<unsigned char> y;
  for (std::size_t i : order) y.insert(y.end(), batch.segments[i]->target->begin(), batch.segments[i]->target->end());
  return y;
}

}  // namespace

LossConfig resolve_loss(LossConfig config, const SegmentBatch& train) {
  if (config.weighted()) {
    const auto [pos, total] = train.frame_counts();
    config = with_class_weights(config, pos, total);
  }
  config.validate();
  return config;
}

double evaluate_loss(const Crnn& model, const SegmentBatch& segments, const LossConfig& loss, std::size_t batch_size) {
  if (segments.empty()) throw Error(ErrorKind::Usage, "loss over an empty batch");
  check_segments(model, segments, true, "evaluation");
  batch_size = std::max<std::size_t>(1, batch_size);
  std::vector<std::size_t> order(segments.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double sum = 0.0;
  std::size_t frames = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::span<const std::size_t> idx(order.data() + begin, std::min(batch_size, order.size() - begin));
    const auto p = model.forward(gather(segments, idx), idx.size(), Mode::Inference);
    const auto y = gather_targets(segments, idx);
    for (std::size_t i = 0; i < p.size(); ++i) sum += frame_loss(loss, p[i], y[i]);
    frames += p.size();
  }
  return sum / static_cast<double>(frames);
}

std::vector<std::vector<float>> predict(const Crnn& model, const SegmentBatch& segments, std::size_t batch_size) {
  check_segments(model, segments, false, "prediction");
  batch_size = std::max<std::size_t>(1, batch_size);
  const std::size_t frames = model.config().input_frames;
  std::vector<std::vector<float>> out;
  out.reserve(segments.size());
  std::vector<std::size_t> order(segments.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::span<const std::size_t> idx(order.data() + begin, std::min(batch_size, order.size() - begin));
    const auto p = model.forward(gather(segments, idx), idx.size(), Mode::Inference);
    for (std::size_t k = 0; k < idx.size(); ++k)
      out.emplace_back(p.begin() + static_cast<std::ptrdiff_t>(k * frames),
                       p.begin() + static_cast<std::ptrdiff_t>((k + 1) * frames));
  }
  return out;
}

TrainHistory train(Crnn& model, const SegmentBatch& train_set, const SegmentBatch& val, const LossConfig& loss,
                   const TrainConfig& config, const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  loss.validate();
  if (train_set.empty() || val.empty()) throw Error(ErrorKind::Usage, "training and validation batches must be non-empty");
  check_segments(model, train_set, true, "training");
  check_segments(model, val, true, "validation");

  detail::Rng rng(detail::splitmix64(config.seed));
  Adam adam(config, model);
  EarlyStopping stopper(config.early_stop_patience);
  TrainHistory history;
  Crnn best = model;
  ForwardCache<float> cache;
  Gradients<float> grads = model.zero_gradients();
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    detail::shuffle(order, rng);
    double sum = 0.0;
    std::size_t frames = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::span<const std::size_t> idx(order.data() + begin, std::min(config.batch_size, order.size() - begin));
      const auto p = model.forward(gather(train_set, idx), idx.size(), Mode::Training, &cache);
      const auto y = gather_targets(train_set, idx);
      double batch_loss = 0.0;
      std::vector<float> dlogit(p.size());
      const double scale = 1.0 / static_cast<double>(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) {
        batch_loss += frame_loss(loss, p[i], y[i]);
        dlogit[i] = static_cast<float>(frame_loss_grad_logit(loss, p[i], y[i]) * scale);
      }
      if (!std::isfinite(batch_loss))
        throw Error(ErrorKind::Diverged, "non-finite training loss in epoch " + std::to_string(epoch) + " at batch " +
                                             std::to_string(begin / config.batch_size + 1));
      sum += batch_loss;
      frames += p.size();
      model.backward(cache, dlogit, grads);
      model.update_running_stats(cache);
      adam.step(model, grads);
    }
    EpochRecord rec{epoch, sum / static_cast<double>(frames), evaluate_loss(model, val, loss, config.batch_size)};
    if (!std::isfinite(rec.val_loss) || !std::isfinite(rec.train_loss))
      throw Error(ErrorKind::Diverged, "non-finite validation loss in epoch " + std::to_string(epoch));
    history.epochs.push_back(rec);
    if (stopper.update(rec.val_loss)) best = model;
    if (on_epoch) on_epoch(rec);
    if (stopper.should_stop()) {
      history.early_stopped = true;
      break;
    }
  }
  history.best_epoch = stopper.best_epoch();
  history.best_val_loss = stopper.best_loss();
  model = std::move(best);
  return history;
}

}  // namespace rcs::crnn
