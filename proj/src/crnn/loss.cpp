// SPDX-License-Identifier: Apache-2.0
#include "rcs/crnn/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rcs/error.hpp"

namespace rcs::crnn {

std::string_view to_string(LossVariant v) noexcept {
  switch (v) {
    case LossVariant::Bce: return "bce";
    case LossVariant::WeightedBce: return "weighted-bce";
    case LossVariant::Focal: return "focal";
    case LossVariant::WeightedFocal: return "weighted-focal";
  }
  return "unknown";
}

LossVariant parse_loss_variant(std::string_view text) {
  for (auto v : {LossVariant::Bce, LossVariant::WeightedBce, LossVariant::Focal, LossVariant::WeightedFocal})
    if (text == to_string(v)) return v;
  throw Error(ErrorKind::Config, "unknown loss variant '" + std::string(text) + "'");
}

void LossConfig::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw Error(ErrorKind::Config, "loss gamma must be >= 0");
  if (!(w0 > 0.0) || !(w1 > 0.0) || !std::isfinite(w0) || !std::isfinite(w1))
    throw Error(ErrorKind::Config, "class weights must be positive");
}

LossConfig with_class_weights(LossConfig config, std::size_t positive_frames, std::size_t total_frames) {
  if (positive_frames == 0 || positive_frames >= total_frames)
    throw Error(ErrorKind::Config, "class weights need both classes in the training frames (" +
                                       std::to_string(positive_frames) + " of " + std::to_string(total_frames) +
                                       " positive)");
  const double n = static_cast<double>(total_frames);
  config.w1 = n / (2.0 * static_cast<double>(positive_frames));
  config.w0 = n / (2.0 * static_cast<double>(total_frames - positive_frames));
  return config;
}

namespace {

double class_weight(const LossConfig& c, int y) {
  if (!c.weighted()) return 1.0;
  return y ? c.w1 : c.w0;
}

}  // namespace

double frame_loss(const LossConfig& c, double p, int y) {
  const double q = std::clamp(p, kLossEpsilon, 1.0 - kLossEpsilon);
  const double w = class_weight(c, y);
  if (y) {
    const double mod = c.focal() ? std::pow(1.0 - q, c.gamma) : 1.0;
    return -w * mod * std::log(q);
  }
  const double mod = c.focal() ? std::pow(q, c.gamma) : 1.0;
  return -w * mod * std::log(1.0 - q);
}

double frame_loss_grad_logit(const LossConfig& c, double p, int y) {
  if (p < kLossEpsilon || p > 1.0 - kLossEpsilon) return 0.0;
  const double w = class_weight(c, y);
  if (!c.focal()) return y ? -w * (1.0 - p) : w * p;
  const double g = c.gamma;
  if (y) return w * (g * p * std::pow(1.0 - p, g) * std::log(p) - std::pow(1.0 - p, g + 1.0));
  return w * (-g * std::pow(p, g) * (1.0 - p) * std::log(1.0 - p) + std::pow(p, g + 1.0));
}

double mean_loss(const LossConfig& config, std::span<const float> p, std::span<const unsigned char> y) {
  if (p.size() != y.size())
    throw Error(ErrorKind::Shape, std::to_string(p.size()) + " probabilities for " + std::to_string(y.size()) +
                                      " labels");
  if (p.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += frame_loss(config, p[i], y[i]);
  return s / static_cast<double>(p.size());
}

}  // namespace rcs::crnn
