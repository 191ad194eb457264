// SPDX-License-Identifier: Apache-2.0
#include "rcs/crnn/model.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "rcs/detail/random.hpp"
#include "rcs/error.hpp"
#include "rcs/kernels/conv.hpp"

namespace rcs::crnn {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using StridedMap = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

using Idx = Eigen::Index;

template <typename T>
T sigmoid(T x) {
  return T{1} / (T{1} + std::exp(-x));
}

/**
 * Per-channel sums of value(i, c) over every channel-last element, reduced in
 * fixed blocks of whole segments so the result does not depend on threading.
 */
template <typename F>
std::vector<double> channel_sum(std::size_t batch, std::size_t rows_per_segment, std::size_t channels,
                                const F& value) {
  const std::size_t blocks = kernels::reduction_blocks(batch);
  std::vector<std::vector<double>> part(blocks, std::vector<double>(channels, 0.0));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t kb = 0; kb < static_cast<std::ptrdiff_t>(blocks); ++kb) {
    const auto k = static_cast<std::size_t>(kb);
    auto& acc = part[k];
    const std::size_t row_begin = (k * batch / blocks) * rows_per_segment;
    const std::size_t row_end = ((k + 1) * batch / blocks) * rows_per_segment;
    for (std::size_t row = row_begin; row < row_end; ++row)
      for (std::size_t c = 0; c < channels; ++c) acc[c] += value(row * channels + c, c);
  }
  std::vector<double> total = part[0];
  for (std::size_t k = 1; k < blocks; ++k)
    for (std::size_t c = 0; c < channels; ++c) total[c] += part[k][c];
  return total;
}

std::string layer_name(const char* stem, std::size_t l, const char* leaf) {
  return std::string(stem) + std::to_string(l) + "." + leaf;
}

constexpr const char* kDirectionName[2] = {"gru.fwd", "gru.bwd"};

}  // namespace

template <typename T>
std::size_t BasicCrnn<T>::add(std::string name, std::vector<std::size_t> shape, bool trainable) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  tensors_.push_back(Tensor<T>{std::move(name), std::move(shape), std::vector<T>(n, T{0}), trainable});
  return tensors_.size() - 1;
}

template <typename T>
BasicCrnn<T>::BasicCrnn(ModelConfig config) : config_(config) {
  config_.validate();
  const std::size_t c = config_.channel_size;
  for (std::size_t l = 0; l < config_.conv_depth; ++l) {
    const std::size_t cin = l == 0 ? 1 : c;
    idx_.kernel.push_back(add(layer_name("conv", l, "kernel"), {kernels::kConvSize, kernels::kConvSize, cin, c}));
    idx_.bias.push_back(add(layer_name("conv", l, "bias"), {c}));
    idx_.scale.push_back(add(layer_name("bn", l, "scale"), {c}));
    idx_.shift.push_back(add(layer_name("bn", l, "shift"), {c}));
    idx_.mean.push_back(add(layer_name("bn", l, "running_mean"), {c}, false));
    idx_.var.push_back(add(layer_name("bn", l, "running_var"), {c}, false));
    std::fill(tensors_[idx_.scale.back()].data.begin(), tensors_[idx_.scale.back()].data.end(), T{1});
    std::fill(tensors_[idx_.var.back()].data.begin(), tensors_[idx_.var.back()].data.end(), T{1});
  }
  const std::size_t d = config_.integrated_size();
  const std::size_t h = config_.gru_units();
  for (std::size_t dir = 0; dir < (config_.bidirectional ? 2u : 1u); ++dir) {
    const std::string stem = kDirectionName[dir];
    idx_.w_in[dir] = add(stem + ".w_in", {3 * h, d});
    idx_.w_rec[dir] = add(stem + ".w_rec", {3 * h, h});
    idx_.b_in[dir] = add(stem + ".b_in", {3 * h});
    idx_.b_rec[dir] = add(stem + ".b_rec", {3 * h});
  }
  idx_.out_weight = add("out.weight", {c});
  idx_.out_bias = add("out.bias", {1});
}

template <typename T>
Tensor<T>& BasicCrnn<T>::tensor(std::string_view name) {
  for (auto& t : tensors_)
    if (t.name == name) return t;
  throw Error(ErrorKind::Usage, "no tensor named " + std::string(name));
}

template <typename T>
const Tensor<T>& BasicCrnn<T>::tensor(std::string_view name) const {
  return const_cast<BasicCrnn*>(this)->tensor(name);
}

template <typename T>
std::size_t BasicCrnn<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_)
    if (t.trainable) n += t.size();
  return n;
}

template <typename T>
Gradients<T> BasicCrnn<T>::zero_gradients() const {
  Gradients<T> g;
  g.reserve(tensors_.size());
  for (const auto& t : tensors_) g.emplace_back(t.size(), T{0});
  return g;
}

template <typename T>
bool BasicCrnn<T>::operator==(const BasicCrnn& other) const {
  if (!(config_ == other.config_) || tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& a = tensors_[i];
    const auto& b = other.tensors_[i];
    if (a.name != b.name || a.shape != b.shape || a.data != b.data) return false;
  }
  return true;
}

template <typename T>
std::vector<T> BasicCrnn<T>::forward(std::span<const T> input, std::size_t batch, Mode mode,
                                     ForwardCache<T>* cache) const {
  const std::size_t frames = config_.input_frames;
  const std::size_t c = config_.channel_size;
  const std::size_t depth = config_.conv_depth;
  const auto chain = config_.band_chain();
  if (batch == 0) throw Error(ErrorKind::Shape, "empty batch");
  if (input.size() != batch * frames * config_.input_bands)
    throw Error(ErrorKind::Shape, "input has " + std::to_string(input.size()) + " values, expected " +
                                      std::to_string(batch) + " x " + std::to_string(frames) + " x " +
                                      std::to_string(config_.input_bands));

  ForwardCache<T> local;
  ForwardCache<T>& fc = cache ? *cache : local;
  fc.mode = mode;
  fc.batch = batch;
  fc.activations.assign(depth + 1, {});
  fc.conv.assign(depth, {});
  fc.activations[0].assign(input.begin(), input.end());

  const std::size_t pool = config_.pool_size;
  for (std::size_t l = 0; l < depth; ++l) {
    const std::size_t fl = chain[l];
    const std::size_t fn = chain[l + 1];
    const kernels::ConvShape shape{batch, frames, fl, l == 0 ? 1u : c, c};
    auto& layer = fc.conv[l];
    std::vector<T> z(shape.output_size());
    kernels::conv2d_forward<T>(shape, fc.activations[l], tensors_[idx_.kernel[l]].data,
                               tensors_[idx_.bias[l]].data, z);

    std::vector<double> mean(c), var(c);
    const std::size_t rows_per_segment = frames * fl;
    if (mode == Mode::Training) {
      const double count = static_cast<double>(batch * rows_per_segment);
      mean = channel_sum(batch, rows_per_segment, c, [&](std::size_t i, std::size_t) { return double(z[i]); });
      for (double& m : mean) m /= count;
      var = channel_sum(batch, rows_per_segment, c, [&](std::size_t i, std::size_t ch) {
        const double d = double(z[i]) - mean[ch];
        return d * d;
      });
      for (double& v : var) v /= count;
      layer.batch_mean = mean;
      layer.batch_var = var;
    } else {
      const auto& rm = tensors_[idx_.mean[l]].data;
      const auto& rv = tensors_[idx_.var[l]].data;
      for (std::size_t ch = 0; ch < c; ++ch) {
        mean[ch] = rm[ch];
        var[ch] = rv[ch];
      }
    }
    layer.inv_std.resize(c);
    for (std::size_t ch = 0; ch < c; ++ch)
      layer.inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var[ch] + kBatchNormEpsilon));

    std::vector<T> mean_t(c);
    for (std::size_t ch = 0; ch < c; ++ch) mean_t[ch] = static_cast<T>(mean[ch]);
    layer.xhat.resize(z.size());
    const auto total = static_cast<std::ptrdiff_t>(z.size() / c);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t row = 0; row < total; ++row)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t i = static_cast<std::size_t>(row) * c + ch;
        layer.xhat[i] = (z[i] - mean_t[ch]) * layer.inv_std[ch];
      }

    // ReLU(scale * xhat + shift), then max over each full window of `pool` bands.
    const auto& gamma = tensors_[idx_.scale[l]].data;
    const auto& beta = tensors_[idx_.shift[l]].data;
    auto& out = fc.activations[l + 1];
    out.assign(batch * frames * fn * c, T{0});
    layer.pool_arg.assign(out.size(), 0);
    const auto bt = static_cast<std::ptrdiff_t>(batch * frames);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < bt; ++r) {
      const auto row = static_cast<std::size_t>(r);
      for (std::size_t g = 0; g < fn; ++g)
        for (std::size_t ch = 0; ch < c; ++ch) {
          T best = T{0};
          std::uint8_t arg = 0;
          for (std::size_t k = 0; k < pool; ++k) {
            const T y = std::max(T{0}, gamma[ch] * layer.xhat[(row * fl + g * pool + k) * c + ch] + beta[ch]);
            if (k == 0 || y > best) {
              best = y;
              arg = static_cast<std::uint8_t>(k);
            }
          }
          out[(row * fn + g) * c + ch] = best;
          layer.pool_arg[(row * fn + g) * c + ch] = arg;
        }
    }
  }

  // Frequency integration.
  const std::size_t fl = chain.back();
  const std::size_t rows = batch * frames;
  const auto& pooled = fc.activations[depth];
  switch (config_.freq_integration) {
    case FrequencyIntegration::Flatten:
      fc.features = pooled;
      break;
    case FrequencyIntegration::GlobalAverage:
      fc.features.assign(rows * c, T{0});
      for (std::size_t row = 0; row < rows; ++row)
        for (std::size_t ch = 0; ch < c; ++ch) {
          T s = T{0};
          for (std::size_t g = 0; g < fl; ++g) s += pooled[(row * fl + g) * c + ch];
          fc.features[row * c + ch] = s / static_cast<T>(fl);
        }
      break;
    case FrequencyIntegration::GlobalMax:
      fc.features.assign(rows * c, T{0});
      fc.integration_arg.assign(rows * c, 0);
      for (std::size_t row = 0; row < rows; ++row)
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::uint32_t arg = 0;
          for (std::size_t g = 1; g < fl; ++g)
            if (pooled[(row * fl + g) * c + ch] > pooled[(row * fl + arg) * c + ch]) arg = static_cast<std::uint32_t>(g);
          fc.features[row * c + ch] = pooled[(row * fl + arg) * c + ch];
          fc.integration_arg[row * c + ch] = arg;
        }
      break;
  }

  fc.hidden.assign(rows * c, T{0});
  const std::size_t dirs = config_.bidirectional ? 2 : 1;
  fc.directions.assign(dirs, {});
  for (std::size_t d = 0; d < dirs; ++d) gru_forward(d, batch, fc.features, fc.directions[d], fc.hidden);

  const auto& w = tensors_[idx_.out_weight].data;
  const T b = tensors_[idx_.out_bias].data[0];
  fc.logits.resize(rows);
  std::vector<T> probs(rows);
  for (std::size_t row = 0; row < rows; ++row) {
    T s = b;
    for (std::size_t ch = 0; ch < c; ++ch) s += w[ch] * fc.hidden[row * c + ch];
    fc.logits[row] = s;
    probs[row] = sigmoid(s);
  }
  return probs;
}

template <typename T>
void BasicCrnn<T>::gru_forward(std::size_t dir, std::size_t batch, std::span<const T> features,
                               typename ForwardCache<T>::Direction& st, std::span<T> hidden) const {
  const std::size_t frames = config_.input_frames;
  const std::size_t h = config_.gru_units();
  const std::size_t d = config_.integrated_size();
  const std::size_t c = config_.channel_size;
  const std::size_t rows = batch * frames;
  const ConstMatMap<T> w_in(tensors_[idx_.w_in[dir]].data.data(), Idx(3 * h), Idx(d));
  const ConstMatMap<T> w_rec(tensors_[idx_.w_rec[dir]].data.data(), Idx(3 * h), Idx(h));
  const Eigen::Map<const RowVec<T>> b_in(tensors_[idx_.b_in[dir]].data.data(), Idx(3 * h));
  const Eigen::Map<const RowVec<T>> b_rec(tensors_[idx_.b_rec[dir]].data.data(), Idx(3 * h));

  RowMatrix<T> xproj = ConstMatMap<T>(features.data(), Idx(rows), Idx(d)) * w_in.transpose();
  xproj.rowwise() += b_in;

  for (auto* v : {&st.h, &st.z, &st.r, &st.n, &st.hn}) v->assign(rows * h, T{0});
  RowMatrix<T> h_prev = RowMatrix<T>::Zero(Idx(batch), Idx(h));
  RowMatrix<T> hproj(Idx(batch), Idx(3 * h));
  for (std::size_t s = 0; s < frames; ++s) {
    const std::size_t t = dir == 0 ? s : frames - 1 - s;
    hproj.noalias() = h_prev * w_rec.transpose();
    hproj.rowwise() += b_rec;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t row = b * frames + t;
      for (std::size_t j = 0; j < h; ++j) {
        const T z = sigmoid(xproj(Idx(row), Idx(j)) + hproj(Idx(b), Idx(j)));
        const T r = sigmoid(xproj(Idx(row), Idx(h + j)) + hproj(Idx(b), Idx(h + j)));
        const T hn = hproj(Idx(b), Idx(2 * h + j));
        const T n = std::tanh(xproj(Idx(row), Idx(2 * h + j)) + r * hn);
        const T out = z * h_prev(Idx(b), Idx(j)) + (T{1} - z) * n;
        const std::size_t i = row * h + j;
        st.z[i] = z;
        st.r[i] = r;
        st.n[i] = n;
        st.hn[i] = hn;
        st.h[i] = out;
        h_prev(Idx(b), Idx(j)) = out;
        hidden[row * c + dir * h + j] = out;
      }
    }
  }
}

template <typename T>
void BasicCrnn<T>::backward(const ForwardCache<T>& fc, std::span<const T> grad_logits, Gradients<T>& grads) const {
  const std::size_t batch = fc.batch;
  const std::size_t frames = config_.input_frames;
  const std::size_t c = config_.channel_size;
  const std::size_t depth = config_.conv_depth;
  const std::size_t rows = batch * frames;
  const auto chain = config_.band_chain();
  if (grad_logits.size() != rows || fc.logits.size() != rows)
    throw Error(ErrorKind::Shape, "gradient has " + std::to_string(grad_logits.size()) + " frames, expected " +
                                      std::to_string(rows));
  if (grads.size() != tensors_.size()) grads = zero_gradients();
  for (std::size_t i = 0; i < tensors_.size(); ++i) grads[i].assign(tensors_[i].size(), T{0});

  // Output neuron.
  const auto& w = tensors_[idx_.out_weight].data;
  std::vector<T> grad_hidden(rows * c);
  {
    double db = 0.0;
    std::vector<double> dw(c, 0.0);
    for (std::size_t row = 0; row < rows; ++row) {
      const T g = grad_logits[row];
      db += g;
      for (std::size_t ch = 0; ch < c; ++ch) {
        dw[ch] += double(g) * fc.hidden[row * c + ch];
        grad_hidden[row * c + ch] = g * w[ch];
      }
    }
    grads[idx_.out_bias][0] = static_cast<T>(db);
    for (std::size_t ch = 0; ch < c; ++ch) grads[idx_.out_weight][ch] = static_cast<T>(dw[ch]);
  }

  std::vector<T> grad_features(fc.features.size(), T{0});
  for (std::size_t d = 0; d < fc.directions.size(); ++d) gru_backward(d, fc, grad_hidden, grad_features, grads);

  // Undo frequency integration.
  const std::size_t fl = chain.back();
  std::vector<T> grad_pooled(fc.activations[depth].size(), T{0});
  switch (config_.freq_integration) {
    case FrequencyIntegration::Flatten:
      grad_pooled = grad_features;
      break;
    case FrequencyIntegration::GlobalAverage:
      for (std::size_t row = 0; row < rows; ++row)
        for (std::size_t g = 0; g < fl; ++g)
          for (std::size_t ch = 0; ch < c; ++ch)
            grad_pooled[(row * fl + g) * c + ch] = grad_features[row * c + ch] / static_cast<T>(fl);
      break;
    case FrequencyIntegration::GlobalMax:
      for (std::size_t row = 0; row < rows; ++row)
        for (std::size_t ch = 0; ch < c; ++ch)
          grad_pooled[(row * fl + fc.integration_arg[row * c + ch]) * c + ch] = grad_features[row * c + ch];
      break;
  }

  const std::size_t pool = config_.pool_size;
  for (std::size_t li = depth; li-- > 0;) {
    const std::size_t fin = chain[li];
    const std::size_t fn = chain[li + 1];
    const auto& layer = fc.conv[li];
    const auto& gamma = tensors_[idx_.scale[li]].data;
    const auto& beta = tensors_[idx_.shift[li]].data;

    // Pool and ReLU: gradient reaches the window winner only where its pre-activation was positive.
    std::vector<T> grad_y(layer.xhat.size(), T{0});
    const auto bt = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < bt; ++r) {
      const auto row = static_cast<std::size_t>(r);
      for (std::size_t g = 0; g < fn; ++g)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t o = (row * fn + g) * c + ch;
          const std::size_t i = (row * fin + g * pool + layer.pool_arg[o]) * c + ch;
          if (gamma[ch] * layer.xhat[i] + beta[ch] > T{0}) grad_y[i] = grad_pooled[o];
        }
    }

    const std::size_t rows_per_segment = frames * fin;
    const auto dbeta = channel_sum(batch, rows_per_segment, c, [&](std::size_t i, std::size_t) { return double(grad_y[i]); });
    const auto dgamma = channel_sum(batch, rows_per_segment, c,
                                    [&](std::size_t i, std::size_t) { return double(grad_y[i]) * layer.xhat[i]; });
    for (std::size_t ch = 0; ch < c; ++ch) {
      grads[idx_.scale[li]][ch] = static_cast<T>(dgamma[ch]);
      grads[idx_.shift[li]][ch] = static_cast<T>(dbeta[ch]);
    }

    std::vector<T> grad_z(layer.xhat.size());
    const double count = static_cast<double>(batch * rows_per_segment);
    std::vector<T> scale(c), mean_dy(c), mean_dyx(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
      scale[ch] = gamma[ch] * layer.inv_std[ch];
      mean_dy[ch] = fc.mode == Mode::Training ? static_cast<T>(dbeta[ch] / count) : T{0};
      mean_dyx[ch] = fc.mode == Mode::Training ? static_cast<T>(dgamma[ch] / count) : T{0};
    }
    const auto elems = static_cast<std::ptrdiff_t>(grad_z.size() / c);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < elems; ++r)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t i = static_cast<std::size_t>(r) * c + ch;
        grad_z[i] = scale[ch] * (grad_y[i] - mean_dy[ch] - layer.xhat[i] * mean_dyx[ch]);
      }

    const kernels::ConvShape shape{batch, frames, fin, li == 0 ? 1u : c, c};
    std::vector<T> grad_input(li == 0 ? 0 : shape.input_size());
    kernels::conv2d_backward<T>(shape, fc.activations[li], tensors_[idx_.kernel[li]].data, grad_z, grad_input,
                                grads[idx_.kernel[li]], grads[idx_.bias[li]]);
    grad_pooled = std::move(grad_input);
  }
}

template <typename T>
void BasicCrnn<T>::gru_backward(std::size_t dir, const ForwardCache<T>& fc, std::span<const T> grad_hidden,
                                std::span<T> grad_features, Gradients<T>& grads) const {
  const std::size_t batch = fc.batch;
  const std::size_t frames = config_.input_frames;
  const std::size_t h = config_.gru_units();
  const std::size_t d = config_.integrated_size();
  const std::size_t c = config_.channel_size;
  const std::size_t rows = batch * frames;
  const auto& st = fc.directions[dir];
  const ConstMatMap<T> w_in(tensors_[idx_.w_in[dir]].data.data(), Idx(3 * h), Idx(d));
  const ConstMatMap<T> w_rec(tensors_[idx_.w_rec[dir]].data.data(), Idx(3 * h), Idx(h));

  RowMatrix<T> dxproj(Idx(rows), Idx(3 * h));
  RowMatrix<T> dhproj(Idx(batch), Idx(3 * h));
  RowMatrix<T> dh_next = RowMatrix<T>::Zero(Idx(batch), Idx(h));
  MatMap<T> dw_rec(grads[idx_.w_rec[dir]].data(), Idx(3 * h), Idx(h));
  Eigen::Map<RowVec<T>> db_rec(grads[idx_.b_rec[dir]].data(), Idx(3 * h));

  for (std::size_t s = frames; s-- > 0;) {
    const std::size_t t = dir == 0 ? s : frames - 1 - s;
    const std::size_t t_prev = dir == 0 ? t - 1 : t + 1;  // only read when s > 0
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t row = b * frames + t;
      for (std::size_t j = 0; j < h; ++j) {
        const std::size_t i = row * h + j;
        const T dh = grad_hidden[row * c + dir * h + j] + dh_next(Idx(b), Idx(j));
        const T z = st.z[i], r = st.r[i], n = st.n[i];
        const T hp = s > 0 ? st.h[(b * frames + t_prev) * h + j] : T{0};
        const T dn_pre = dh * (T{1} - z) * (T{1} - n * n);
        const T dz_pre = dh * (hp - n) * z * (T{1} - z);
        const T dr_pre = dn_pre * st.hn[i] * r * (T{1} - r);
        dxproj(Idx(row), Idx(j)) = dz_pre;
        dxproj(Idx(row), Idx(h + j)) = dr_pre;
        dxproj(Idx(row), Idx(2 * h + j)) = dn_pre;
        dhproj(Idx(b), Idx(j)) = dz_pre;
        dhproj(Idx(b), Idx(h + j)) = dr_pre;
        dhproj(Idx(b), Idx(2 * h + j)) = dn_pre * r;
        dh_next(Idx(b), Idx(j)) = dh * z;
      }
    }
    dh_next.noalias() += dhproj * w_rec;
    db_rec += dhproj.colwise().sum();
    if (s > 0) {
      const StridedMap<T> h_prev(st.h.data() + t_prev * h, Idx(batch), Idx(h), Eigen::OuterStride<>(Idx(frames * h)));
      dw_rec.noalias() += dhproj.transpose() * h_prev;
    }
  }

  const ConstMatMap<T> x(fc.features.data(), Idx(rows), Idx(d));
  MatMap<T>(grads[idx_.w_in[dir]].data(), Idx(3 * h), Idx(d)).noalias() = dxproj.transpose() * x;
  Eigen::Map<RowVec<T>>(grads[idx_.b_in[dir]].data(), Idx(3 * h)) = dxproj.colwise().sum();
  MatMap<T>(grad_features.data(), Idx(rows), Idx(d)).noalias() += dxproj * w_in;
}

template <typename T>
void BasicCrnn<T>::update_running_stats(const ForwardCache<T>& fc) {
  if (fc.mode != Mode::Training || fc.conv.size() != config_.conv_depth)
    throw Error(ErrorKind::Usage, "running statistics need a training-mode forward cache");
  for (std::size_t l = 0; l < config_.conv_depth; ++l) {
    auto& rm = tensors_[idx_.mean[l]].data;
    auto& rv = tensors_[idx_.var[l]].data;
    for (std::size_t ch = 0; ch < config_.channel_size; ++ch) {
      const double m = fc.conv[l].batch_mean[ch];
      const double v = fc.conv[l].batch_var[ch];
      if (running_initialised_) {
        rm[ch] = static_cast<T>(kBatchNormMomentum * rm[ch] + (1.0 - kBatchNormMomentum) * m);
        rv[ch] = static_cast<T>(kBatchNormMomentum * rv[ch] + (1.0 - kBatchNormMomentum) * v);
      } else {
        rm[ch] = static_cast<T>(m);
        rv[ch] = static_cast<T>(v);
      }
    }
  }
  running_initialised_ = true;
}

template class BasicCrnn<float>;
template class BasicCrnn<double>;

Crnn build_model(const ModelConfig& config, std::size_t train_pos_frames, std::size_t train_neg_frames,
                 std::uint64_t seed) {
  if (train_pos_frames == 0 || train_neg_frames == 0)
    throw Error(ErrorKind::Config, "output bias needs positive and negative training frames (got " +
                                       std::to_string(train_pos_frames) + " / " +
                                       std::to_string(train_neg_frames) + ")");
  Crnn model(config);
  detail::Rng rng(detail::splitmix64(seed));
  for (auto& t : model.tensors()) {
    const bool weight = t.shape.size() >= 2 || t.name == "out.weight";
    if (!t.trainable || !weight) continue;
    // fan_in: product of all but the output axis for conv kernels, the column count for GRU matrices.
    std::size_t fan_in = 1;
    if (t.shape.size() == 4) fan_in = t.shape[0] * t.shape[1] * t.shape[2];
    else if (t.shape.size() == 2) fan_in = t.shape[1];
    else fan_in = t.shape[0];
    const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (float& v : t.data) v = static_cast<float>(detail::uniform(rng, -limit, limit));
  }
  model.tensor("out.bias").data[0] =
      static_cast<float>(std::log(static_cast<double>(train_pos_frames) / static_cast<double>(train_neg_frames)));
  return model;
}

}  // namespace rcs::crnn
