// SPDX-License-Identifier: Apache-2.0
#include "rcs/kernels/conv.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <vector>

namespace rcs::kernels {

namespace {

constexpr std::size_t kRowsPerChunk = 2048;
constexpr std::size_t kMaxReductionBlocks = 8;

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

std::size_t chunk_frames(const ConvShape& s) { return std::max<std::size_t>(1, kRowsPerChunk / s.bands); }

// Patch rows for output frames [t0, t1) of one segment; row (t - t0) * bands + f.
template <typename T>
void im2col(const ConvShape& s, const T* segment, std::size_t t0, std::size_t t1, RowMatrix<T>& col) {
  const std::size_t cin = s.in_channels;
  for (std::size_t t = t0; t < t1; ++t) {
    for (std::size_t f = 0; f < s.bands; ++f) {
      T* dst = col.row(static_cast<Eigen::Index>((t - t0) * s.bands + f)).data();
      for (std::size_t dt = 0; dt < kConvSize; ++dt) {
        const auto ts = static_cast<std::ptrdiff_t>(t + dt) - static_cast<std::ptrdiff_t>(kConvPad);
        const bool t_ok = ts >= 0 && ts < static_cast<std::ptrdiff_t>(s.frames);
        for (std::size_t df = 0; df < kConvSize; ++df, dst += cin) {
          const auto fs = static_cast<std::ptrdiff_t>(f + df) - static_cast<std::ptrdiff_t>(kConvPad);
          if (t_ok && fs >= 0 && fs < static_cast<std::ptrdiff_t>(s.bands)) {
            const T* src = segment + (static_cast<std::size_t>(ts) * s.bands + static_cast<std::size_t>(fs)) * cin;
            std::copy(src, src + cin, dst);
          } else {
            std::fill(dst, dst + cin, T{0});
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvShape& s, const RowMatrix<T>& dcol, std::size_t t0, std::size_t t1, T* segment_grad) {
  const std::size_t cin = s.in_channels;
  for (std::size_t t = t0; t < t1; ++t) {
    for (std::size_t f = 0; f < s.bands; ++f) {
      const T* src = dcol.row(static_cast<Eigen::Index>((t - t0) * s.bands + f)).data();
      for (std::size_t dt = 0; dt < kConvSize; ++dt) {
        const auto ts = static_cast<std::ptrdiff_t>(t + dt) - static_cast<std::ptrdiff_t>(kConvPad);
        const bool t_ok = ts >= 0 && ts < static_cast<std::ptrdiff_t>(s.frames);
        for (std::size_t df = 0; df < kConvSize; ++df, src += cin) {
          const auto fs = static_cast<std::ptrdiff_t>(f + df) - static_cast<std::ptrdiff_t>(kConvPad);
          if (!t_ok || fs < 0 || fs >= static_cast<std::ptrdiff_t>(s.bands)) continue;
          T* dst = segment_grad + (static_cast<std::size_t>(ts) * s.bands + static_cast<std::size_t>(fs)) * cin;
          for (std::size_t c = 0; c < cin; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

}  // namespace

std::size_t reduction_blocks(std::size_t batch) { return std::max<std::size_t>(1, std::min(batch, kMaxReductionBlocks)); }

template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> input, std::span<const T> kernel,
                    std::span<const T> bias, std::span<T> output) {
  const auto k_rows = static_cast<Eigen::Index>(kConvSize * kConvSize * s.in_channels);
  const auto cout = static_cast<Eigen::Index>(s.out_channels);
  const Eigen::Map<const RowMatrix<T>> weights(kernel.data(), k_rows, cout);
  const Eigen::Map<const RowVector<T>> b(bias.data(), cout);
  const std::size_t seg_in = s.frames * s.bands * s.in_channels;
  const std::size_t seg_out = s.frames * s.bands * s.out_channels;
  const std::size_t step = chunk_frames(s);
  const auto batch = static_cast<std::ptrdiff_t>(s.batch);

#pragma omp parallel
  {
    RowMatrix<T> col(static_cast<Eigen::Index>(step * s.bands), k_rows);
#pragma omp for schedule(static)
    for (std::ptrdiff_t bi = 0; bi < batch; ++bi) {
      const auto n = static_cast<std::size_t>(bi);
      for (std::size_t t0 = 0; t0 < s.frames; t0 += step) {
        const std::size_t t1 = std::min(s.frames, t0 + step);
        const auto rows = static_cast<Eigen::Index>((t1 - t0) * s.bands);
        im2col(s, input.data() + n * seg_in, t0, t1, col);
        Eigen::Map<RowMatrix<T>> out(output.data() + n * seg_out + t0 * s.bands * s.out_channels, rows, cout);
        out.noalias() = col.topRows(rows) * weights;
        out.rowwise() += b;
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvShape& s, std::span<const T> input, std::span<const T> kernel,
                     std::span<const T> grad_output, std::span<T> grad_input, std::span<T> grad_kernel,
                     std::span<T> grad_bias) {
  const auto k_rows = static_cast<Eigen::Index>(kConvSize * kConvSize * s.in_channels);
  const auto cout = static_cast<Eigen::Index>(s.out_channels);
  const Eigen::Map<const RowMatrix<T>> weights(kernel.data(), k_rows, cout);
  const std::size_t seg_in = s.frames * s.bands * s.in_channels;
  const std::size_t seg_out = s.frames * s.bands * s.out_channels;
  const std::size_t step = chunk_frames(s);
  const bool want_input = !grad_input.empty();
  const std::size_t blocks = reduction_blocks(s.batch);
  std::vector<RowMatrix<T>> dw(blocks, RowMatrix<T>::Zero(k_rows, cout));
  std::vector<RowVector<T>> db(blocks, RowVector<T>::Zero(cout));

#pragma omp parallel
  {
    RowMatrix<T> col(static_cast<Eigen::Index>(step * s.bands), k_rows);
    RowMatrix<T> dcol(static_cast<Eigen::Index>(step * s.bands), k_rows);
#pragma omp for schedule(static)
    for (std::ptrdiff_t blk = 0; blk < static_cast<std::ptrdiff_t>(blocks); ++blk) {
      const auto k = static_cast<std::size_t>(blk);
      const std::size_t first = k * s.batch / blocks;
      const std::size_t last = (k + 1) * s.batch / blocks;
      for (std::size_t n = first; n < last; ++n) {
        T* gin = want_input ? grad_input.data() + n * seg_in : nullptr;
        if (gin) std::fill(gin, gin + seg_in, T{0});
        for (std::size_t t0 = 0; t0 < s.frames; t0 += step) {
          const std::size_t t1 = std::min(s.frames, t0 + step);
          const auto rows = static_cast<Eigen::Index>((t1 - t0) * s.bands);
          im2col(s, input.data() + n * seg_in, t0, t1, col);
          const Eigen::Map<const RowMatrix<T>> dout(
              grad_output.data() + n * seg_out + t0 * s.bands * s.out_channels, rows, cout);
          dw[k].noalias() += col.topRows(rows).transpose() * dout;
          db[k] += dout.colwise().sum();
          if (gin) {
            dcol.topRows(rows).noalias() = dout * weights.transpose();
            col2im_add(s, dcol, t0, t1, gin);
          }
        }
      }
    }
  }

  Eigen::Map<RowMatrix<T>> gk(grad_kernel.data(), k_rows, cout);
  Eigen::Map<RowVector<T>> gb(grad_bias.data(), cout);
  gk = dw[0];
  gb = db[0];
  for (std::size_t k = 1; k < blocks; ++k) {
    gk += dw[k];
    gb += db[k];
  }
}

namespace reference {

template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> input, std::span<const T> kernel,
                    std::span<const T> bias, std::span<T> output) {
  const auto at_in = [&](std::size_t n, std::size_t t, std::size_t f, std::size_t c) {
    return input[((n * s.frames + t) * s.bands + f) * s.in_channels + c];
  };
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t t = 0; t < s.frames; ++t)
      for (std::size_t f = 0; f < s.bands; ++f)
        for (std::size_t co = 0; co < s.out_channels; ++co) {
          double acc = bias[co];
          for (std::size_t dt = 0; dt < kConvSize; ++dt)
            for (std::size_t df = 0; df < kConvSize; ++df) {
              const auto ts = static_cast<std::ptrdiff_t>(t + dt) - static_cast<std::ptrdiff_t>(kConvPad);
              const auto fs = static_cast<std::ptrdiff_t>(f + df) - static_cast<std::ptrdiff_t>(kConvPad);
              if (ts < 0 || fs < 0 || ts >= static_cast<std::ptrdiff_t>(s.frames) ||
                  fs >= static_cast<std::ptrdiff_t>(s.bands))
                continue;
              for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
                const double w = kernel[((dt * kConvSize + df) * s.in_channels + ci) * s.out_channels + co];
                acc += w * at_in(n, static_cast<std::size_t>(ts), static_cast<std::size_t>(fs), ci);
              }
            }
          output[((n * s.frames + t) * s.bands + f) * s.out_channels + co] = static_cast<T>(acc);
        }
}

template <typename T>
void conv2d_backward(const ConvShape& s, std::span<const T> input, std::span<const T> kernel,
                     std::span<const T> grad_output, std::span<T> grad_input, std::span<T> grad_kernel,
                     std::span<T> grad_bias) {
  std::vector<double> gin(grad_input.empty() ? 0 : s.input_size(), 0.0);
  std::vector<double> gk(s.kernel_size(), 0.0);
  std::vector<double> gb(s.out_channels, 0.0);
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t t = 0; t < s.frames; ++t)
      for (std::size_t f = 0; f < s.bands; ++f)
        for (std::size_t co = 0; co < s.out_channels; ++co) {
          const double g = grad_output[((n * s.frames + t) * s.bands + f) * s.out_channels + co];
          gb[co] += g;
          for (std::size_t dt = 0; dt < kConvSize; ++dt)
            for (std::size_t df = 0; df < kConvSize; ++df) {
              const auto ts = static_cast<std::ptrdiff_t>(t + dt) - static_cast<std::ptrdiff_t>(kConvPad);
              const auto fs = static_cast<std::ptrdiff_t>(f + df) - static_cast<std::ptrdiff_t>(kConvPad);
              if (ts < 0 || fs < 0 || ts >= static_cast<std::ptrdiff_t>(s.frames) ||
                  fs >= static_cast<std::ptrdiff_t>(s.bands))
                continue;
              for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
                const std::size_t in_idx =
                    ((n * s.frames + static_cast<std::size_t>(ts)) * s.bands + static_cast<std::size_t>(fs)) *
                        s.in_channels + ci;
                const std::size_t k_idx = ((dt * kConvSize + df) * s.in_channels + ci) * s.out_channels + co;
                gk[k_idx] += g * input[in_idx];
                if (!gin.empty()) gin[in_idx] += g * kernel[k_idx];
              }
            }
        }
  std::transform(gk.begin(), gk.end(), grad_kernel.begin(), [](double v) { return static_cast<T>(v); });
  std::transform(gb.begin(), gb.end(), grad_bias.begin(), [](double v) { return static_cast<T>(v); });
  std::transform(gin.begin(), gin.end(), grad_input.begin(), [](double v) { return static_cast<T>(v); });
}

}  // namespace reference

#define RCS_INSTANTIATE_CONV(T)                                                                          \
  template void conv2d_forward<T>(const ConvShape&, std::span<const T>, std::span<const T>,             \
                                  std::span<const T>, std::span<T>);                                    \
  template void conv2d_backward<T>(const ConvShape&, std::span<const T>, std::span<const T>,            \
                                   std::span<const T>, std::span<T>, std::span<T>, std::span<T>);       \
  template void reference::conv2d_forward<T>(const ConvShape&, std::span<const T>, std::span<const T>,  \
                                             std::span<const T>, std::span<T>);                         \
  template void reference::conv2d_backward<T>(const ConvShape&, std::span<const T>, std::span<const T>, \
                                              std::span<const T>, std::span<T>, std::span<T>, std::span<T>);

RCS_INSTANTIATE_CONV(float)
RCS_INSTANTIATE_CONV(double)

#undef RCS_INSTANTIATE_CONV

}  // namespace rcs::kernels
