/*
 * Copyright 2026 The resfeat Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "resfeat/error.hpp"
#include "resfeat/tensor.hpp"

namespace resfeat {

// Convolution weights are [out_channels, in_channels, kH, kW]. An empty bias
// tensor means "no bias".
template <typename T>
struct ConvParams {
  BasicTensor<T> weights;
  BasicTensor<T> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  bool has_bias() const { return !bias.empty(); }
  std::size_t out_channels() const { return weights.dim(0); }
  std::size_t in_channels() const { return weights.dim(1); }
  std::size_t kernel_h() const { return weights.dim(2); }
  std::size_t kernel_w() const { return weights.dim(3); }

  void validate() const {
    if (weights.rank() != 4)
      throw ShapeMismatch("conv weights must be rank 4, got " +
                          shape_string(weights.shape()));
    if (stride == 0) throw InvalidGeometry("conv stride must be positive");
    if (has_bias() && bias.shape() != Shape{out_channels()})
      throw ShapeMismatch("conv bias " + shape_string(bias.shape()) +
                          " does not match " + std::to_string(out_channels()) +
                          " output channels");
  }
};

template <typename T>
struct BatchNormParams {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
  double epsilon = 1e-5;

  std::size_t channels() const { return gamma.size(); }

  void validate() const {
    const Shape s{gamma.size()};
    if (gamma.rank() != 1 || beta.shape() != s || running_mean.shape() != s ||
        running_var.shape() != s)
      throw ShapeMismatch("batch norm parameter lengths disagree");
    if (!(epsilon > 0.0)) throw InvalidConfig("batch norm epsilon must be > 0");
    for (T v : running_var.values()) {
      if (v < T{0}) throw InvalidConfig("batch norm running_var must be >= 0");
    }
  }

  // Parameters that make batchnorm_infer the identity (up to epsilon).
  static BatchNormParams identity(std::size_t channels) {
    return {BasicTensor<T>({channels}, T{1}), BasicTensor<T>({channels}, T{0}),
            BasicTensor<T>({channels}, T{0}), BasicTensor<T>({channels}, T{1})};
  }
};

// Floor-mode output extent; throws when the window never fits.
inline std::size_t output_extent(std::size_t in, std::size_t kernel,
                                 std::size_t stride, std::size_t pad) {
  if (stride == 0) throw InvalidGeometry("stride must be positive");
  if (in + 2 * pad < kernel)
    throw InvalidGeometry("window " + std::to_string(kernel) +
                          " does not fit extent " + std::to_string(in) +
                          " with padding " + std::to_string(pad));
  return (in + 2 * pad - kernel) / stride + 1;
}

namespace detail {

template <typename T>
void expect_chw(const BasicTensor<T>& t, const char* op) {
  if (t.rank() != 3)
    throw ShapeMismatch(std::string(op) + ": expected C,H,W input, got " +
                        shape_string(t.shape()));
}

// out[m, n] = sum_k w[m, k] * col[k, n] (+ bias[m]), accumulated in double.
// Rows are processed four at a time and columns in blocks so a block of `col`
// is reused from cache across output rows.
template <typename T>
void gemm_rows(const T* w, const T* col, const T* bias, T* out, std::size_t M,
               std::size_t K, std::size_t N) {
  constexpr std::size_t kRows = 4;
  const std::size_t block = std::clamp<std::size_t>(
      (std::size_t{1} << 17) / std::max<std::size_t>(K, 1), 64, 1024);
  std::vector<double> acc(kRows * block);
  for (std::size_t n0 = 0; n0 < N; n0 += block) {
    const std::size_t nb = std::min(block, N - n0);
    for (std::size_t m0 = 0; m0 < M; m0 += kRows) {
      const std::size_t mb = std::min(kRows, M - m0);
      std::fill(acc.begin(), acc.end(), 0.0);
      double* a0 = acc.data();
      double* a1 = a0 + block;
      double* a2 = a1 + block;
      double* a3 = a2 + block;
      for (std::size_t k = 0; k < K; ++k) {
        const T* c = col + k * N + n0;
        if (mb == kRows) {
          const double w0 = w[(m0 + 0) * K + k];
          const double w1 = w[(m0 + 1) * K + k];
          const double w2 = w[(m0 + 2) * K + k];
          const double w3 = w[(m0 + 3) * K + k];
          for (std::size_t j = 0; j < nb; ++j) {
            const double x = c[j];
            a0[j] += w0 * x;
            a1[j] += w1 * x;
            a2[j] += w2 * x;
            a3[j] += w3 * x;
          }
        } else {
          for (std::size_t r = 0; r < mb; ++r) {
            const double wr = w[(m0 + r) * K + k];
            double* ar = acc.data() + r * block;
            for (std::size_t j = 0; j < nb; ++j) ar[j] += wr * static_cast<double>(c[j]);
          }
        }
      }
      for (std::size_t r = 0; r < mb; ++r) {
        const double b = bias ? static_cast<double>(bias[m0 + r]) : 0.0;
        const double* ar = acc.data() + r * block;
        T* o = out + (m0 + r) * N + n0;
        for (std::size_t j = 0; j < nb; ++j) o[j] = static_cast<T>(ar[j] + b);
      }
    }
  }
}

// Unfolds zero-padded receptive fields into a [C*kH*kW, H'*W'] matrix.
template <typename T>
std::vector<T> im2col(const BasicTensor<T>& in, std::size_t kh, std::size_t kw,
                      std::size_t stride, std::size_t pad, std::size_t oh,
                      std::size_t ow) {
  const std::size_t C = in.dim(0), H = in.dim(1), W = in.dim(2);
  std::vector<T> col(C * kh * kw * oh * ow, T{0});
  std::size_t row = 0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j, ++row) {
        T* dst = col.data() + row * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y * stride + i) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
          const T* src = in.data() + (c * H + static_cast<std::size_t>(sy)) * W;
          for (std::size_t x = 0; x < ow; ++x) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x * stride + j) -
                                      static_cast<std::ptrdiff_t>(pad);
            if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(W))
              dst[y * ow + x] = src[sx];
          }
        }
      }
    }
  }
  return col;
}

}  // namespace detail

// Cross-correlation (no kernel flip) with symmetric zero padding.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const ConvParams<T>& p) {
  detail::expect_chw(input, "conv2d");
  p.validate();
  if (input.dim(0) != p.in_channels())
    throw ShapeMismatch("conv2d: input has " + std::to_string(input.dim(0)) +
                        " channels, kernel expects " +
                        std::to_string(p.in_channels()));
  const std::size_t kh = p.kernel_h(), kw = p.kernel_w();
  const std::size_t oh = output_extent(input.dim(1), kh, p.stride, p.padding);
  const std::size_t ow = output_extent(input.dim(2), kw, p.stride, p.padding);
  BasicTensor<T> out({p.out_channels(), oh, ow});
  const T* bias = p.has_bias() ? p.bias.data() : nullptr;
  const std::size_t K = p.in_channels() * kh * kw;
  if (kh == 1 && kw == 1 && p.stride == 1 && p.padding == 0) {
    detail::gemm_rows(p.weights.data(), input.data(), bias, out.data(),
                      p.out_channels(), K, oh * ow);
  } else {
    const auto col = detail::im2col(input, kh, kw, p.stride, p.padding, oh, ow);
    detail::gemm_rows(p.weights.data(), col.data(), bias, out.data(),
                      p.out_channels(), K, oh * ow);
  }
  return out;
}

template <typename T>
BasicTensor<T> batchnorm_infer(const BasicTensor<T>& input,
                               const BatchNormParams<T>& p) {
  detail::expect_chw(input, "batchnorm_infer");
  p.validate();
  if (input.dim(0) != p.channels())
    throw ShapeMismatch("batchnorm_infer: input has " +
                        std::to_string(input.dim(0)) + " channels, parameters " +
                        std::to_string(p.channels()));
  BasicTensor<T> out(input.shape());
  const std::size_t plane = input.dim(1) * input.dim(2);
  for (std::size_t c = 0; c < p.channels(); ++c) {
    const double scale = static_cast<double>(p.gamma[c]) /
                         std::sqrt(static_cast<double>(p.running_var[c]) + p.epsilon);
    const double mean = p.running_mean[c];
    const double shift = p.beta[c];
    const T* src = input.data() + c * plane;
    T* dst = out.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i)
      dst[i] = static_cast<T>((static_cast<double>(src[i]) - mean) * scale + shift);
  }
  return out;
}

// Max over each k x k window. Padded positions never win (they act as -inf).
template <typename T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& input, std::size_t k,
                         std::size_t stride, std::size_t pad = 0) {
  detail::expect_chw(input, "maxpool2d");
  if (k == 0) throw InvalidGeometry("maxpool2d: window must be positive");
  if (pad >= k) throw InvalidGeometry("maxpool2d: padding must be smaller than window");
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const std::size_t oh = output_extent(H, k, stride, pad);
  const std::size_t ow = output_extent(W, k, stride, pad);
  BasicTensor<T> out({C, oh, ow});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        T best = -std::numeric_limits<T>::infinity();
        for (std::size_t i = 0; i < k; ++i) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y * stride + i) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t j = 0; j < k; ++j) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x * stride + j) -
                                      static_cast<std::ptrdiff_t>(pad);
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) continue;
            best = std::max(best, input.at(c, static_cast<std::size_t>(sy),
                                           static_cast<std::size_t>(sx)));
          }
        }
        out.at(c, y, x) = best;
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> global_avgpool(const BasicTensor<T>& input) {
  detail::expect_chw(input, "global_avgpool");
  const std::size_t C = input.dim(0), plane = input.dim(1) * input.dim(2);
  BasicTensor<T> out({C});
  for (std::size_t c = 0; c < C; ++c) {
    double sum = 0.0;
    const T* src = input.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) sum += src[i];
    out[c] = static_cast<T>(sum / static_cast<double>(plane));
  }
  return out;
}

// W . x + b with W of shape [m, n].
template <typename T>
BasicTensor<T> fc_forward(const BasicTensor<T>& input,
                          const BasicTensor<T>& weights,
                          const BasicTensor<T>& bias) {
  if (weights.rank() != 2 || input.rank() != 1 || input.dim(0) != weights.dim(1) ||
      bias.shape() != Shape{weights.dim(0)})
    throw ShapeMismatch("fc_forward: input " + shape_string(input.shape()) +
                        ", weights " + shape_string(weights.shape()) + ", bias " +
                        shape_string(bias.shape()));
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  BasicTensor<T> out({m});
  for (std::size_t i = 0; i < m; ++i) {
    const T* w = weights.data() + i * n;
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      sum += static_cast<double>(w[j]) * static_cast<double>(input[j]);
    out[i] = static_cast<T>(sum + static_cast<double>(bias[i]));
  }
  return out;
}

template <typename T>
struct SoftmaxResult {
  double loss = 0.0;
  BasicTensor<T> probs;
};

// Max-shifted softmax and the cross-entropy of `label`, computed in double.
template <typename T>
SoftmaxResult<T> softmax_ce(const BasicTensor<T>& logits, std::size_t label) {
  if (logits.rank() != 1) throw ShapeMismatch("softmax_ce: logits must be rank 1");
  const std::size_t k = logits.size();
  if (label >= k)
    throw IndexOutOfRange("softmax_ce: label " + std::to_string(label) +
                          " out of range for " + std::to_string(k) + " classes");
  double top = -std::numeric_limits<double>::infinity();
  for (T v : logits.values()) top = std::max(top, static_cast<double>(v));
  std::vector<double> e(k);
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    e[i] = std::exp(static_cast<double>(logits[i]) - top);
    sum += e[i];
  }
  SoftmaxResult<T> r;
  r.probs = BasicTensor<T>({k});
  for (std::size_t i = 0; i < k; ++i) r.probs[i] = static_cast<T>(e[i] / sum);
  r.loss = std::log(sum) - (static_cast<double>(logits[label]) - top);
  return r;
}

template <typename T>
struct ConvGrads {
  BasicTensor<T> input;
  BasicTensor<T> weights;
  BasicTensor<T> bias;  // empty when the convolution has no bias
};

// Gradients of a 1x1, stride-1, unpadded convolution.
template <typename T>
ConvGrads<T> conv1x1_backward(const BasicTensor<T>& input, const ConvParams<T>& p,
                              const BasicTensor<T>& grad_out) {
  detail::expect_chw(input, "conv1x1_backward");
  p.validate();
  if (p.kernel_h() != 1 || p.kernel_w() != 1 || p.stride != 1 || p.padding != 0)
    throw UnsupportedGeometry("conv1x1_backward: only 1x1 kernels with stride 1 and no padding");
  const std::size_t C = p.in_channels(), M = p.out_channels();
  if (input.dim(0) != C)
    throw ShapeMismatch("conv1x1_backward: input channel mismatch");
  const Shape out_shape{M, input.dim(1), input.dim(2)};
  expect_same_shape(grad_out.shape(), out_shape, "conv1x1_backward grad_out");
  const std::size_t P = input.dim(1) * input.dim(2);

  ConvGrads<T> g;
  g.input = BasicTensor<T>(input.shape());
  g.weights = BasicTensor<T>(p.weights.shape());
  // grad_input[c, :] = sum_m w[m, c] grad_out[m, :]
  std::vector<double> acc(P);
  for (std::size_t c = 0; c < C; ++c) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t m = 0; m < M; ++m) {
      const double w = p.weights[m * C + c];
      const T* go = grad_out.data() + m * P;
      for (std::size_t i = 0; i < P; ++i) acc[i] += w * static_cast<double>(go[i]);
    }
    T* gi = g.input.data() + c * P;
    for (std::size_t i = 0; i < P; ++i) gi[i] = static_cast<T>(acc[i]);
  }
  // grad_w[m, c] = <grad_out[m, :], input[c, :]>
  for (std::size_t m = 0; m < M; ++m) {
    const T* go = grad_out.data() + m * P;
    for (std::size_t c = 0; c < C; ++c) {
      const T* x = input.data() + c * P;
      double sum = 0.0;
      for (std::size_t i = 0; i < P; ++i)
        sum += static_cast<double>(go[i]) * static_cast<double>(x[i]);
      g.weights[m * C + c] = static_cast<T>(sum);
    }
  }
  if (p.has_bias()) {
    g.bias = BasicTensor<T>({M});
    for (std::size_t m = 0; m < M; ++m) {
      double sum = 0.0;
      const T* go = grad_out.data() + m * P;
      for (std::size_t i = 0; i < P; ++i) sum += go[i];
      g.bias[m] = static_cast<T>(sum);
    }
  }
  return g;
}

// Routes each output gradient to the argmax of its window. Ties go to the
// first position in row-major scan order.
template <typename T>
BasicTensor<T> maxpool_backward(const BasicTensor<T>& input, std::size_t k,
                                std::size_t stride, const BasicTensor<T>& grad_out,
                                std::size_t pad = 0) {
  detail::expect_chw(input, "maxpool_backward");
  if (k == 0 || pad >= k) throw InvalidGeometry("maxpool_backward: bad window");
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const std::size_t oh = output_extent(H, k, stride, pad);
  const std::size_t ow = output_extent(W, k, stride, pad);
  expect_same_shape(grad_out.shape(), Shape{C, oh, ow}, "maxpool_backward grad_out");
  BasicTensor<T> grad(input.shape());
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t by = 0, bx = 0;
        bool found = false;
        for (std::size_t i = 0; i < k; ++i) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y * stride + i) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t j = 0; j < k; ++j) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x * stride + j) -
                                      static_cast<std::ptrdiff_t>(pad);
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) continue;
            const T v = input.at(c, static_cast<std::size_t>(sy),
                                 static_cast<std::size_t>(sx));
            if (!found || v > best) {
              best = v;
              by = static_cast<std::size_t>(sy);
              bx = static_cast<std::size_t>(sx);
              found = true;
            }
          }
        }
        grad.at(c, by, bx) += grad_out.at(c, y, x);
      }
    }
  }
  return grad;
}

template <typename T>
struct FcGrads {
  BasicTensor<T> input;
  BasicTensor<T> weights;
  BasicTensor<T> bias;
};

template <typename T>
FcGrads<T> fc_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                       const BasicTensor<T>& grad_out) {
  if (weights.rank() != 2 || input.rank() != 1 || input.dim(0) != weights.dim(1) ||
      grad_out.shape() != Shape{weights.dim(0)})
    throw ShapeMismatch("fc_backward: input " + shape_string(input.shape()) +
                        ", weights " + shape_string(weights.shape()) +
                        ", grad_out " + shape_string(grad_out.shape()));
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  FcGrads<T> g;
  g.input = BasicTensor<T>({n});
  g.weights = BasicTensor<T>(weights.shape());
  g.bias = grad_out;
  std::vector<double> acc(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double go = grad_out[i];
    const T* w = weights.data() + i * n;
    T* gw = g.weights.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      acc[j] += go * static_cast<double>(w[j]);
      gw[j] = static_cast<T>(go * static_cast<double>(input[j]));
    }
  }
  for (std::size_t j = 0; j < n; ++j) g.input[j] = static_cast<T>(acc[j]);
  return g;
}

}  // namespace resfeat
