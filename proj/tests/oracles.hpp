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

// Independent reference implementations used only by the tests. Everything
// here is written as plain loops in double precision and never calls into
// the library kernels it is compared against.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "resfeat/random.hpp"
#include "resfeat/tensor.hpp"

namespace resfeat::testing {

template <typename T>
BasicTensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  BasicTensor<T> t(std::move(shape));
  for (T& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Elementwise |a - b| <= rel * max(|b|, floor).
template <typename A, typename B>
double max_rel_error(const A& a, const B& b, double floor = 1e-12) {
  double worst = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double ref = static_cast<double>(b[i]);
    const double err = std::abs(static_cast<double>(a[i]) - ref);
    worst = std::max(worst, err / std::max(std::abs(ref), floor));
  }
  return worst;
}

// out[o][y][x] = sum_{c,i,j} w[o][c][i][j] * in[c][y*s+i-p][x*s+j-p] + b[o]
inline std::vector<double> conv2d_oracle(const std::vector<double>& in, std::size_t C,
                                         std::size_t H, std::size_t W,
                                         const std::vector<double>& w, std::size_t O,
                                         std::size_t kh, std::size_t kw,
                                         const std::vector<double>& bias, std::size_t stride,
                                         std::size_t pad, std::size_t& oh, std::size_t& ow) {
  oh = (H + 2 * pad - kh) / stride + 1;
  ow = (W + 2 * pad - kw) / stride + 1;
  std::vector<double> out(O * oh * ow, 0.0);
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double s = bias.empty() ? 0.0 : bias[o];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) {
              const long sy = static_cast<long>(y * stride + i) - static_cast<long>(pad);
              const long sx = static_cast<long>(x * stride + j) - static_cast<long>(pad);
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(H) || sx >= static_cast<long>(W))
                continue;
              s += w[((o * C + c) * kh + i) * kw + j] *
                   in[(c * H + static_cast<std::size_t>(sy)) * W + static_cast<std::size_t>(sx)];
            }
        out[(o * oh + y) * ow + x] = s;
      }
  return out;
}

inline std::vector<double> maxpool_oracle(const std::vector<double>& in, std::size_t C,
                                          std::size_t H, std::size_t W, std::size_t k,
                                          std::size_t stride, std::size_t pad,
                                          std::size_t& oh, std::size_t& ow) {
  oh = (H + 2 * pad - k) / stride + 1;
  ow = (W + 2 * pad - k) / stride + 1;
  std::vector<double> out(C * oh * ow, -std::numeric_limits<double>::infinity());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x)
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const long sy = static_cast<long>(y * stride + i) - static_cast<long>(pad);
            const long sx = static_cast<long>(x * stride + j) - static_cast<long>(pad);
            if (sy < 0 || sx < 0 || sy >= static_cast<long>(H) || sx >= static_cast<long>(W))
              continue;
            auto& o = out[(c * oh + y) * ow + x];
            o = std::max(o, in[(c * H + static_cast<std::size_t>(sy)) * W +
                               static_cast<std::size_t>(sx)]);
          }
  return out;
}

// Central differences of a scalar function of a parameter vector.
inline std::vector<double> numeric_gradient(const std::function<double()>& f,
                                            std::vector<double*> params, double h = 1e-6) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = *params[i];
    *params[i] = saved + h;
    const double up = f();
    *params[i] = saved - h;
    const double down = f();
    *params[i] = saved;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// |a - n| / max(|a| + |n|, floor); the usual symmetric relative error.
inline double grad_rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), floor);
}

// Cyclic Jacobi eigensolver for a dense symmetric matrix (row-major n x n).
// Returns eigenvalues in descending order and matching unit eigenvectors as
// rows.
inline void jacobi_eigen(std::vector<double> a, std::size_t n, std::vector<double>& values,
                         std::vector<std::vector<double>>& vectors) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        (i == j ? diag : off) += a[i * n + j] * a[i * n + j];
    if (off <= 1e-30 * diag || off == 0.0) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return a[x * n + x] > a[y * n + y]; });
  values.clear();
  vectors.clear();
  for (std::size_t i : order) {
    values.push_back(a[i * n + i]);
    std::vector<double> col(n);
    for (std::size_t k = 0; k < n; ++k) col[k] = v[k * n + i];
    vectors.push_back(std::move(col));
  }
}

// PCA projections of every row of X (samples x D) onto the top-n
// covariance eigenvectors, with each direction's largest-magnitude
// coordinate made positive.
inline std::vector<std::vector<double>> pca_projection_oracle(
    const std::vector<std::vector<double>>& X, std::size_t n,
    std::vector<double>* variances = nullptr) {
  const std::size_t s = X.size(), D = X[0].size();
  std::vector<double> mean(D, 0.0);
  for (const auto& r : X)
    for (std::size_t j = 0; j < D; ++j) mean[j] += r[j] / static_cast<double>(s);
  std::vector<double> cov(D * D, 0.0);
  for (const auto& r : X)
    for (std::size_t i = 0; i < D; ++i)
      for (std::size_t j = 0; j < D; ++j)
        cov[i * D + j] += (r[i] - mean[i]) * (r[j] - mean[j]) / static_cast<double>(s - 1);
  std::vector<double> values;
  std::vector<std::vector<double>> vecs;
  jacobi_eigen(cov, D, values, vecs);
  for (auto& v : vecs) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < D; ++j)
      if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
    if (v[arg] < 0)
      for (double& e : v) e = -e;
  }
  if (variances) variances->assign(values.begin(), values.begin() + static_cast<long>(n));
  std::vector<std::vector<double>> proj(s, std::vector<double>(n, 0.0));
  for (std::size_t r = 0; r < s; ++r)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < D; ++j) proj[r][k] += vecs[k][j] * (X[r][j] - mean[j]);
  return proj;
}

}  // namespace resfeat::testing
