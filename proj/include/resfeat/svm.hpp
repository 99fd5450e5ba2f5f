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
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "resfeat/error.hpp"
#include "resfeat/random.hpp"
#include "resfeat/rft1.hpp"
#include "resfeat/tensor.hpp"

namespace resfeat {

struct SvmOptions {
  double C = 1.0;
  double tol = 1e-3;           // relative duality gap
  std::size_t max_iter = 1000; // epochs
  std::uint64_t seed = 0;
  bool normalize = true;       // scale rows to unit L2 norm
  bool bias = true;            // bias as an extra constant feature
};

// One-vs-rest linear classifier. Row k of `weights` scores classes[k].
struct SVMModel {
  std::vector<int> classes;
  BasicTensor<double> weights;  // [K, n]
  BasicTensor<double> biases;   // [K]
  double C = 1.0;
  bool normalize = true;

  std::size_t num_classes() const { return classes.size(); }
  std::size_t dim() const { return weights.dim(1); }
};

// Per binary problem diagnostics, one entry per epoch.
struct BinaryTrace {
  std::vector<double> dual_objective;
  std::vector<double> duality_gap;
  std::vector<double> alpha;  // final dual variables
  double min_alpha_seen = 0.0;
  double max_alpha_seen = 0.0;
  bool converged = false;
};

struct SvmTrace {
  std::vector<BinaryTrace> per_class;
};

struct SvmPrediction {
  int label = 0;
  std::vector<double> scores;
};

struct CVReport {
  std::vector<double> grid;
  std::vector<std::vector<double>> fold_accuracies;  // grid x k
  std::vector<double> mean_accuracy;
  double chosen_C = 0.0;
  std::vector<std::size_t> fold_of;  // fold index of every sample
};

inline std::vector<double> default_c_grid() {
  return {std::ldexp(1.0, -5), std::ldexp(1.0, -3), std::ldexp(1.0, -1),
          std::ldexp(1.0, 1),  std::ldexp(1.0, 3),  std::ldexp(1.0, 5)};
}

namespace detail {

template <typename T>
std::vector<double> svm_rows(const BasicTensor<T>& X, bool normalize) {
  std::vector<double> rows(X.values().begin(), X.values().end());
  const std::size_t n = X.dim(1);
  for (std::size_t i = 0; i < X.dim(0); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(rows[i * n + j]))
        throw InvalidConfig("svm: non-finite feature in row " + std::to_string(i));
    }
    if (!normalize) continue;
    double sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) sq += rows[i * n + j] * rows[i * n + j];
    if (sq > 0.0) {
      const double inv = 1.0 / std::sqrt(sq);
      for (std::size_t j = 0; j < n; ++j) rows[i * n + j] *= inv;
    }
  }
  return rows;
}

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += a[j] * b[j];
  return s;
}

// Dual coordinate descent for
//   min_w 0.5 |w|^2 + C sum_i max(0, 1 - y_i w.x_i)
// where the last component of w (when `bias`) multiplies a constant 1.
// Returns w of length n (+1 with bias).
inline std::vector<double> solve_binary_hinge(const std::vector<double>& rows,
                                              std::size_t samples, std::size_t n,
                                              const std::vector<signed char>& y,
                                              const SvmOptions& opt, Rng rng,
                                              BinaryTrace* trace) {
  const std::size_t dw = n + (opt.bias ? 1 : 0);
  const double bias_x = opt.bias ? 1.0 : 0.0;
  std::vector<double> w(dw, 0.0), alpha(samples, 0.0), qii(samples);
  for (std::size_t i = 0; i < samples; ++i)
    qii[i] = dot(&rows[i * n], &rows[i * n], n) + bias_x * bias_x;
  std::vector<std::size_t> order(samples);
  std::iota(order.begin(), order.end(), std::size_t{0});

  auto margin = [&](std::size_t i) {
    return dot(w.data(), &rows[i * n], n) + (opt.bias ? w[n] : 0.0);
  };

  double lo = 0.0, hi = 0.0;
  bool converged = false;
  for (std::size_t epoch = 0; epoch < opt.max_iter; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t i : order) {
      const double yi = y[i];
      const double g = yi * margin(i) - 1.0;
      double pg = g;
      if (alpha[i] <= 0.0) pg = std::min(g, 0.0);
      else if (alpha[i] >= opt.C) pg = std::max(g, 0.0);
      if (pg == 0.0) continue;
      const double old = alpha[i];
      alpha[i] = qii[i] > 0.0 ? std::clamp(old - g / qii[i], 0.0, opt.C) : opt.C;
      const double d = (alpha[i] - old) * yi;
      if (d != 0.0) {
        const double* x = &rows[i * n];
        for (std::size_t j = 0; j < n; ++j) w[j] += d * x[j];
        if (opt.bias) w[n] += d;
      }
      lo = std::min(lo, alpha[i]);
      hi = std::max(hi, alpha[i]);
    }
    const double wsq = dot(w.data(), w.data(), dw);
    double hinge = 0.0;
    for (std::size_t i = 0; i < samples; ++i)
      hinge += std::max(0.0, 1.0 - y[i] * margin(i));
    const double primal = 0.5 * wsq + opt.C * hinge;
    const double dual = std::accumulate(alpha.begin(), alpha.end(), 0.0) - 0.5 * wsq;
    const double gap = primal - dual;
    if (trace) {
      trace->dual_objective.push_back(dual);
      trace->duality_gap.push_back(gap);
    }
    if (gap <= opt.tol * std::abs(primal)) {
      converged = true;
      break;
    }
  }
  if (trace) {
    trace->alpha = alpha;
    trace->min_alpha_seen = lo;
    trace->max_alpha_seen = hi;
    trace->converged = converged;
  }
  return w;
}

}  // namespace detail

// One-vs-rest training; each class problem uses its own stream forked from
// opt.seed, so results do not depend on evaluation order.
template <typename T>
SVMModel svm_train(const BasicTensor<T>& X, std::span<const int> y,
                   const SvmOptions& opt, SvmTrace* trace = nullptr) {
  if (X.rank() != 2) throw ShapeMismatch("svm_train: features must be rank 2");
  if (X.dim(0) != y.size())
    throw ShapeMismatch("svm_train: " + std::to_string(X.dim(0)) + " rows but " +
                        std::to_string(y.size()) + " labels");
  if (!(opt.C > 0.0) || !std::isfinite(opt.C)) throw InvalidConfig("svm_train: C must be > 0");
  if (!(opt.tol > 0.0)) throw InvalidConfig("svm_train: tol must be > 0");
  if (opt.max_iter == 0) throw InvalidConfig("svm_train: max_iter must be > 0");
  std::vector<int> classes(y.begin(), y.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2)
    throw SingleClassData("svm_train: need at least two classes");

  const std::size_t samples = X.dim(0), n = X.dim(1), K = classes.size();
  const auto rows = detail::svm_rows(X, opt.normalize);
  SVMModel m;
  m.classes = classes;
  m.weights = BasicTensor<double>({K, n});
  m.biases = BasicTensor<double>({K});
  m.C = opt.C;
  m.normalize = opt.normalize;
  if (trace) trace->per_class.assign(K, {});
  const Rng master(opt.seed);
  std::vector<signed char> yk(samples);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t i = 0; i < samples; ++i) yk[i] = y[i] == classes[k] ? 1 : -1;
    auto w = detail::solve_binary_hinge(rows, samples, n, yk, opt, master.fork(k),
                                        trace ? &trace->per_class[k] : nullptr);
    std::copy_n(w.begin(), n, m.weights.data() + k * n);
    m.biases[k] = opt.bias ? w[n] : 0.0;
  }
  return m;
}

// Highest score wins; ties go to the earlier entry of `classes`.
template <typename T>
SvmPrediction svm_predict(const SVMModel& m, std::span<const T> x) {
  if (x.size() != m.dim())
    throw ShapeMismatch("svm_predict: feature length " + std::to_string(x.size()) +
                        ", model expects " + std::to_string(m.dim()));
  std::vector<double> v(x.begin(), x.end());
  if (m.normalize) {
    const double sq = detail::dot(v.data(), v.data(), v.size());
    if (sq > 0.0) {
      const double inv = 1.0 / std::sqrt(sq);
      for (double& e : v) e *= inv;
    }
  }
  SvmPrediction p;
  p.scores.resize(m.num_classes());
  std::size_t best = 0;
  for (std::size_t k = 0; k < m.num_classes(); ++k) {
    p.scores[k] = detail::dot(m.weights.data() + k * m.dim(), v.data(), v.size()) +
                  m.biases[k];
    if (p.scores[k] > p.scores[best]) best = k;
  }
  p.label = m.classes[best];
  return p;
}

template <typename T>
  requires(!std::is_const_v<T>)
SvmPrediction svm_predict(const SVMModel& m, std::span<T> x) {
  return svm_predict(m, std::span<const T>(x));
}

template <typename T>
std::vector<int> svm_predict_rows(const SVMModel& m, const BasicTensor<T>& X) {
  if (X.rank() != 2) throw ShapeMismatch("svm_predict: features must be rank 2");
  std::vector<int> out(X.dim(0));
  for (std::size_t i = 0; i < X.dim(0); ++i) out[i] = svm_predict(m, X.row(i)).label;
  return out;
}

// Stratified assignment: within each class the shuffled samples are dealt
// round-robin, and the starting fold rotates between classes so fold sizes
// stay balanced. Per fold, each class count is floor or ceil of n_c / k.
inline std::vector<std::size_t> stratified_folds(std::span<const int> y, std::size_t k,
                                                 std::uint64_t seed) {
  if (k < 2) throw InvalidConfig("cross validation needs k >= 2");
  std::vector<int> classes(y.begin(), y.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  std::vector<std::size_t> fold(y.size(), 0);
  const Rng master(seed);
  std::size_t offset = 0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == classes[c]) idx.push_back(i);
    }
    if (idx.size() < k)
      throw InsufficientClassSamples("class " + std::to_string(classes[c]) + " has " +
                                     std::to_string(idx.size()) + " samples, fewer than " +
                                     std::to_string(k) + " folds");
    Rng rng = master.fork(c);
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t j = 0; j < idx.size(); ++j) fold[idx[j]] = (offset + j) % k;
    offset = (offset + idx.size()) % k;
  }
  return fold;
}

template <typename T>
CVReport cross_validate(const BasicTensor<T>& X, std::span<const int> y,
                        const std::vector<double>& grid, std::size_t k,
                        const SvmOptions& base) {
  if (grid.empty()) throw InvalidConfig("cross_validate: empty C grid");
  for (double c : grid) {
    if (!(c > 0.0)) throw InvalidConfig("cross_validate: C values must be > 0");
  }
  if (X.rank() != 2 || X.dim(0) != y.size())
    throw ShapeMismatch("cross_validate: feature rows and labels disagree");
  CVReport r;
  r.grid = grid;
  r.fold_of = stratified_folds(y, k, base.seed);
  const std::size_t n = X.dim(1);
  r.fold_accuracies.assign(grid.size(), std::vector<double>(k, 0.0));
  const Rng master(base.seed);
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<T> train_data, test_data;
    std::vector<int> train_y, test_y;
    for (std::size_t i = 0; i < y.size(); ++i) {
      auto row = X.row(i);
      auto& dst = r.fold_of[i] == f ? test_data : train_data;
      dst.insert(dst.end(), row.begin(), row.end());
      (r.fold_of[i] == f ? test_y : train_y).push_back(y[i]);
    }
    const BasicTensor<T> Xtr({train_y.size(), n}, std::move(train_data));
    const BasicTensor<T> Xte({test_y.size(), n}, std::move(test_data));
    for (std::size_t g = 0; g < grid.size(); ++g) {
      SvmOptions opt = base;
      opt.C = grid[g];
      opt.seed = master.fork(1000 + f).next_u64();
      const auto model = svm_train(Xtr, train_y, opt);
      const auto pred = svm_predict_rows(model, Xte);
      std::size_t correct = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == test_y[i];
      r.fold_accuracies[g][f] =
          static_cast<double>(correct) / static_cast<double>(pred.size());
    }
  }
  r.mean_accuracy.resize(grid.size());
  std::size_t best = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    r.mean_accuracy[g] =
        std::accumulate(r.fold_accuracies[g].begin(), r.fold_accuracies[g].end(), 0.0) /
        static_cast<double>(k);
    const double eps = 1e-12;
    if (r.mean_accuracy[g] > r.mean_accuracy[best] + eps ||
        (std::abs(r.mean_accuracy[g] - r.mean_accuracy[best]) <= eps && grid[g] < grid[best]))
      best = g;
  }
  r.chosen_C = grid[best];
  return r;
}

inline TensorStore svm_to_store(const SVMModel& m) {
  TensorStore s;
  s.put("svm.weights", m.weights.cast<float>());
  s.put("svm.biases", m.biases.cast<float>());
  return s;
}

inline KeyValues svm_sidecar(const SVMModel& m) {
  std::string cls;
  for (std::size_t i = 0; i < m.classes.size(); ++i)
    cls += (i ? "," : "") + std::to_string(m.classes[i]);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", m.C);
  return {{"kind", "svm"}, {"classes", cls}, {"C", buf},
          {"normalize", m.normalize ? "1" : "0"}};
}

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start < s.size()) {
    std::size_t end = s.find(',', start);
    if (end == std::string::npos) end = s.size();
    try {
      out.push_back(std::stoi(s.substr(start, end - start)));
    } catch (const std::exception&) {
      throw CorruptFile("bad integer list '" + s + "'");
    }
    start = end + 1;
  }
  return out;
}

inline SVMModel svm_from_store(const TensorStore& s, const KeyValues& meta) {
  SVMModel m;
  const Tensor& w = s.get("svm.weights");
  if (w.rank() != 2) throw ShapeMismatch("svm.weights must be rank 2");
  s.get("svm.biases", Shape{w.dim(0)});
  auto it = meta.find("classes");
  if (it == meta.end()) throw MetaMismatch("svm sidecar lacks 'classes'");
  m.classes = parse_int_list(it->second);
  if (m.classes.size() != w.dim(0))
    throw MetaMismatch("svm sidecar lists " + std::to_string(m.classes.size()) +
                       " classes, weights have " + std::to_string(w.dim(0)) + " rows");
  m.weights = w.cast<double>();
  m.biases = s.get("svm.biases").cast<double>();
  if (auto c = meta.find("C"); c != meta.end()) m.C = std::stod(c->second);
  if (auto nz = meta.find("normalize"); nz != meta.end()) m.normalize = nz->second == "1";
  return m;
}

}  // namespace resfeat
