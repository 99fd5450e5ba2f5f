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
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "resfeat/error.hpp"
#include "resfeat/rft1.hpp"
#include "resfeat/svm.hpp"
#include "resfeat/tensor.hpp"

namespace resfeat {

// Centering-only PCA. `basis` rows are orthonormal principal directions in
// order of decreasing explained variance; each row's largest-magnitude
// coordinate is positive.
struct PCAModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd basis;  // n x D
  Eigen::VectorXd explained_variance;

  std::size_t dim() const { return static_cast<std::size_t>(basis.cols()); }
  std::size_t components() const { return static_cast<std::size_t>(basis.rows()); }
};

namespace detail {

// Columns of X handled per block when forming products in double precision.
inline constexpr Eigen::Index kPcaBlock = 2048;

template <typename T>
Eigen::MatrixXd centered_block(const BasicTensor<T>& X, const Eigen::VectorXd& mean,
                               Eigen::Index c0, Eigen::Index cols) {
  const Eigen::Index s = static_cast<Eigen::Index>(X.dim(0));
  const Eigen::Index D = static_cast<Eigen::Index>(X.dim(1));
  Eigen::MatrixXd B(s, cols);
  for (Eigen::Index i = 0; i < s; ++i) {
    const T* row = X.data() + i * D + c0;
    for (Eigen::Index j = 0; j < cols; ++j)
      B(i, j) = static_cast<double>(row[j]) - mean(c0 + j);
  }
  return B;
}

inline void normalize_signs(Eigen::MatrixXd& basis) {
  for (Eigen::Index r = 0; r < basis.rows(); ++r) {
    Eigen::Index arg = 0;
    for (Eigen::Index c = 1; c < basis.cols(); ++c) {
      if (std::abs(basis(r, c)) > std::abs(basis(r, arg))) arg = c;
    }
    if (basis(r, arg) < 0.0) basis.row(r) *= -1.0;
  }
}

}  // namespace detail

// Fits on the rows of X ([samples, D]). With fewer samples than dimensions
// the samples x samples Gram matrix is decomposed instead of the D x D
// covariance.
template <typename T>
PCAModel pca_fit(const BasicTensor<T>& X, std::size_t n) {
  if (X.rank() != 2) throw ShapeMismatch("pca_fit: data must be rank 2");
  const std::size_t samples = X.dim(0), D = X.dim(1);
  if (samples < 2) throw InvalidConfig("pca_fit: need at least two samples");
  if (n < 1 || n > std::min(D, samples - 1))
    throw InvalidConfig("pca_fit: n = " + std::to_string(n) + " outside [1, " +
                        std::to_string(std::min(D, samples - 1)) + "]");
  const Eigen::Index s = static_cast<Eigen::Index>(samples);
  const Eigen::Index d = static_cast<Eigen::Index>(D);
  const Eigen::Index k = static_cast<Eigen::Index>(n);

  PCAModel m;
  m.mean = Eigen::VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < s; ++i) {
    const T* row = X.data() + i * d;
    for (Eigen::Index j = 0; j < d; ++j) m.mean(j) += static_cast<double>(row[j]);
  }
  m.mean /= static_cast<double>(samples);

  const bool gram = samples < D;
  const Eigen::Index order = gram ? s : d;
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(order, order);
  if (gram) {
    for (Eigen::Index c0 = 0; c0 < d; c0 += detail::kPcaBlock) {
      const Eigen::Index cols = std::min(detail::kPcaBlock, d - c0);
      const Eigen::MatrixXd B = detail::centered_block(X, m.mean, c0, cols);
      S.noalias() += B * B.transpose();
    }
  } else {
    const Eigen::MatrixXd Xc = detail::centered_block(X, m.mean, 0, d);
    S.noalias() = Xc.transpose() * Xc;
  }
  if (S.trace() <= 0.0)
    throw DegenerateData("pca_fit: centered data is identically zero");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
  if (eig.info() != Eigen::Success) throw DegenerateData("pca_fit: eigensolver failed");
  // Eigen returns ascending eigenvalues.
  const Eigen::VectorXd values = eig.eigenvalues().reverse();
  const Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();
  const double floor = values(0) * 1e-10;
  if (values(k - 1) <= floor)
    throw DegenerateData("pca_fit: data has fewer than " + std::to_string(n) +
                         " directions of nonzero variance");

  m.explained_variance = values.head(k) / static_cast<double>(samples - 1);
  if (gram) {
    // v_i = Xc^T u_i / sqrt(lambda_i)
    m.basis.resize(k, d);
    const Eigen::MatrixXd U = vectors.leftCols(k);
    const Eigen::VectorXd inv = values.head(k).cwiseSqrt().cwiseInverse();
    for (Eigen::Index c0 = 0; c0 < d; c0 += detail::kPcaBlock) {
      const Eigen::Index cols = std::min(detail::kPcaBlock, d - c0);
      const Eigen::MatrixXd B = detail::centered_block(X, m.mean, c0, cols);
      m.basis.middleCols(c0, cols).noalias() = inv.asDiagonal() * (U.transpose() * B);
    }
  } else {
    m.basis = vectors.leftCols(k).transpose();
  }
  detail::normalize_signs(m.basis);
  return m;
}

template <typename T>
BasicTensor<T> pca_transform(const PCAModel& m, std::span<const T> x) {
  if (x.size() != m.dim())
    throw ShapeMismatch("pca_transform: vector length " + std::to_string(x.size()) +
                        ", model expects " + std::to_string(m.dim()));
  Eigen::VectorXd v(static_cast<Eigen::Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j)
    v(static_cast<Eigen::Index>(j)) = static_cast<double>(x[j]);
  const Eigen::VectorXd y = m.basis * (v - m.mean);
  BasicTensor<T> out({m.components()});
  for (std::size_t i = 0; i < m.components(); ++i)
    out[i] = static_cast<T>(y(static_cast<Eigen::Index>(i)));
  return out;
}

template <typename T>
  requires(!std::is_const_v<T>)
BasicTensor<T> pca_transform(const PCAModel& m, std::span<T> x) {
  return pca_transform(m, std::span<const T>(x));
}

template <typename T>
BasicTensor<T> pca_transform(const PCAModel& m, const BasicTensor<T>& x) {
  return pca_transform(m, x.values());
}

// Row-wise transform of a [samples, D] matrix.
template <typename T>
BasicTensor<T> pca_transform_rows(const PCAModel& m, const BasicTensor<T>& X) {
  if (X.rank() != 2) throw ShapeMismatch("pca_transform_rows: data must be rank 2");
  BasicTensor<T> out({X.dim(0), m.components()});
  for (std::size_t i = 0; i < X.dim(0); ++i) {
    const auto y = pca_transform(m, X.row(i));
    std::copy(y.values().begin(), y.values().end(), out.row(i).begin());
  }
  return out;
}

struct SelectNReport {
  std::vector<std::size_t> candidates;
  std::vector<double> accuracy;
  std::size_t chosen = 0;
};

// Picks the PCA size with the best validation accuracy of a linear SVM fitted
// on the reduced training rows. Ties (within `tie_tolerance`) go to the
// smaller n.
template <typename T>
SelectNReport select_n(const std::vector<std::size_t>& candidates,
                       const BasicTensor<T>& train_x, std::span<const int> train_y,
                       const BasicTensor<T>& val_x, std::span<const int> val_y,
                       const SvmOptions& svm, double tie_tolerance = 0.0) {
  if (candidates.empty()) throw InvalidConfig("select_n: no candidates");
  if (val_x.rank() != 2 || val_x.dim(0) != val_y.size() || val_y.empty())
    throw InvalidConfig("select_n: validation rows and labels disagree");
  SelectNReport r;
  r.candidates = candidates;
  double best_acc = -1.0;
  for (std::size_t n : candidates) {
    const auto pca = pca_fit(train_x, n);
    const auto model = svm_train(pca_transform_rows(pca, train_x), train_y, svm);
    const auto pred = svm_predict_rows(model, pca_transform_rows(pca, val_x));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == val_y[i];
    const double acc = static_cast<double>(correct) / static_cast<double>(pred.size());
    r.accuracy.push_back(acc);
  }
  for (double acc : r.accuracy) best_acc = std::max(best_acc, acc);
  r.chosen = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (r.accuracy[i] >= best_acc - tie_tolerance &&
        (r.chosen == 0 || candidates[i] < r.chosen))
      r.chosen = candidates[i];
  }
  return r;
}

inline TensorStore pca_to_store(const PCAModel& m) {
  const std::size_t D = m.dim(), n = m.components();
  Tensor mean({D}), basis({n, D}), var({n});
  for (std::size_t j = 0; j < D; ++j)
    mean[j] = static_cast<float>(m.mean(static_cast<Eigen::Index>(j)));
  for (std::size_t i = 0; i < n; ++i) {
    var[i] = static_cast<float>(m.explained_variance(static_cast<Eigen::Index>(i)));
    for (std::size_t j = 0; j < D; ++j)
      basis[i * D + j] = static_cast<float>(
          m.basis(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
  }
  TensorStore s;
  s.put("pca.mean", std::move(mean));
  s.put("pca.basis", std::move(basis));
  s.put("pca.explained_variance", std::move(var));
  return s;
}

inline PCAModel pca_from_store(const TensorStore& s) {
  const Tensor& basis = s.get("pca.basis");
  if (basis.rank() != 2) throw ShapeMismatch("pca.basis must be rank 2");
  const std::size_t n = basis.dim(0), D = basis.dim(1);
  const Tensor& mean = s.get("pca.mean", Shape{D});
  const Tensor& var = s.get("pca.explained_variance", Shape{n});
  PCAModel m;
  m.mean.resize(static_cast<Eigen::Index>(D));
  m.basis.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(D));
  m.explained_variance.resize(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < D; ++j) m.mean(static_cast<Eigen::Index>(j)) = mean[j];
  for (std::size_t i = 0; i < n; ++i) {
    m.explained_variance(static_cast<Eigen::Index>(i)) = var[i];
    for (std::size_t j = 0; j < D; ++j)
      m.basis(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = basis[i * D + j];
  }
  return m;
}

}  // namespace resfeat
