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
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "resfeat/error.hpp"

namespace resfeat {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  return os.str();
}

// Dense row-major tensor. Image-like data is channels-first (C, H, W), so the
// linear index of (c, h, w) is c*H*W + h*W + w. Every extent is >= 1.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_size(shape_), fill);
  }

  BasicTensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (shape_size(shape_) != data_.size()) {
      throw ShapeMismatch("tensor of shape " + shape_string(shape_) +
                          " needs " + std::to_string(shape_size(shape_)) +
                          " values, got " + std::to_string(data_.size()));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const T> values() const noexcept { return data_; }
  std::span<T> values() noexcept { return data_; }
  const T* data() const noexcept { return data_.data(); }
  T* data() noexcept { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // (c, h, w) access for rank-3 tensors.
  T& at(std::size_t c, std::size_t h, std::size_t w) {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }
  const T& at(std::size_t c, std::size_t h, std::size_t w) const {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }

  // Row view of a rank-2 tensor.
  std::span<const T> row(std::size_t r) const {
    return std::span<const T>(data_).subspan(r * shape_[1], shape_[1]);
  }
  std::span<T> row(std::size_t r) {
    return std::span<T>(data_).subspan(r * shape_[1], shape_[1]);
  }

  template <typename U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static void validate_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeMismatch("tensor rank must be at least 1");
    for (std::size_t e : shape) {
      if (e == 0) {
        throw ShapeMismatch("tensor extents must be >= 1, got " +
                            shape_string(shape));
      }
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

inline void expect_same_shape(const Shape& a, const Shape& b,
                              const char* what) {
  if (a != b) {
    throw ShapeMismatch(std::string(what) + ": " + shape_string(a) + " vs " +
                        shape_string(b));
  }
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& t, Shape new_shape) {
  for (std::size_t e : new_shape) {
    if (e == 0) throw ShapeMismatch("reshape: zero extent");
  }
  if (new_shape.empty() || shape_size(new_shape) != t.size()) {
    throw ShapeMismatch("reshape: " + shape_string(t.shape()) + " -> " +
                        shape_string(new_shape));
  }
  return BasicTensor<T>(std::move(new_shape),
                        std::vector<T>(t.values().begin(), t.values().end()));
}

template <typename T>
BasicTensor<T> flatten(const BasicTensor<T>& t) {
  return reshape(t, Shape{t.size()});
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  expect_same_shape(a.shape(), b.shape(), "add");
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& t) {
  BasicTensor<T> out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = std::max(t[i], T{0});
  return out;
}

template <typename T>
void relu_inplace(BasicTensor<T>& t) {
  for (T& v : t.values()) v = std::max(v, T{0});
}

// Gradient of relu: passes grad_out where the forward input was positive.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input,
                             const BasicTensor<T>& grad_out) {
  expect_same_shape(input.shape(), grad_out.shape(), "relu_backward");
  BasicTensor<T> grad(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    grad[i] = input[i] > T{0} ? grad_out[i] : T{0};
  }
  return grad;
}

}  // namespace resfeat
