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
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "resfeat/error.hpp"
#include "resfeat/rft1.hpp"
#include "resfeat/tensor.hpp"

namespace resfeat {

// Provenance of a feature matrix. `map_shape` is the C x H x W geometry of
// the tapped activation before flattening.
struct FeatureMeta {
  std::string tap;
  std::string variant;
  std::string preprocess;
  std::string reduction = "none";
  std::string map_shape;
  std::vector<std::string> classes;
};

// Row i of `features` belongs to labels[i]. groups[i] identifies the source
// image, so augmented views of one image share a group.
struct FeatureSet {
  Tensor features;  // [rows, dim]
  std::vector<int> labels;
  std::vector<int> groups;
  FeatureMeta meta;

  std::size_t rows() const { return labels.size(); }
  std::size_t dim() const { return features.dim(1); }
};

inline std::string join(const std::vector<std::string>& items, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out.push_back(sep);
    out += items[i];
  }
  return out;
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = s.find(sep, start);
    out.push_back(s.substr(start, end == std::string::npos ? std::string::npos : end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

namespace detail {

inline Tensor ints_to_tensor(const std::vector<int>& v) {
  std::vector<float> f(v.begin(), v.end());
  return Tensor({v.size()}, std::move(f));
}

inline std::vector<int> tensor_to_ints(const Tensor& t, const char* what) {
  std::vector<int> out;
  out.reserve(t.size());
  for (float f : t.values()) {
    if (f != std::floor(f) || std::abs(f) > 16777216.0f)
      throw CorruptFile(std::string(what) + " entry holds a non-integer value");
    out.push_back(static_cast<int>(f));
  }
  return out;
}

}  // namespace detail

// Container entries `features`, `labels` and `groups`, plus a sidecar
// (path + ".meta") with provenance and the row count.
inline void save_features(const FeatureSet& fs, const std::filesystem::path& path) {
  if (fs.features.rank() != 2 || fs.features.dim(0) != fs.labels.size() ||
      fs.groups.size() != fs.labels.size())
    throw ShapeMismatch("feature set rows, labels and groups disagree");
  TensorStore s;
  s.put("features", fs.features);
  s.put("labels", detail::ints_to_tensor(fs.labels));
  s.put("groups", detail::ints_to_tensor(fs.groups));
  s.save(path);
  save_sidecar(path, {{"kind", "features"},
                      {"rows", std::to_string(fs.rows())},
                      {"dim", std::to_string(fs.dim())},
                      {"tap", fs.meta.tap},
                      {"variant", fs.meta.variant},
                      {"preprocess", fs.meta.preprocess},
                      {"reduction", fs.meta.reduction},
                      {"map_shape", fs.meta.map_shape},
                      {"classes", join(fs.meta.classes)}});
}

inline FeatureSet load_features(const std::filesystem::path& path) {
  const auto store = TensorStore::load(path);
  const auto meta = load_sidecar(path);
  FeatureSet fs;
  fs.features = store.get("features");
  if (fs.features.rank() != 2) throw CorruptFile("features entry must be rank 2");
  fs.labels = detail::tensor_to_ints(store.get("labels", Shape{fs.features.dim(0)}), "labels");
  fs.groups = store.contains("groups")
                  ? detail::tensor_to_ints(store.get("groups", Shape{fs.features.dim(0)}), "groups")
                  : std::vector<int>();
  if (fs.groups.empty()) {
    fs.groups.resize(fs.labels.size());
    for (std::size_t i = 0; i < fs.groups.size(); ++i) fs.groups[i] = static_cast<int>(i);
  }
  auto get = [&](const char* key) {
    auto it = meta.find(key);
    return it == meta.end() ? std::string() : it->second;
  };
  if (get("rows") != std::to_string(fs.rows()))
    throw MetaMismatch("sidecar rows=" + get("rows") + " but container holds " +
                       std::to_string(fs.rows()) + " rows");
  if (get("dim") != std::to_string(fs.dim()))
    throw MetaMismatch("sidecar dim=" + get("dim") + " but container rows have length " +
                       std::to_string(fs.dim()));
  fs.meta.tap = get("tap");
  fs.meta.variant = get("variant");
  fs.meta.preprocess = get("preprocess");
  fs.meta.reduction = get("reduction");
  fs.meta.map_shape = get("map_shape");
  fs.meta.classes = split_list(get("classes"));
  return fs;
}

struct EvalResult {
  double overall_accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  std::vector<std::vector<std::size_t>> confusion;  // [truth][prediction]
};

inline EvalResult evaluate(std::span<const int> predictions, std::span<const int> truth,
                           std::size_t K) {
  if (predictions.size() != truth.size())
    throw ShapeMismatch("evaluate: " + std::to_string(predictions.size()) +
                        " predictions for " + std::to_string(truth.size()) + " labels");
  if (truth.empty()) throw ShapeMismatch("evaluate: no samples");
  EvalResult r;
  r.confusion.assign(K, std::vector<std::size_t>(K, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predictions[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= K || static_cast<std::size_t>(p) >= K)
      throw IndexOutOfRange("evaluate: label outside [0, " + std::to_string(K) + ")");
    ++r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  std::size_t trace = 0;
  r.per_class_accuracy.resize(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    std::size_t row = 0;
    for (std::size_t v : r.confusion[k]) row += v;
    trace += r.confusion[k][k];
    if (row) r.per_class_accuracy[k] = static_cast<double>(r.confusion[k][k]) / static_cast<double>(row);
  }
  r.overall_accuracy = static_cast<double>(trace) / static_cast<double>(truth.size());
  return r;
}

}  // namespace resfeat
