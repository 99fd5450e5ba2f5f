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
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "resfeat/dataset.hpp"
#include "resfeat/error.hpp"
#include "resfeat/features.hpp"
#include "resfeat/image.hpp"
#include "resfeat/pca.hpp"
#include "resfeat/random.hpp"
#include "resfeat/resnet.hpp"
#include "resfeat/tensor.hpp"

namespace resfeat {

enum class Reduction { None, FlattenOnly, Pca };

struct ExtractOptions {
  PreprocessConfig preprocess;
  bool augment = false;
  AugmentConfig augment_config;
  std::size_t workers = 1;
  Reduction reduction = Reduction::None;
  const PCAModel* pca = nullptr;  // required for Reduction::Pca
};

// Runs every selected image (or each of its 16 views) through the network
// and stores the flattened tap output, optionally PCA-reduced, as one row.
// Row order follows `indices`; results do not depend on the worker count.
inline FeatureSet extract_features(const ResNetModel<float>& model, const Dataset& d,
                                   std::span<const std::size_t> indices, TapName tap,
                                   const ExtractOptions& opt = {}) {
  if (indices.empty()) throw InvalidConfig("extract_features: no images selected");
  if (opt.reduction == Reduction::Pca && opt.pca == nullptr)
    throw InvalidConfig("extract_features: PCA reduction needs a fitted model");
  const std::size_t count = indices.size();
  std::vector<std::vector<Tensor>> rows(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  std::vector<Shape> shapes(count);

  auto work = [&] {
    for (std::size_t j = next.fetch_add(1); j < count; j = next.fetch_add(1)) {
      try {
        const Image img = read_ppm(d.samples.at(indices[j]).path);
        std::vector<Image> views;
        if (opt.augment) {
          views = augment16(img, opt.augment_config);
        } else {
          views.push_back(img);
        }
        for (const auto& v : views) {
          auto taps = forward_with_taps(model, preprocess(v, opt.preprocess), {tap});
          Tensor& t = taps.at(tap);
          shapes[j] = t.shape();
          Tensor flat = flatten(t);
          rows[j].push_back(opt.reduction == Reduction::Pca ? pca_transform(*opt.pca, flat)
                                                            : std::move(flat));
        }
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(opt.workers, 1, count);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  FeatureSet fs;
  const std::size_t dim = rows[0][0].size();
  std::vector<float> data;
  for (std::size_t j = 0; j < count; ++j) {
    for (const auto& r : rows[j]) {
      data.insert(data.end(), r.values().begin(), r.values().end());
      fs.labels.push_back(d.samples[indices[j]].label);
      fs.groups.push_back(static_cast<int>(indices[j]));
    }
  }
  fs.features = Tensor({fs.labels.size(), dim}, std::move(data));
  fs.meta.tap = tap_to_string(tap);
  fs.meta.variant = model.config.name;
  fs.meta.preprocess = opt.preprocess.describe() + (opt.augment ? "+augment16" : "");
  switch (opt.reduction) {
    case Reduction::None:
      fs.meta.reduction = "none";
      fs.meta.map_shape = shape_string(shapes[0]);
      break;
    case Reduction::FlattenOnly:
      fs.meta.reduction = "flatten";
      fs.meta.map_shape = std::to_string(dim);
      break;
    case Reduction::Pca:
      fs.meta.reduction = "pca" + std::to_string(opt.pca->components());
      fs.meta.map_shape = std::to_string(dim);
      break;
  }
  fs.meta.classes = d.classes;
  return fs;
}

// Copy of `fs` with every row passed through the PCA model.
inline FeatureSet apply_pca(const FeatureSet& fs, const PCAModel& pca) {
  FeatureSet out = fs;
  out.features = pca_transform_rows(pca, fs.features);
  out.meta.reduction = "pca" + std::to_string(pca.components());
  out.meta.map_shape = std::to_string(pca.components());
  return out;
}

struct GroupVote {
  std::vector<int> group;       // group ids in order of first appearance
  std::vector<int> prediction;  // class index of the mean-score argmax
  std::vector<int> truth;       // label of the group's first row
};

// Averages per-row class scores within each group and predicts the argmax
// (ties to the lower column).
inline GroupVote vote_mean(std::span<const int> groups, std::span<const int> labels,
                           const std::vector<std::vector<double>>& scores) {
  if (groups.size() != scores.size() || labels.size() != scores.size())
    throw ShapeMismatch("vote_mean: groups, labels and scores disagree");
  GroupVote v;
  std::map<int, std::size_t> slot;
  std::vector<std::vector<double>> sums;
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    auto [it, fresh] = slot.emplace(groups[i], sums.size());
    if (fresh) {
      v.group.push_back(groups[i]);
      v.truth.push_back(labels[i]);
      sums.emplace_back(scores[i].size(), 0.0);
      counts.push_back(0);
    }
    auto& s = sums[it->second];
    if (s.size() != scores[i].size()) throw ShapeMismatch("vote_mean: ragged scores");
    for (std::size_t k = 0; k < s.size(); ++k) s[k] += scores[i][k];
    ++counts[it->second];
  }
  for (const auto& s : sums) {
    const auto best = std::max_element(s.begin(), s.end()) - s.begin();
    v.prediction.push_back(static_cast<int>(best));
  }
  return v;
}

struct ToyConfig {
  std::size_t per_class = 60;
  std::size_t image_size = 64;
  std::uint64_t seed = 0;
};

inline const std::vector<std::string>& toy_classes() {
  static const std::vector<std::string> names{"red", "green", "blue"};
  return names;
}

// One toy image: a random base colour with class `k`'s channel raised,
// overlaid with a random grating and pixel noise.
inline Image toy_image(std::size_t k, std::size_t size, Rng& rng) {
  Image img(size, size);
  double base[3];
  for (double& b : base) b = rng.uniform(60.0, 140.0);
  base[k] += 80.0;
  const double fx = rng.uniform(0.02, 0.2), fy = rng.uniform(0.02, 0.2);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double amp = rng.uniform(5.0, 15.0);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double g = amp * std::sin(2.0 * std::numbers::pi *
                                          (fx * static_cast<double>(x) + fy * static_cast<double>(y)) +
                                      phase);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = base[c] + g + rng.normal(0.0, 8.0);
        img.at(x, y, c) = static_cast<float>(std::round(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return img;
}

// Writes <out>/images/<class>/NNN.ppm for three colour classes.
inline void make_toy_dataset(const std::filesystem::path& out, const ToyConfig& cfg) {
  namespace fs = std::filesystem;
  if (cfg.per_class == 0 || cfg.image_size < 8) throw InvalidConfig("make_toy: bad configuration");
  const Rng master(cfg.seed);
  for (std::size_t k = 0; k < toy_classes().size(); ++k) {
    const fs::path dir = out / "images" / toy_classes()[k];
    fs::create_directories(dir);
    Rng rng = master.fork(k);
    for (std::size_t i = 0; i < cfg.per_class; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "%04zu.ppm", i);
      write_ppm(dir / name, toy_image(k, cfg.image_size, rng));
    }
  }
}

}  // namespace resfeat
