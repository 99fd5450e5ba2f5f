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
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "resfeat/error.hpp"
#include "resfeat/image.hpp"
#include "resfeat/random.hpp"

namespace resfeat {

enum class Split { Train, Val, Test };

inline std::string split_to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

struct Sample {
  std::filesystem::path path;
  int label = 0;
};

// Labelled image collection. `split` is empty until split() assigns one
// entry per sample.
struct Dataset {
  std::filesystem::path root;
  std::vector<std::string> classes;
  std::vector<Sample> samples;
  std::vector<Split> split;
  std::uint64_t split_seed = 0;

  std::vector<std::size_t> indices(Split which) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i) {
      if (split[i] == which) out.push_back(i);
    }
    return out;
  }

  std::vector<std::size_t> all_indices() const {
    std::vector<std::size_t> out(samples.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
    return out;
  }
};

namespace detail {

// Reads just enough of the file to validate the PPM header.
inline void check_decodable(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw UnreadableImage("cannot open '" + p.string() + "'");
  char magic[2] = {};
  in.read(magic, 2);
  if (in.gcount() != 2 || magic[0] != 'P' || magic[1] != '6')
    throw UnreadableImage("'" + p.string() + "' is not a binary PPM (P6) image");
}

}  // namespace detail

// One subdirectory per class; classes and files in lexicographic order.
// Hidden entries (leading '.') are ignored.
inline Dataset ingest(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw NoClasses("'" + root.string() + "' is not a directory");
  Dataset d;
  d.root = root;
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && e.path().filename().string().front() != '.')
      dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw NoClasses("no class directories under '" + root.string() + "'");
  for (const auto& dir : dirs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().filename().string().front() != '.')
        files.push_back(e.path());
    }
    if (files.empty()) throw EmptyClass("class directory '" + dir.string() + "' is empty");
    std::sort(files.begin(), files.end());
    const int label = static_cast<int>(d.classes.size());
    d.classes.push_back(dir.filename().string());
    for (auto& f : files) {
      detail::check_decodable(f);
      d.samples.push_back({std::move(f), label});
    }
  }
  return d;
}

// Per class: `per_class_train` samples drawn without replacement for
// training, the next `per_class_val` for validation, the rest for testing.
inline Dataset split(Dataset d, std::size_t per_class_train, std::size_t per_class_val,
                     std::uint64_t seed) {
  d.split.assign(d.samples.size(), Split::Test);
  d.split_seed = seed;
  const Rng master(seed);
  for (std::size_t c = 0; c < d.classes.size(); ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
      if (d.samples[i].label == static_cast<int>(c)) idx.push_back(i);
    }
    if (idx.size() <= per_class_train + per_class_val)
      throw InsufficientSamples("class '" + d.classes[c] + "' has " +
                                std::to_string(idx.size()) + " samples, needs more than " +
                                std::to_string(per_class_train + per_class_val));
    Rng rng = master.fork(c);
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t j = 0; j < per_class_train; ++j) d.split[idx[j]] = Split::Train;
    for (std::size_t j = 0; j < per_class_val; ++j)
      d.split[idx[per_class_train + j]] = Split::Val;
  }
  return d;
}

}  // namespace resfeat
