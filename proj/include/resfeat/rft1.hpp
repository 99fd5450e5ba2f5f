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

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "resfeat/error.hpp"
#include "resfeat/tensor.hpp"

namespace resfeat {

// Named-tensor container, file format "RFT1":
//
//   magic   "RFT1"
//   u32     entry count
//   entry:  u16 name length, UTF-8 name, u8 rank, rank x u32 extents,
//           product(extents) x f32 values in canonical order
//
// All integers and floats are little-endian. Entry order is preserved.
class TensorStore {
 public:
  static constexpr std::string_view kMagic = "RFT1";

  void put(std::string name, Tensor t) {
    if (name.empty() || name.size() > std::numeric_limits<std::uint16_t>::max())
      throw InvalidConfig("tensor name length out of range: '" + name + "'");
    if (t.rank() == 0 || t.rank() > std::numeric_limits<std::uint8_t>::max())
      throw InvalidConfig("tensor '" + name + "' has unsupported rank");
    auto it = index_.find(name);
    if (it != index_.end()) {
      entries_[it->second].second = std::move(t);
      return;
    }
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(t));
  }

  bool contains(const std::string& name) const {
    return index_.count(name) != 0;
  }

  const Tensor& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw MissingTensor("missing tensor '" + name + "'");
    return entries_[it->second].second;
  }

  // Like get(), but also checks the stored extents.
  const Tensor& get(const std::string& name, const Shape& expected) const {
    const Tensor& t = get(name);
    if (t.shape() != expected) {
      throw ShapeMismatch("tensor '" + name + "' has shape " +
                          shape_string(t.shape()) + ", expected " +
                          shape_string(expected));
    }
    return t;
  }

  const std::vector<std::pair<std::string, Tensor>>& entries() const {
    return entries_;
  }
  std::size_t size() const { return entries_.size(); }

  std::string serialize() const {
    std::string out(kMagic);
    put_u32(out, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& [name, t] : entries_) {
      put_u16(out, static_cast<std::uint16_t>(name.size()));
      out += name;
      out.push_back(static_cast<char>(t.rank()));
      for (std::size_t e : t.shape()) {
        if (e > std::numeric_limits<std::uint32_t>::max())
          throw InvalidConfig("extent too large for '" + name + "'");
        put_u32(out, static_cast<std::uint32_t>(e));
      }
      for (float v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
  }

  static TensorStore deserialize(std::string_view bytes) {
    Reader r{bytes};
    if (bytes.size() < kMagic.size() || bytes.substr(0, 4) != kMagic)
      throw CorruptFile("bad RFT1 magic");
    r.pos = 4;
    const std::uint32_t count = r.u32();
    TensorStore store;
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::uint16_t len = r.u16();
      if (len == 0) throw CorruptFile("empty tensor name in entry " + std::to_string(i));
      std::string name(r.take(len));
      const std::uint8_t rank = r.u8();
      if (rank == 0) throw CorruptFile("zero rank for '" + name + "'");
      Shape shape(rank);
      std::uint64_t total = 1;
      for (auto& e : shape) {
        e = r.u32();
        if (e == 0) throw CorruptFile("zero extent for '" + name + "'");
        total *= e;
        if (total > (bytes.size() - r.pos) / 4 + 1)
          throw CorruptFile("truncated data for '" + name + "'");
      }
      if (total * 4 > bytes.size() - r.pos)
        throw CorruptFile("truncated data for '" + name + "'");
      std::vector<float> data(static_cast<std::size_t>(total));
      for (auto& v : data) v = std::bit_cast<float>(r.u32());
      if (store.contains(name)) throw CorruptFile("duplicate tensor '" + name + "'");
      store.put(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    if (r.pos != bytes.size()) throw CorruptFile("trailing bytes after last entry");
    return store;
  }

  // Written to a temporary sibling, then renamed into place.
  void save(const std::filesystem::path& path) const {
    write_file_atomic(path, serialize());
  }

  static TensorStore load(const std::filesystem::path& path) {
    return deserialize(read_file(path));
  }

  static std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptFile("cannot open '" + path.string() + "'");
    return std::string(std::istreambuf_iterator<char>(in), {});
  }

  static void write_file_atomic(const std::filesystem::path& path,
                                std::string_view bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw InvalidConfig("cannot write '" + tmp.string() + "'");
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (!out) throw InvalidConfig("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
  }

 private:
  struct Reader {
    std::string_view bytes;
    std::size_t pos = 0;

    std::string_view take(std::size_t n) {
      if (bytes.size() - pos < n) throw CorruptFile("unexpected end of RFT1 data");
      auto s = bytes.substr(pos, n);
      pos += n;
      return s;
    }
    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint16_t u16() {
      auto s = take(2);
      return static_cast<std::uint16_t>(byte(s, 0) | byte(s, 1) << 8);
    }
    std::uint32_t u32() {
      auto s = take(4);
      return byte(s, 0) | byte(s, 1) << 8 | byte(s, 2) << 16 | byte(s, 3) << 24;
    }
    static std::uint32_t byte(std::string_view s, std::size_t i) {
      return static_cast<unsigned char>(s[i]);
    }
  };

  static void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
  }
  static void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }

  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

// Flat "key=value" text used for sidecar files next to RFT1 containers.
using KeyValues = std::map<std::string, std::string>;

inline std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

inline KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw CorruptFile("malformed sidecar line: '" + std::string(line) + "'");
    kv[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 1));
  }
  return kv;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& p) {
  auto s = p;
  s += ".meta";
  return s;
}

inline void save_sidecar(const std::filesystem::path& container,
                         const KeyValues& kv) {
  TensorStore::write_file_atomic(sidecar_path(container), format_key_values(kv));
}

inline KeyValues load_sidecar(const std::filesystem::path& container) {
  return parse_key_values(TensorStore::read_file(sidecar_path(container)));
}

}  // namespace resfeat
