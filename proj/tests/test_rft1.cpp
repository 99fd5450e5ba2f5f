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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "oracles.hpp"
#include "resfeat/rft1.hpp"

namespace resfeat {
namespace {

TensorStore sample_store() {
  TensorStore s;
  s.put("a.weight", Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  s.put("b", Tensor({1}, {-0.0f}));
  s.put("c.nan", Tensor({2}, {std::numeric_limits<float>::quiet_NaN(),
                              std::numeric_limits<float>::infinity()}));
  return s;
}

TEST(Rft1Test, LayoutIsLittleEndianAndCanonical) {
  TensorStore s;
  s.put("x", Tensor({2}, {1.0f, -2.0f}));
  const std::string bytes = s.serialize();
  const std::string expected = std::string("RFT1") + std::string("\x01\x00\x00\x00", 4) +
                               std::string("\x01\x00", 2) + "x" + std::string("\x01", 1) +
                               std::string("\x02\x00\x00\x00", 4) +
                               std::string("\x00\x00\x80\x3f", 4) +
                               std::string("\x00\x00\x00\xc0", 4);
  EXPECT_EQ(bytes, expected);
}

TEST(Rft1Test, RoundTripIsBitExact) {
  const auto s = sample_store();
  const std::string bytes = s.serialize();
  const auto back = TensorStore::deserialize(bytes);
  EXPECT_EQ(back.serialize(), bytes);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back.entries()[0].first, "a.weight");
  EXPECT_TRUE(std::signbit(back.get("b")[0]));
  EXPECT_TRUE(std::isnan(back.get("c.nan")[0]));
}

TEST(Rft1Test, RandomStoresRoundTrip) {
  Rng rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    TensorStore s;
    const std::size_t entries = 1 + rng.below(5);
    for (std::size_t e = 0; e < entries; ++e) {
      Shape shape(1 + rng.below(4));
      for (auto& d : shape) d = 1 + rng.below(5);
      s.put("t" + std::to_string(e), testing::random_tensor<float>(shape, rng, -1e6, 1e6));
    }
    const auto bytes = s.serialize();
    EXPECT_EQ(TensorStore::deserialize(bytes).serialize(), bytes);
  }
}

TEST(Rft1Test, RejectsCorruption) {
  const std::string bytes = sample_store().serialize();
  EXPECT_THROW(TensorStore::deserialize(""), CorruptFile);
  EXPECT_THROW(TensorStore::deserialize("RFT2" + bytes.substr(4)), CorruptFile);
  for (std::size_t cut : {std::size_t{3}, std::size_t{6}, std::size_t{10}, bytes.size() - 1})
    EXPECT_THROW(TensorStore::deserialize(bytes.substr(0, cut)), CorruptFile) << cut;
  EXPECT_THROW(TensorStore::deserialize(bytes + "x"), CorruptFile);

  // Declared entry count larger than what follows.
  std::string more = bytes;
  more[4] = 4;
  EXPECT_THROW(TensorStore::deserialize(more), CorruptFile);

  // Zero extent.
  TensorStore one;
  one.put("z", Tensor({1}, {1.0f}));
  std::string z = one.serialize();
  z[4 + 4 + 2 + 1 + 1] = 0;
  EXPECT_THROW(TensorStore::deserialize(z), CorruptFile);
}

TEST(Rft1Test, HugeDeclaredExtentIsRejectedWithoutAllocating) {
  TensorStore one;
  one.put("z", Tensor({1}, {1.0f}));
  std::string z = one.serialize();
  const std::size_t ext = 4 + 4 + 2 + 1 + 1;
  z[ext] = z[ext + 1] = z[ext + 2] = z[ext + 3] = '\xff';
  EXPECT_THROW(TensorStore::deserialize(z), CorruptFile);
}

TEST(Rft1Test, DuplicateNamesAreCorrupt) {
  TensorStore s;
  s.put("dup", Tensor({1}, {1.0f}));
  std::string entry = s.serialize().substr(8);
  std::string bytes = std::string("RFT1") + std::string("\x02\x00\x00\x00", 4) + entry + entry;
  EXPECT_THROW(TensorStore::deserialize(bytes), CorruptFile);
}

TEST(Rft1Test, GetChecksShapeAndPresence) {
  const auto s = sample_store();
  EXPECT_THROW(s.get("missing"), MissingTensor);
  EXPECT_THROW(s.get("a.weight", Shape{3, 2}), ShapeMismatch);
  EXPECT_NO_THROW(s.get("a.weight", Shape{2, 3}));
}

TEST(Rft1Test, FileSaveLoadAndSidecar) {
  const auto dir = std::filesystem::temp_directory_path() / "resfeat_rft1_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "store.rft";
  const auto s = sample_store();
  s.save(path);
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  EXPECT_EQ(TensorStore::load(path).serialize(), s.serialize());
  save_sidecar(path, {{"k", "v=1"}, {"classes", "a,b"}});
  const auto kv = load_sidecar(path);
  EXPECT_EQ(kv.at("k"), "v=1");
  EXPECT_EQ(kv.at("classes"), "a,b");
  EXPECT_THROW(TensorStore::load(dir / "nope.rft"), CorruptFile);
  EXPECT_THROW(parse_key_values("no equals sign"), CorruptFile);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace resfeat
