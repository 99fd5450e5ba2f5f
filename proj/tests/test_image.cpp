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

#include <filesystem>
#include <string>

#include "resfeat/image.hpp"
#include "resfeat/random.hpp"

namespace resfeat {
namespace {

Image random_image(Rng& rng, std::size_t w, std::size_t h) {
  Image img(w, h);
  for (float& v : img.pixels) v = static_cast<float>(rng.below(256));
  return img;
}

TEST(PpmTest, EncodeDecodeRoundTrip) {
  Rng rng(1);
  auto img = random_image(rng, 13, 7);
  const auto bytes = encode_ppm(img);
  EXPECT_EQ(bytes.substr(0, 2), "P6");
  EXPECT_EQ(decode_ppm(bytes), img);
}

TEST(PpmTest, HeaderCommentsAndSmallMaxval) {
  std::string bytes = "P6\n# comment\n2 1\n# another\n15\n";
  bytes += std::string("\x0f\x00\x00\x00\x0f\x05", 6);
  auto img = decode_ppm(bytes);
  ASSERT_EQ(img.width, 2u);
  ASSERT_EQ(img.height, 1u);
  EXPECT_EQ(img.at(0, 0, 0), 255.0f);
  EXPECT_EQ(img.at(1, 0, 1), 255.0f);
  EXPECT_EQ(img.at(1, 0, 2), 85.0f);
}

TEST(PpmTest, RejectsMalformedInput) {
  EXPECT_THROW(decode_ppm("P3\n1 1\n255\n0 0 0\n"), UnreadableImage);
  EXPECT_THROW(decode_ppm("P6\n2 2\n255\nabc"), UnreadableImage);
  EXPECT_THROW(decode_ppm("P6\n1 1\n65535\n\0\0\0\0\0\0"), UnreadableImage);
  EXPECT_THROW(decode_ppm("P6\nx 1\n255\n"), UnreadableImage);
  EXPECT_THROW(decode_ppm(""), UnreadableImage);
  EXPECT_THROW(read_ppm("/nonexistent/file.ppm"), UnreadableImage);
}

TEST(PpmTest, FileRoundTrip) {
  Rng rng(2);
  auto img = random_image(rng, 9, 11);
  const auto path = std::filesystem::temp_directory_path() / "resfeat_image_test.ppm";
  write_ppm(path, img);
  EXPECT_EQ(read_ppm(path), img);
  std::filesystem::remove(path);
}

TEST(ResizeTest, TwoByTwoToOneIsTheMean) {
  Image img(2, 2);
  const float vals[4] = {10, 20, 30, 60};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c) img.at(i % 2, i / 2, c) = vals[i] + float(c);
  auto r = resize_bilinear(img, 1, 1);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(r.at(0, 0, c), 30.0f + float(c));
}

TEST(ResizeTest, IdentityAndConstantImages) {
  Rng rng(3);
  auto img = random_image(rng, 6, 5);
  EXPECT_EQ(resize_bilinear(img, 6, 5), img);
  Image flat(7, 3, 42.0f);
  for (float v : resize_bilinear(flat, 19, 11).pixels) EXPECT_FLOAT_EQ(v, 42.0f);
}

TEST(GeometryOpsTest, CropMirrorRotate) {
  Rng rng(4);
  auto img = random_image(rng, 8, 6);
  auto c = crop(img, 2, 1, 3, 4);
  ASSERT_EQ(c.width, 3u);
  ASSERT_EQ(c.height, 4u);
  EXPECT_EQ(c.at(0, 0, 1), img.at(2, 1, 1));
  EXPECT_EQ(c.at(2, 3, 2), img.at(4, 4, 2));
  EXPECT_THROW(crop(img, 6, 0, 3, 2), InvalidGeometry);
  auto m = mirror(img);
  EXPECT_EQ(m.at(0, 2, 0), img.at(7, 2, 0));
  EXPECT_EQ(mirror(m), img);
  auto r = rotate(img, 0.0);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(r.pixels[i], img.pixels[i], 1e-3);
  Image flat(9, 9, 17.0f);
  for (float v : rotate(flat, 33.0).pixels) EXPECT_NEAR(v, 17.0f, 1e-4);
}

TEST(PreprocessTest, ShapeAndConstantColour) {
  Image img(50, 30);
  for (std::size_t y = 0; y < 30; ++y)
    for (std::size_t x = 0; x < 50; ++x) {
      img.at(x, y, 0) = 255;
      img.at(x, y, 1) = 0;
      img.at(x, y, 2) = 51;
    }
  PreprocessConfig cfg;
  auto t = preprocess(img, cfg);
  ASSERT_EQ(t.shape(), (Shape{3, 224, 224}));
  for (std::size_t i = 0; i < 224 * 224; ++i) {
    EXPECT_NEAR(t[i], 1.0 - 0.485, 1e-6);
    EXPECT_NEAR(t[224 * 224 + i], -0.456, 1e-6);
    EXPECT_NEAR(t[2 * 224 * 224 + i], 0.2 - 0.406, 1e-6);
  }
  cfg.size = 32;
  cfg.mean = {0, 0, 0};
  EXPECT_EQ(preprocess(img, cfg).shape(), (Shape{3, 32, 32}));
  EXPECT_THROW(preprocess(Image(7, 20)), UnreadableImage);
}

TEST(Augment16Test, SixteenViewsWithMirrorPairs) {
  Rng rng(5);
  for (auto [w, h] : {std::pair<std::size_t, std::size_t>{64, 64}, {37, 50}, {224, 180}}) {
    auto img = random_image(rng, w, h);
    auto views = augment16(img);
    ASSERT_EQ(views.size(), 16u);
    EXPECT_EQ(views[0], img);
    for (std::size_t k = 0; k < 8; ++k) {
      EXPECT_EQ(views[2 * k + 1], mirror(views[2 * k]));
      EXPECT_EQ(mirror(views[2 * k + 1]), views[2 * k]);
    }
    // 87.5% of each side, widened by a pixel when needed to keep the margin even.
    std::size_t cw = std::size_t(0.875 * double(w)), ch = std::size_t(0.875 * double(h));
    cw += (w - cw) % 2;
    ch += (h - ch) % 2;
    for (std::size_t k = 1; k <= 5; ++k) {
      EXPECT_EQ(views[2 * k].width, cw);
      EXPECT_EQ(views[2 * k].height, ch);
    }
    EXPECT_EQ(views[12].width, w);
    EXPECT_NE(views[12], views[14]);
  }
}

TEST(Augment16Test, MirroredInputSwapsLeftAndRightCrops) {
  Rng rng(6);
  auto img = random_image(rng, 64, 48);
  auto a = augment16(img), b = augment16(mirror(img));
  // top-left <-> top-right, bottom-left <-> bottom-right, centre stays.
  EXPECT_EQ(b[2], a[5]);
  EXPECT_EQ(b[4], a[3]);
  EXPECT_EQ(b[6], a[9]);
  EXPECT_EQ(b[8], a[7]);
  EXPECT_EQ(b[10], a[11]);
}

TEST(Augment16Test, CentreCropOfSymmetricImageIsItsOwnMirror) {
  Rng rng(7);
  for (std::size_t w : {64u, 50u}) {
    auto img = random_image(rng, w, 40);
    for (std::size_t y = 0; y < 40; ++y)
      for (std::size_t x = 0; x < w / 2; ++x)
        for (std::size_t c = 0; c < 3; ++c) img.at(w - 1 - x, y, c) = img.at(x, y, c);
    ASSERT_EQ(mirror(img), img);
    auto views = augment16(img);
    EXPECT_EQ(views[10], views[11]);
    EXPECT_EQ(views[0], views[1]);
  }
}

TEST(Augment16Test, TooSmallImagesAreRejected) {
  EXPECT_THROW(augment16(Image(9, 9)), InvalidGeometry);
  EXPECT_THROW(augment16(Image(64, 7)), InvalidGeometry);
  AugmentConfig bad;
  bad.crop_fraction = 0;
  EXPECT_THROW(augment16(Image(64, 64), bad), InvalidGeometry);
}

}  // namespace
}  // namespace resfeat
