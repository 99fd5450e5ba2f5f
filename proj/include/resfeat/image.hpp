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
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "resfeat/error.hpp"
#include "resfeat/rft1.hpp"
#include "resfeat/tensor.hpp"

namespace resfeat {

// Interleaved RGB image (row-major, 3 floats per pixel, nominal range 0-255).
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, float fill = 0.0f)
      : width(w), height(h), pixels(w * h * 3, fill) {}

  float& at(std::size_t x, std::size_t y, std::size_t c) {
    return pixels[(y * width + x) * 3 + c];
  }
  float at(std::size_t x, std::size_t y, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

// Binary PPM (P6, maxval <= 255) only.
inline Image decode_ppm(std::string_view bytes, const std::string& origin = "image") {
  std::size_t pos = 0;
  auto fail = [&](const std::string& why) -> UnreadableImage {
    return UnreadableImage(origin + ": " + why);
  };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&] {
    skip_space();
    std::size_t v = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
      if (++digits > 9) throw fail("header value too large");
    }
    if (digits == 0) throw fail("malformed PPM header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    throw fail("not a binary PPM (P6) file");
  pos = 2;
  const std::size_t w = number(), h = number(), maxval = number();
  if (w == 0 || h == 0) throw fail("zero image extent");
  if (maxval == 0 || maxval > 255) throw fail("unsupported maxval " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw fail("malformed PPM header");
  ++pos;
  if (bytes.size() - pos < w * h * 3) throw fail("truncated pixel data");
  Image img(w, h);
  const float scale = 255.0f / static_cast<float>(maxval);
  for (std::size_t i = 0; i < w * h * 3; ++i)
    img.pixels[i] = static_cast<float>(static_cast<unsigned char>(bytes[pos + i])) * scale;
  return img;
}

inline Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableImage("cannot open '" + path.string() + "'");
  const std::string bytes(std::istreambuf_iterator<char>(in), {});
  return decode_ppm(bytes, path.string());
}

inline std::string encode_ppm(const Image& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.pixels.size());
  for (float v : img.pixels)
    out.push_back(static_cast<char>(static_cast<unsigned char>(
        std::lround(std::clamp(v, 0.0f, 255.0f)))));
  return out;
}

inline void write_ppm(const std::filesystem::path& path, const Image& img) {
  TensorStore::write_file_atomic(path, encode_ppm(img));
}

namespace detail {

// Bilinear sample with coordinates clamped to the image (border replicate).
inline float sample_bilinear(const Image& img, double x, double y, std::size_t c) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, img.width - 1);
  const std::size_t y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
  const double top = (1 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
  const double bot = (1 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
  return static_cast<float>((1 - fy) * top + fy * bot);
}

}  // namespace detail

// Half-pixel-centre bilinear resampling: output pixel (x, y) reads source
// coordinate ((x + 0.5) * in / out - 0.5, ...).
inline Image resize_bilinear(const Image& img, std::size_t out_w, std::size_t out_h) {
  if (img.width == 0 || img.height == 0 || out_w == 0 || out_h == 0)
    throw InvalidGeometry("resize_bilinear: empty extent");
  Image out(out_w, out_h);
  const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
  const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = detail::sample_bilinear(img, fx, fy, c);
    }
  }
  return out;
}

inline Image crop(const Image& img, std::size_t x0, std::size_t y0, std::size_t w,
                  std::size_t h) {
  if (w == 0 || h == 0 || x0 + w > img.width || y0 + h > img.height)
    throw InvalidGeometry("crop window outside the image");
  Image out(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    const float* src = &img.pixels[((y0 + y) * img.width + x0) * 3];
    std::copy(src, src + w * 3, &out.pixels[y * w * 3]);
  }
  return out;
}

// Left-right flip.
inline Image mirror(const Image& img) {
  Image out(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = img.at(img.width - 1 - x, y, c);
  return out;
}

// Rotation about the image centre (counter-clockwise for positive degrees),
// same canvas size, bilinear sampling with replicated borders.
inline Image rotate(const Image& img, double degrees) {
  const double t = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(t), sn = std::sin(t);
  const double cx = (static_cast<double>(img.width) - 1) / 2;
  const double cy = (static_cast<double>(img.height) - 1) / 2;
  Image out(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      // Inverse map; image y grows downwards.
      const double srcx = cs * dx - sn * dy + cx;
      const double srcy = sn * dx + cs * dy + cy;
      for (std::size_t c = 0; c < 3; ++c)
        out.at(x, y, c) = detail::sample_bilinear(img, srcx, srcy, c);
    }
  }
  return out;
}

struct PreprocessConfig {
  std::size_t size = 224;
  // Per-channel means on the [0, 1] scale (ImageNet statistics by default).
  std::array<double, 3> mean{0.485, 0.456, 0.406};

  std::string describe() const {
    char buf[128];
    std::snprintf(buf, sizeof buf, "bilinear%zu/255-mean(%.4g,%.4g,%.4g)", size, mean[0],
                  mean[1], mean[2]);
    return buf;
  }
};

// Resize to size x size, scale to [0, 1], subtract the channel means, and
// lay out as C, H, W.
inline Tensor preprocess(const Image& img, const PreprocessConfig& cfg = {}) {
  if (img.width < 8 || img.height < 8)
    throw UnreadableImage("image " + std::to_string(img.width) + "x" +
                          std::to_string(img.height) + " is smaller than 8x8");
  const Image r = (img.width == cfg.size && img.height == cfg.size)
                      ? img
                      : resize_bilinear(img, cfg.size, cfg.size);
  Tensor t({3, cfg.size, cfg.size});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < cfg.size; ++y)
      for (std::size_t x = 0; x < cfg.size; ++x)
        t.at(c, y, x) = static_cast<float>(r.at(x, y, c) / 255.0 - cfg.mean[c]);
  return t;
}

struct AugmentConfig {
  double crop_fraction = 0.875;
  double rotation_degrees = 15.0;
};

// Sixteen views in a fixed order. Base views are: original, top-left,
// top-right, bottom-left, bottom-right and centre crops, rotation by
// +angle, rotation by -angle. Each base view is followed immediately by its
// mirror, so view 2k+1 == mirror(view 2k).
inline std::vector<Image> augment16(const Image& img, const AugmentConfig& cfg = {}) {
  // Crop extents are rounded so the margin is even and the centre crop sits
  // exactly in the middle.
  auto extent = [&](std::size_t full) {
    auto e = static_cast<std::size_t>(std::floor(cfg.crop_fraction * static_cast<double>(full)));
    return e + (full - e) % 2;
  };
  const std::size_t cw = extent(img.width), ch = extent(img.height);
  if (!(cfg.crop_fraction > 0.0 && cfg.crop_fraction <= 1.0) || cw < 8 || ch < 8)
    throw InvalidGeometry("augment16: " + std::to_string(img.width) + "x" +
                          std::to_string(img.height) + " image too small for crops");
  const std::size_t rx = img.width - cw, ry = img.height - ch;
  std::vector<Image> base{img,
                          crop(img, 0, 0, cw, ch),
                          crop(img, rx, 0, cw, ch),
                          crop(img, 0, ry, cw, ch),
                          crop(img, rx, ry, cw, ch),
                          crop(img, rx / 2, ry / 2, cw, ch),
                          rotate(img, cfg.rotation_degrees),
                          rotate(img, -cfg.rotation_degrees)};
  std::vector<Image> views;
  views.reserve(16);
  for (const auto& v : base) {
    views.push_back(v);
    views.push_back(mirror(v));
  }
  return views;
}

}  // namespace resfeat
