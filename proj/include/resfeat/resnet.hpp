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

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "resfeat/error.hpp"
#include "resfeat/nn_ops.hpp"
#include "resfeat/random.hpp"
#include "resfeat/rft1.hpp"
#include "resfeat/tensor.hpp"

namespace resfeat {

// Stage layout of a bottleneck ResNet. `widths` are the expanded (output)
// channel counts of the four stages; each block reduces to width / 4 first.
struct ResNetConfig {
  std::string name;
  std::array<std::size_t, 4> widths{};
  std::array<std::size_t, 4> depths{};
  std::size_t num_classes = 1000;
  std::size_t stem_width = 0;  // 0: widths[0] / 4, as in the full-size nets

  std::size_t stem_channels() const { return stem_width ? stem_width : widths[0] / 4; }

  static ResNetConfig resnet50() {
    return {"resnet50", {256, 512, 1024, 2048}, {3, 4, 6, 3}, 1000, 0};
  }
  static ResNetConfig resnet152() {
    return {"resnet152", {256, 512, 1024, 2048}, {3, 8, 36, 3}, 1000, 0};
  }
  // Desk-scale variant with the same four-stage, stride-2 topology. The
  // stem keeps the first stage width so colour survives the first layer.
  static ResNetConfig mini(std::array<std::size_t, 4> widths = {16, 32, 64, 128},
                           std::array<std::size_t, 4> depths = {1, 1, 1, 1},
                           std::size_t num_classes = 10) {
    return {"mini", widths, depths, num_classes, widths[0]};
  }

  void validate() const {
    for (std::size_t s = 0; s < 4; ++s) {
      if (widths[s] == 0 || widths[s] % 4 != 0)
        throw InvalidConfig("stage widths must be positive multiples of 4");
      if (depths[s] == 0) throw InvalidConfig("stage depths must be positive");
    }
    if (num_classes == 0) throw InvalidConfig("head needs at least one class");
  }
};

// Feature taps: output of the last block of stages 2, 3 and 4 (conv3_x,
// conv4_x, conv5_x in the usual naming).
enum class TapName { Res3d, Res4f, Res5c };

inline std::size_t tap_stage(TapName t) {
  switch (t) {
    case TapName::Res3d: return 1;
    case TapName::Res4f: return 2;
    case TapName::Res5c: return 3;
  }
  throw InvalidConfig("unknown tap");
}

inline std::string tap_to_string(TapName t) {
  switch (t) {
    case TapName::Res3d: return "res3d";
    case TapName::Res4f: return "res4f";
    case TapName::Res5c: return "res5c";
  }
  throw InvalidConfig("unknown tap");
}

inline TapName parse_tap(const std::string& s) {
  if (s == "res3d" || s == "Res3d") return TapName::Res3d;
  if (s == "res4f" || s == "Res4f") return TapName::Res4f;
  if (s == "res5c" || s == "Res5c") return TapName::Res5c;
  throw InvalidConfig("unknown tap '" + s + "' (expected res3d, res4f or res5c)");
}

inline std::size_t tap_channels(const ResNetConfig& cfg, TapName t) {
  return cfg.widths[tap_stage(t)];
}

template <typename T>
struct Projection {
  ConvParams<T> conv;
  BatchNormParams<T> bn;
};

template <typename T>
struct BottleneckBlock {
  ConvParams<T> conv_a;
  BatchNormParams<T> bn_a;
  ConvParams<T> conv_b;
  BatchNormParams<T> bn_b;
  ConvParams<T> conv_c;
  BatchNormParams<T> bn_c;
  std::optional<Projection<T>> shortcut;  // nullopt: identity
  std::size_t stride = 1;

  std::size_t in_channels() const { return conv_a.in_channels(); }
  std::size_t out_channels() const { return conv_c.out_channels(); }
};

template <typename T>
struct ResNetModel {
  ResNetConfig config;
  ConvParams<T> stem_conv;
  BatchNormParams<T> stem_bn;
  std::array<std::vector<BottleneckBlock<T>>, 4> stages;
  BasicTensor<T> head_weights;
  BasicTensor<T> head_bias;
};

namespace detail {

template <typename T>
ConvParams<T> make_conv(std::size_t out, std::size_t in, std::size_t k,
                        std::size_t stride, std::size_t pad) {
  return {BasicTensor<T>({out, in, k, k}), {}, stride, pad};
}

template <typename T>
BottleneckBlock<T> make_block(std::size_t in, std::size_t out, std::size_t stride,
                              bool project = false) {
  const std::size_t mid = out / 4;
  BottleneckBlock<T> b;
  b.conv_a = make_conv<T>(mid, in, 1, 1, 0);
  b.bn_a = BatchNormParams<T>::identity(mid);
  b.conv_b = make_conv<T>(mid, mid, 3, stride, 1);
  b.bn_b = BatchNormParams<T>::identity(mid);
  b.conv_c = make_conv<T>(out, mid, 1, 1, 0);
  b.bn_c = BatchNormParams<T>::identity(out);
  b.stride = stride;
  if (project || in != out || stride != 1) {
    b.shortcut = Projection<T>{make_conv<T>(out, in, 1, stride, 0),
                               BatchNormParams<T>::identity(out)};
  }
  return b;
}

template <typename T>
void he_normal(BasicTensor<T>& w, std::size_t fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (T& v : w.values()) v = static_cast<T>(rng.normal(0.0, stddev));
}

template <typename T>
void init_conv(ConvParams<T>& c, Rng& rng) {
  he_normal(c.weights, c.in_channels() * c.kernel_h() * c.kernel_w(), rng);
}

}  // namespace detail

// Visits every parameter tensor with its container name. Works on const and
// non-const models.
template <typename Model, typename Fn>
void visit_parameters(Model& m, Fn&& fn) {
  auto bn = [&](const std::string& prefix, auto& p) {
    fn(prefix + ".gamma", p.gamma);
    fn(prefix + ".beta", p.beta);
    fn(prefix + ".mean", p.running_mean);
    fn(prefix + ".var", p.running_var);
  };
  fn(std::string("stem.conv.weight"), m.stem_conv.weights);
  bn("stem.bn", m.stem_bn);
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t i = 0; i < m.stages[s].size(); ++i) {
      auto& b = m.stages[s][i];
      const std::string p =
          "stage" + std::to_string(s + 1) + ".block" + std::to_string(i + 1);
      fn(p + ".conva.weight", b.conv_a.weights);
      bn(p + ".bn_a", b.bn_a);
      fn(p + ".convb.weight", b.conv_b.weights);
      bn(p + ".bn_b", b.bn_b);
      fn(p + ".convc.weight", b.conv_c.weights);
      bn(p + ".bn_c", b.bn_c);
      if (b.shortcut) {
        fn(p + ".shortcut.conv.weight", b.shortcut->conv.weights);
        bn(p + ".shortcut.bn", b.shortcut->bn);
      }
    }
  }
  fn(std::string("head.fc.weight"), m.head_weights);
  fn(std::string("head.fc.bias"), m.head_bias);
}

// Builds the architecture with He-normal convolution weights drawn from
// `seed` and identity batch-norm statistics. The last batch norm of each
// residual branch starts at gamma = `branch_gamma` so random deep models keep
// bounded activations.
template <typename T = float>
ResNetModel<T> build_resnet(const ResNetConfig& cfg, std::uint64_t seed = 0,
                            double branch_gamma = 0.5) {
  cfg.validate();
  Rng rng(seed);
  ResNetModel<T> m;
  m.config = cfg;
  m.stem_conv = detail::make_conv<T>(cfg.stem_channels(), 3, 7, 2, 3);
  m.stem_bn = BatchNormParams<T>::identity(cfg.stem_channels());
  std::size_t in = cfg.stem_channels();
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t i = 0; i < cfg.depths[s]; ++i) {
      const std::size_t stride = (i == 0 && s > 0) ? 2 : 1;
      m.stages[s].push_back(detail::make_block<T>(in, cfg.widths[s], stride, i == 0));
      in = cfg.widths[s];
    }
  }
  m.head_weights = BasicTensor<T>({cfg.num_classes, in});
  m.head_bias = BasicTensor<T>({cfg.num_classes});

  detail::init_conv(m.stem_conv, rng);
  for (auto& stage : m.stages) {
    for (auto& b : stage) {
      detail::init_conv(b.conv_a, rng);
      detail::init_conv(b.conv_b, rng);
      detail::init_conv(b.conv_c, rng);
      for (T& g : b.bn_c.gamma.values()) g = static_cast<T>(branch_gamma);
      if (b.shortcut) detail::init_conv(b.shortcut->conv, rng);
    }
  }
  detail::he_normal(m.head_weights, in, rng);
  return m;
}

// relu(shortcut(x) + bn_c(conv_c(relu(bn_b(conv_b(relu(bn_a(conv_a(x)))))))))
template <typename T>
BasicTensor<T> block_forward(const BasicTensor<T>& x, const BottleneckBlock<T>& b) {
  if (x.rank() != 3 || x.dim(0) != b.in_channels())
    throw ShapeMismatch("block_forward: input " + shape_string(x.shape()) +
                        " does not match block input channels " +
                        std::to_string(b.in_channels()));
  auto h = batchnorm_infer(conv2d(x, b.conv_a), b.bn_a);
  relu_inplace(h);
  h = batchnorm_infer(conv2d(h, b.conv_b), b.bn_b);
  relu_inplace(h);
  h = batchnorm_infer(conv2d(h, b.conv_c), b.bn_c);
  if (b.shortcut) {
    h = add(h, batchnorm_infer(conv2d(x, b.shortcut->conv), b.shortcut->bn));
  } else {
    h = add(h, x);
  }
  relu_inplace(h);
  return h;
}

template <typename T>
BasicTensor<T> stem_forward(const ResNetModel<T>& m, const BasicTensor<T>& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw ShapeMismatch("expected a 3xHxW image, got " + shape_string(image.shape()));
  if (image.dim(1) < 32 || image.dim(2) < 32)
    throw InvalidConfig("image extents must be at least 32x32, got " +
                        shape_string(image.shape()));
  auto h = batchnorm_infer(conv2d(image, m.stem_conv), m.stem_bn);
  relu_inplace(h);
  return maxpool2d(h, 3, 2, 1);
}

template <typename T>
BasicTensor<T> stage_forward(const ResNetModel<T>& m, std::size_t stage,
                             BasicTensor<T> x) {
  for (const auto& b : m.stages.at(stage)) x = block_forward(x, b);
  return x;
}

// Runs the network only as deep as the deepest requested tap and returns the
// post-relu output of each requested stage's last block.
template <typename T>
std::map<TapName, BasicTensor<T>> forward_with_taps(const ResNetModel<T>& m,
                                                    const BasicTensor<T>& image,
                                                    const std::set<TapName>& taps) {
  if (taps.empty()) throw InvalidConfig("forward_with_taps: no taps requested");
  std::size_t last = 0;
  for (TapName t : taps) last = std::max(last, tap_stage(t));
  std::map<TapName, BasicTensor<T>> out;
  auto h = stem_forward(m, image);
  for (std::size_t s = 0; s <= last; ++s) {
    h = stage_forward(m, s, std::move(h));
    for (TapName t : taps) {
      if (tap_stage(t) == s) out.emplace(t, h);
    }
  }
  return out;
}

// Full network including the classification head (global pool + FC).
template <typename T>
BasicTensor<T> forward_logits(const ResNetModel<T>& m, const BasicTensor<T>& image) {
  auto h = stem_forward(m, image);
  for (std::size_t s = 0; s < 4; ++s) h = stage_forward(m, s, std::move(h));
  return fc_forward(global_avgpool(h), m.head_weights, m.head_bias);
}

template <typename T>
TensorStore save_weights(const ResNetModel<T>& m) {
  TensorStore store;
  visit_parameters(m, [&](const std::string& name, const BasicTensor<T>& t) {
    store.put(name, t.template cast<float>());
  });
  return store;
}

// Binds every parameter from `store`. Missing, surplus and mis-shaped entries
// are rejected.
template <typename T>
ResNetModel<T> load_weights(ResNetModel<T> m, const TensorStore& store) {
  std::set<std::string> used;
  visit_parameters(m, [&](const std::string& name, BasicTensor<T>& t) {
    if (!store.contains(name)) throw MissingTensor("missing tensor '" + name + "'");
    t = store.get(name, t.shape()).template cast<T>();
    used.insert(name);
  });
  for (const auto& [name, t] : store.entries()) {
    if (!used.count(name)) throw UnexpectedTensor("unexpected tensor '" + name + "'");
  }
  m.stem_bn.validate();
  for (const auto& stage : m.stages) {
    for (const auto& b : stage) {
      b.bn_a.validate();
      b.bn_b.validate();
      b.bn_c.validate();
      if (b.shortcut) b.shortcut->bn.validate();
    }
  }
  return m;
}

}  // namespace resfeat
