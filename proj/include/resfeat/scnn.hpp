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
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "resfeat/error.hpp"
#include "resfeat/nn_ops.hpp"
#include "resfeat/random.hpp"
#include "resfeat/rft1.hpp"
#include "resfeat/tensor.hpp"

namespace resfeat {

// Shallow classifier head over a C x H x W feature map:
//   [1x1 conv -> relu] x conv_layers -> 2x2/2 max-pool -> fc(hidden) -> relu
//   -> fc(num_classes) -> softmax
struct ScnnConfig {
  std::size_t conv_channels = 512;
  std::size_t conv_layers = 1;
  std::size_t hidden = 4096;
};

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double weight_decay = 5e-4;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw InvalidConfig("learning_rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw InvalidConfig("momentum must be in [0, 1)");
    if (epochs == 0) throw InvalidConfig("epochs must be positive");
    if (batch_size == 0) throw InvalidConfig("batch_size must be positive");
    if (!(weight_decay >= 0.0)) throw InvalidConfig("weight_decay must be >= 0");
  }
};

template <typename T>
struct SCNNHead {
  Shape input_shape;  // C, H, W
  std::size_t num_classes = 0;
  ScnnConfig config;
  std::vector<ConvParams<T>> convs;
  BasicTensor<T> fc1_weights, fc1_bias;
  BasicTensor<T> fc2_weights, fc2_bias;

  static constexpr std::size_t kPool = 2;
  static constexpr std::size_t kPoolStride = 2;

  std::size_t input_size() const { return shape_size(input_shape); }
};

// Parameter tensors in a fixed order: per conv (weight, bias), then fc1
// (weight, bias), then fc2 (weight, bias).
template <typename T>
std::vector<BasicTensor<T>*> parameters(SCNNHead<T>& h) {
  std::vector<BasicTensor<T>*> p;
  for (auto& c : h.convs) {
    p.push_back(&c.weights);
    p.push_back(&c.bias);
  }
  p.insert(p.end(), {&h.fc1_weights, &h.fc1_bias, &h.fc2_weights, &h.fc2_bias});
  return p;
}

template <typename T>
std::vector<const BasicTensor<T>*> parameters(const SCNNHead<T>& h) {
  std::vector<const BasicTensor<T>*> p;
  for (auto* t : parameters(const_cast<SCNNHead<T>&>(h))) p.push_back(t);
  return p;
}

template <typename T>
std::vector<std::string> parameter_names(const SCNNHead<T>& h) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < h.convs.size(); ++i) {
    const std::string prefix = i == 0 ? "scnn.conv" : "scnn.conv" + std::to_string(i + 1);
    names.push_back(prefix + ".weight");
    names.push_back(prefix + ".bias");
  }
  names.insert(names.end(), {"scnn.fc1.weight", "scnn.fc1.bias", "scnn.fc2.weight",
                             "scnn.fc2.bias"});
  return names;
}

template <typename T = float>
SCNNHead<T> scnn_build(const Shape& input_shape, std::size_t num_classes,
                       std::uint64_t seed, const ScnnConfig& cfg = {}) {
  if (input_shape.size() != 3)
    throw InvalidConfig("scnn_build: input shape must be C x H x W");
  for (std::size_t e : input_shape) {
    if (e == 0) throw InvalidConfig("scnn_build: zero input extent");
  }
  if (num_classes < 2) throw InvalidConfig("scnn_build: need at least two classes");
  if (cfg.conv_channels == 0 || cfg.conv_layers == 0 || cfg.hidden == 0)
    throw InvalidConfig("scnn_build: layer widths must be positive");
  if (input_shape[1] < SCNNHead<T>::kPool || input_shape[2] < SCNNHead<T>::kPool)
    throw InvalidConfig("scnn_build: feature map " + shape_string(input_shape) +
                        " is smaller than the pooling window");

  Rng rng(seed);
  auto he = [&](BasicTensor<T>& w, std::size_t fan_in) {
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (T& v : w.values()) v = static_cast<T>(rng.normal(0.0, sd));
  };
  SCNNHead<T> h;
  h.input_shape = input_shape;
  h.num_classes = num_classes;
  h.config = cfg;
  std::size_t in = input_shape[0];
  for (std::size_t i = 0; i < cfg.conv_layers; ++i) {
    ConvParams<T> c{BasicTensor<T>({cfg.conv_channels, in, 1, 1}),
                    BasicTensor<T>({cfg.conv_channels}), 1, 0};
    he(c.weights, in);
    h.convs.push_back(std::move(c));
    in = cfg.conv_channels;
  }
  const std::size_t ph = output_extent(input_shape[1], 2, 2, 0);
  const std::size_t pw = output_extent(input_shape[2], 2, 2, 0);
  const std::size_t flat = cfg.conv_channels * ph * pw;
  h.fc1_weights = BasicTensor<T>({cfg.hidden, flat});
  h.fc1_bias = BasicTensor<T>({cfg.hidden});
  h.fc2_weights = BasicTensor<T>({num_classes, cfg.hidden});
  h.fc2_bias = BasicTensor<T>({num_classes});
  he(h.fc1_weights, flat);
  he(h.fc2_weights, cfg.hidden);
  return h;
}

// Intermediate values kept for the backward pass.
template <typename T>
struct ScnnActivations {
  std::vector<BasicTensor<T>> conv_inputs;
  std::vector<BasicTensor<T>> conv_outputs;  // before relu
  BasicTensor<T> pool_input;                 // after the last relu
  BasicTensor<T> flat;
  BasicTensor<T> fc1_pre;
  BasicTensor<T> fc1_out;
  BasicTensor<T> logits;
};

namespace detail {

template <typename T>
BasicTensor<T> scnn_input(const SCNNHead<T>& h, const BasicTensor<T>& x) {
  if (x.shape() == h.input_shape) return x;
  if (x.rank() == 1 && x.size() == h.input_size()) return reshape(x, h.input_shape);
  throw ShapeMismatch("scnn: input " + shape_string(x.shape()) + ", head expects " +
                      shape_string(h.input_shape));
}

}  // namespace detail

template <typename T>
ScnnActivations<T> scnn_forward_cached(const SCNNHead<T>& h, const BasicTensor<T>& x) {
  ScnnActivations<T> a;
  auto cur = detail::scnn_input(h, x);
  for (const auto& c : h.convs) {
    a.conv_inputs.push_back(cur);
    a.conv_outputs.push_back(conv2d(cur, c));
    cur = relu(a.conv_outputs.back());
  }
  a.pool_input = std::move(cur);
  a.flat = flatten(maxpool2d(a.pool_input, SCNNHead<T>::kPool, SCNNHead<T>::kPoolStride));
  a.fc1_pre = fc_forward(a.flat, h.fc1_weights, h.fc1_bias);
  a.fc1_out = relu(a.fc1_pre);
  a.logits = fc_forward(a.fc1_out, h.fc2_weights, h.fc2_bias);
  return a;
}

template <typename T>
BasicTensor<T> scnn_forward(const SCNNHead<T>& h, const BasicTensor<T>& x) {
  return scnn_forward_cached(h, x).logits;
}

template <typename T>
struct ScnnLossGrad {
  double loss = 0.0;
  std::vector<BasicTensor<T>> grads;  // same order as parameters()
};

// Softmax cross-entropy of one sample and its gradient w.r.t. every parameter.
template <typename T>
ScnnLossGrad<T> scnn_loss_and_grad(const SCNNHead<T>& h, const BasicTensor<T>& x,
                                   std::size_t label) {
  const auto a = scnn_forward_cached(h, x);
  const auto sm = softmax_ce(a.logits, label);
  BasicTensor<T> d_logits = sm.probs;
  d_logits[label] -= T{1};

  const auto g2 = fc_backward(a.fc1_out, h.fc2_weights, d_logits);
  const auto g1 = fc_backward(a.flat, h.fc1_weights, relu_backward(a.fc1_pre, g2.input));
  const auto pooled_shape = Shape{a.pool_input.dim(0),
                                  output_extent(a.pool_input.dim(1), 2, 2, 0),
                                  output_extent(a.pool_input.dim(2), 2, 2, 0)};
  auto d = maxpool_backward(a.pool_input, SCNNHead<T>::kPool, SCNNHead<T>::kPoolStride,
                            reshape(g1.input, pooled_shape));

  ScnnLossGrad<T> r;
  r.loss = sm.loss;
  r.grads.resize(2 * h.convs.size() + 4);
  for (std::size_t i = h.convs.size(); i-- > 0;) {
    const auto gc = conv1x1_backward(a.conv_inputs[i], h.convs[i],
                                     relu_backward(a.conv_outputs[i], d));
    r.grads[2 * i] = gc.weights;
    r.grads[2 * i + 1] = gc.bias;
    d = gc.input;
  }
  const std::size_t o = 2 * h.convs.size();
  r.grads[o] = g1.weights;
  r.grads[o + 1] = g1.bias;
  r.grads[o + 2] = g2.weights;
  r.grads[o + 3] = g2.bias;
  return r;
}

template <typename T>
struct ScnnPrediction {
  std::size_t label = 0;
  BasicTensor<T> probs;
};

// Ties go to the lower class index.
template <typename T>
ScnnPrediction<T> scnn_predict(const SCNNHead<T>& h, const BasicTensor<T>& x) {
  ScnnPrediction<T> p;
  p.probs = softmax_ce(scnn_forward(h, x), 0).probs;
  for (std::size_t k = 1; k < p.probs.size(); ++k) {
    if (p.probs[k] > p.probs[p.label]) p.label = k;
  }
  return p;
}

template <typename T>
struct ScnnTrainResult {
  SCNNHead<T> head;
  std::vector<double> loss_curve;  // mean minibatch loss per epoch
};

// Minibatch SGD with momentum on the mean cross-entropy of each batch:
//   v <- momentum * v - lr * (g + weight_decay * w);  w <- w + v
// Weight decay applies to weight tensors only, not biases. Rows of `inputs`
// are flattened feature maps; samples are reshuffled every epoch.
template <typename T>
ScnnTrainResult<T> scnn_train(SCNNHead<T> h, const BasicTensor<T>& inputs,
                              std::span<const int> labels, const TrainConfig& cfg) {
  cfg.validate();
  if (inputs.rank() != 2 || inputs.dim(0) == 0)
    throw InvalidConfig("scnn_train: inputs must be a nonempty [samples, D] matrix");
  if (inputs.dim(0) != labels.size())
    throw InvalidConfig("scnn_train: row count and label count differ");
  if (inputs.dim(1) != h.input_size())
    throw InvalidConfig("scnn_train: rows of length " + std::to_string(inputs.dim(1)) +
                        " do not match head input " + shape_string(h.input_shape));
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= h.num_classes)
      throw InvalidConfig("scnn_train: label " + std::to_string(y) + " out of range");
  }

  const std::size_t N = inputs.dim(0);
  auto params = parameters(h);
  std::vector<BasicTensor<T>> velocity;
  for (auto* p : params) velocity.emplace_back(p->shape());
  std::vector<bool> decays;
  for (const auto& name : parameter_names(h)) decays.push_back(name.ends_with(".weight"));

  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(cfg.seed);
  ScnnTrainResult<T> result;
  std::vector<std::vector<double>> acc(params.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t b0 = 0; b0 < N; b0 += cfg.batch_size) {
      const std::size_t bn = std::min(cfg.batch_size, N - b0);
      for (std::size_t p = 0; p < params.size(); ++p) acc[p].assign(params[p]->size(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t s = b0; s < b0 + bn; ++s) {
        const std::size_t i = order[s];
        const auto row = inputs.row(i);
        const BasicTensor<T> x(h.input_shape, std::vector<T>(row.begin(), row.end()));
        const auto lg = scnn_loss_and_grad(h, x, static_cast<std::size_t>(labels[i]));
        batch_loss += lg.loss;
        for (std::size_t p = 0; p < params.size(); ++p) {
          const auto& g = lg.grads[p];
          for (std::size_t j = 0; j < g.size(); ++j) acc[p][j] += g[j];
        }
      }
      const double inv = 1.0 / static_cast<double>(bn);
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto& w = *params[p];
        auto& v = velocity[p];
        const double wd = decays[p] ? cfg.weight_decay : 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) {
          const double grad = acc[p][j] * inv + wd * static_cast<double>(w[j]);
          v[j] = static_cast<T>(cfg.momentum * static_cast<double>(v[j]) -
                                cfg.learning_rate * grad);
          w[j] += v[j];
        }
      }
      epoch_loss += batch_loss * inv;
      ++batches;
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(batches));
  }
  result.head = std::move(h);
  return result;
}

template <typename T>
TensorStore scnn_to_store(const SCNNHead<T>& h) {
  TensorStore s;
  const auto names = parameter_names(h);
  const auto params = parameters(h);
  for (std::size_t i = 0; i < params.size(); ++i)
    s.put(names[i], params[i]->template cast<float>());
  return s;
}

inline KeyValues scnn_sidecar(const SCNNHead<float>& h) {
  return {{"kind", "scnn"},
          {"input_shape", shape_string(h.input_shape)},
          {"num_classes", std::to_string(h.num_classes)},
          {"conv_channels", std::to_string(h.config.conv_channels)},
          {"conv_layers", std::to_string(h.config.conv_layers)},
          {"hidden", std::to_string(h.config.hidden)}};
}

inline Shape parse_shape(const std::string& s) {
  Shape shape;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find('x', start);
    if (end == std::string::npos) end = s.size();
    try {
      shape.push_back(std::stoul(s.substr(start, end - start)));
    } catch (const std::exception&) {
      throw CorruptFile("bad shape string '" + s + "'");
    }
    start = end + 1;
  }
  return shape;
}

// Rebuilds the head described by the sidecar and binds all parameters.
inline SCNNHead<float> scnn_from_store(const TensorStore& s, const KeyValues& meta) {
  auto field = [&](const char* key) -> const std::string& {
    auto it = meta.find(key);
    if (it == meta.end()) throw MetaMismatch(std::string("scnn sidecar lacks '") + key + "'");
    return it->second;
  };
  ScnnConfig cfg;
  cfg.conv_channels = std::stoul(field("conv_channels"));
  cfg.conv_layers = std::stoul(field("conv_layers"));
  cfg.hidden = std::stoul(field("hidden"));
  auto h = scnn_build<float>(parse_shape(field("input_shape")),
                             std::stoul(field("num_classes")), 0, cfg);
  const auto names = parameter_names(h);
  const auto params = parameters(h);
  for (std::size_t i = 0; i < params.size(); ++i)
    *params[i] = s.get(names[i], params[i]->shape());
  if (s.size() != params.size())
    throw UnexpectedTensor("scnn container holds " + std::to_string(s.size()) +
                           " entries, expected " + std::to_string(params.size()));
  return h;
}

}  // namespace resfeat
