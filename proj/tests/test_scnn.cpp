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
#include <vector>

#include "oracles.hpp"
#include "resfeat/scnn.hpp"

namespace resfeat {
namespace {

using testing::random_tensor;

TEST(ScnnShapeTest, FullSizeGeometry) {
  // Shapes only; the full head is too large to train here.
  auto h = scnn_build<float>({2048, 7, 7}, 10, 1);
  ASSERT_EQ(h.convs.size(), 1u);
  EXPECT_EQ(h.convs[0].weights.shape(), (Shape{512, 2048, 1, 1}));
  EXPECT_EQ(h.fc1_weights.shape(), (Shape{4096, 512 * 3 * 3}));
  EXPECT_EQ(h.fc2_weights.shape(), (Shape{10, 4096}));
  EXPECT_EQ(h.input_size(), 2048u * 49u);
}

TEST(ScnnShapeTest, IntermediateShapes) {
  Rng rng(1);
  ScnnConfig cfg{16, 2, 32};
  auto h = scnn_build<float>({8, 7, 7}, 3, 2, cfg);
  auto a = scnn_forward_cached(h, random_tensor<float>({8, 7, 7}, rng));
  ASSERT_EQ(a.conv_outputs.size(), 2u);
  EXPECT_EQ(a.conv_outputs[1].shape(), (Shape{16, 7, 7}));
  EXPECT_EQ(a.flat.shape(), (Shape{16 * 3 * 3}));
  EXPECT_EQ(a.fc1_out.shape(), (Shape{32}));
  EXPECT_EQ(a.logits.shape(), (Shape{3}));
  EXPECT_EQ(parameter_names(h),
            (std::vector<std::string>{"scnn.conv.weight", "scnn.conv.bias", "scnn.conv2.weight",
                                      "scnn.conv2.bias", "scnn.fc1.weight", "scnn.fc1.bias",
                                      "scnn.fc2.weight", "scnn.fc2.bias"}));
}

TEST(ScnnShapeTest, FlatInputIsAccepted) {
  Rng rng(2);
  auto h = scnn_build<float>({4, 4, 4}, 2, 3, {8, 1, 8});
  auto x = random_tensor<float>({4, 4, 4}, rng);
  EXPECT_EQ(scnn_forward(h, x), scnn_forward(h, flatten(x)));
  EXPECT_THROW(scnn_forward(h, Tensor({63})), ShapeMismatch);
}

TEST(ScnnBuildTest, SeedDeterminesInitialisation) {
  auto a = scnn_build<float>({4, 3, 3}, 2, 5, {8, 1, 8});
  auto b = scnn_build<float>({4, 3, 3}, 2, 5, {8, 1, 8});
  auto c = scnn_build<float>({4, 3, 3}, 2, 6, {8, 1, 8});
  EXPECT_EQ(scnn_to_store(a).serialize(), scnn_to_store(b).serialize());
  EXPECT_NE(scnn_to_store(a).serialize(), scnn_to_store(c).serialize());
}

TEST(ScnnBuildTest, Errors) {
  EXPECT_THROW(scnn_build<float>({4, 3, 3}, 1, 0), InvalidConfig);
  EXPECT_THROW(scnn_build<float>({4, 1, 3}, 2, 0), InvalidConfig);
  EXPECT_THROW(scnn_build<float>({4, 3}, 2, 0), InvalidConfig);
  EXPECT_THROW(scnn_build<float>({4, 3, 3}, 2, 0, {0, 1, 8}), InvalidConfig);
}

TEST(ScnnForwardTest, ZeroInputComposesBiases) {
  Rng rng(4);
  auto h = scnn_build<double>({3, 4, 4}, 3, 7, {5, 1, 6});
  h.convs[0].bias = random_tensor<double>({5}, rng);
  h.fc1_bias = random_tensor<double>({6}, rng);
  h.fc2_bias = random_tensor<double>({3}, rng);
  // Every position of the conv map equals relu(bias), so pooling keeps it.
  BasicTensor<double> flat({5 * 2 * 2});
  for (std::size_t c = 0; c < 5; ++c)
    for (std::size_t i = 0; i < 4; ++i) flat[c * 4 + i] = std::max(h.convs[0].bias[c], 0.0);
  auto expected =
      fc_forward(relu(fc_forward(flat, h.fc1_weights, h.fc1_bias)), h.fc2_weights, h.fc2_bias);
  EXPECT_EQ(scnn_forward(h, BasicTensor<double>({3, 4, 4})), expected);
}

TEST(ScnnGradientTest, FullHeadMatchesFiniteDifferences) {
  Rng rng(8);
  for (std::size_t layers : {1u, 2u}) {
    auto h = scnn_build<double>({8, 3, 3}, 2, 9 + layers, {4, layers, 5});
    for (auto* p : parameters(h))
      for (double& v : p->values()) v = rng.uniform(-1, 1);
    auto x = random_tensor<double>({8, 3, 3}, rng);
    for (std::size_t label : {0u, 1u}) {
      const auto lg = scnn_loss_and_grad(h, x, label);
      EXPECT_NEAR(lg.loss, softmax_ce(scnn_forward(h, x), label).loss, 1e-12);
      auto params = parameters(h);
      ASSERT_EQ(lg.grads.size(), params.size());
      auto loss = [&] { return softmax_ce(scnn_forward(h, x), label).loss; };
      for (std::size_t p = 0; p < params.size(); ++p) {
        ASSERT_EQ(lg.grads[p].shape(), params[p]->shape());
        std::vector<double*> ptrs;
        for (double& v : params[p]->values()) ptrs.push_back(&v);
        const auto num = testing::numeric_gradient(loss, ptrs);
        for (std::size_t i = 0; i < num.size(); ++i)
          EXPECT_LE(testing::grad_rel_error(lg.grads[p][i], num[i]), 1e-4)
              << parameter_names(h)[p] << "[" << i << "]";
      }
    }
  }
}

BasicTensor<double> batch_of(Rng& rng, const Shape& shape, std::size_t n) {
  return random_tensor<double>({n, shape_size(shape)}, rng);
}

TEST(ScnnTrainTest, ZeroLearningRateLeavesParametersUnchanged) {
  Rng rng(10);
  auto h = scnn_build<double>({4, 2, 2}, 2, 1, {3, 1, 4});
  auto X = batch_of(rng, h.input_shape, 6);
  std::vector<int> y{0, 1, 0, 1, 1, 0};
  TrainConfig cfg;
  cfg.learning_rate = 0;
  cfg.epochs = 3;
  auto r = scnn_train(h, X, y, cfg);
  EXPECT_EQ(scnn_to_store(r.head).serialize(), scnn_to_store(h).serialize());
  ASSERT_EQ(r.loss_curve.size(), 3u);
}

TEST(ScnnTrainTest, SmallStepDecreasesBatchLoss) {
  Rng rng(11);
  auto h = scnn_build<double>({4, 2, 2}, 3, 2, {3, 1, 6});
  auto X = batch_of(rng, h.input_shape, 9);
  std::vector<int> y{0, 1, 2, 0, 1, 2, 0, 1, 2};
  auto batch_loss = [&](const SCNNHead<double>& head) {
    double s = 0;
    for (std::size_t i = 0; i < 9; ++i) {
      BasicTensor<double> x(head.input_shape, std::vector<double>(X.row(i).begin(), X.row(i).end()));
      s += softmax_ce(scnn_forward(head, x), std::size_t(y[i])).loss;
    }
    return s / 9;
  };
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.momentum = 0;
  cfg.weight_decay = 0;
  cfg.epochs = 1;
  cfg.batch_size = 9;
  auto r = scnn_train(h, X, y, cfg);
  EXPECT_LT(batch_loss(r.head), batch_loss(h));
  EXPECT_NEAR(r.loss_curve[0], batch_loss(h), 1e-12);
}

TEST(ScnnTrainTest, DeterministicPerSeed) {
  Rng rng(12);
  auto h = scnn_build<float>({4, 2, 2}, 2, 3, {3, 1, 4});
  auto X = random_tensor<float>({10, 16}, rng);
  std::vector<int> y{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 3;
  cfg.seed = 5;
  auto a = scnn_train(h, X, y, cfg);
  auto b = scnn_train(h, X, y, cfg);
  EXPECT_EQ(scnn_to_store(a.head).serialize(), scnn_to_store(b.head).serialize());
  EXPECT_EQ(a.loss_curve, b.loss_curve);
}

TEST(ScnnTrainTest, SeparableToyReachesFullTrainingAccuracy) {
  Rng rng(13);
  const Shape shape{4, 3, 3};
  const std::size_t per_class = 15;
  BasicTensor<float> X({3 * per_class, shape_size(shape)});
  std::vector<int> y;
  for (std::size_t i = 0; i < 3 * per_class; ++i) {
    const int c = int(i % 3);
    y.push_back(c);
    for (std::size_t j = 0; j < shape_size(shape); ++j) {
      const bool on = j / 9 == std::size_t(c);
      X[i * shape_size(shape) + j] = static_cast<float>(rng.uniform(0, 0.3) + (on ? 1.0 : 0.0));
    }
  }
  auto h = scnn_build<float>(shape, 3, 4, {8, 1, 16});
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 8;
  auto r = scnn_train(h, X, y, cfg);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    correct += scnn_predict(r.head, Tensor({shape_size(shape)},
                                           std::vector<float>(X.row(i).begin(), X.row(i).end())))
                   .label == std::size_t(y[i]);
  EXPECT_EQ(correct, y.size());
  EXPECT_LT(r.loss_curve.back(), r.loss_curve.front());
}

TEST(ScnnTrainTest, Errors) {
  auto h = scnn_build<float>({4, 2, 2}, 2, 3, {3, 1, 4});
  std::vector<int> y{0, 1};
  EXPECT_THROW(scnn_train(h, Tensor({2, 15}), y, TrainConfig{}), InvalidConfig);
  EXPECT_THROW(scnn_train(h, Tensor({3, 16}), y, TrainConfig{}), InvalidConfig);
  std::vector<int> bad{0, 2};
  EXPECT_THROW(scnn_train(h, Tensor({2, 16}), bad, TrainConfig{}), InvalidConfig);
  TrainConfig zero_batch;
  zero_batch.batch_size = 0;
  EXPECT_THROW(scnn_train(h, Tensor({2, 16}), y, zero_batch), InvalidConfig);
}

TEST(ScnnPredictTest, TiesAndProbabilities) {
  Rng rng(14);
  auto h = scnn_build<float>({4, 2, 2}, 3, 3, {3, 1, 4});
  h.fc2_weights = Tensor({3, 4}, 0.5f);
  h.fc2_bias = Tensor({3});
  auto p = scnn_predict(h, random_tensor<float>({4, 2, 2}, rng));
  EXPECT_EQ(p.label, 0u);
  auto g = scnn_build<float>({4, 2, 2}, 4, 8, {3, 1, 4});
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor<float>({4, 2, 2}, rng, -5, 5);
    auto q = scnn_predict(g, x);
    double sum = 0;
    for (float v : q.probs.values()) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-6);
    EXPECT_EQ(q.probs, softmax_ce(scnn_forward(g, x), 0).probs);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_LE(q.probs[k], q.probs[q.label]);
  }
}

TEST(ScnnStoreTest, RoundTripAndRejections) {
  Rng rng(15);
  auto h = scnn_build<float>({4, 3, 3}, 3, 6, {5, 2, 7});
  auto store = TensorStore::deserialize(scnn_to_store(h).serialize());
  auto meta = parse_key_values(format_key_values(scnn_sidecar(h)));
  auto back = scnn_from_store(store, meta);
  auto x = random_tensor<float>({4, 3, 3}, rng);
  EXPECT_EQ(scnn_forward(back, x), scnn_forward(h, x));
  EXPECT_EQ(parse_shape("4x3x3"), (Shape{4, 3, 3}));
  EXPECT_THROW(parse_shape("4xx3"), CorruptFile);

  auto extra = store;
  extra.put("scnn.fc3.weight", Tensor({1}));
  EXPECT_THROW(scnn_from_store(extra, meta), UnexpectedTensor);
  auto other = meta;
  other["hidden"] = "8";
  EXPECT_THROW(scnn_from_store(store, other), ShapeMismatch);
  other.erase("hidden");
  EXPECT_THROW(scnn_from_store(store, other), MetaMismatch);
}

}  // namespace
}  // namespace resfeat
