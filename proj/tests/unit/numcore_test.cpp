// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <vector>

#include "gradcheck.hpp"
#include "referee/numcore/adam.hpp"
#include "referee/numcore/checkpoint.hpp"
#include "referee/numcore/nn.hpp"
#include "referee/numcore/ops.hpp"

namespace referee::numcore {
namespace {

using testing::check_gradients;
using testing::random_readout;
using testing::random_tensor;

constexpr double kRelTol = 1e-4;

TEST(TensorTest, RejectsLengthMismatchAndZeroDims) {
  EXPECT_THROW(Tensor<float>::from({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor<float>::zeros({3, 0}), ShapeError);
}

TEST(TensorTest, NonFiniteIsDetectable) {
  auto t = Tensor<float>::from({2}, {1.0f, std::nanf("")});
  EXPECT_FALSE(t.all_finite());
  EXPECT_THROW(t.check_finite("probe"), NumericError);
}

TEST(MatmulTest, IdentityAndDot) {
  auto eye = Tensor<float>::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor<float>::from({2, 2}, {3, 4, 5, 6});
  auto r = matmul(eye, m);
  EXPECT_EQ(std::vector<float>(r.data().begin(), r.data().end()),
            (std::vector<float>{3, 4, 5, 6}));
  auto dot = matmul(Tensor<float>::from({1, 2}, {1, 2}),
                    Tensor<float>::from({2, 1}, {3, 4}));
  EXPECT_EQ(dot.item(), 11.0f);
}

TEST(MatmulTest, ShapeMismatchNamesBothShapes) {
  auto a = Tensor<float>::zeros({2, 3});
  auto b = Tensor<float>::zeros({4, 2});
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos);
    EXPECT_NE(msg.find("[4, 2]"), std::string::npos);
  }
}

TEST(MatmulTest, GradientOfSumMatchesFiniteDifferences) {
  Rng rng(1);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4, 2}, rng);
  auto res = check_gradients([&] { return sum(matmul(a, b)); }, {a, b});
  EXPECT_LT(res.max_rel_error, kRelTol) << res.worst;
}

TEST(MatmulTest, BatchedGradients) {
  Rng rng(2);
  auto a = random_tensor({2, 3, 4}, rng);
  auto b = random_tensor({2, 4, 5}, rng);
  auto shared = random_tensor({4, 5}, rng);
  auto res = check_gradients(
      [&] {
        Rng r(3);
        return add(random_readout(matmul(a, b), r),
                   random_readout(matmul(a, shared), r));
      },
      {a, b, shared});
  EXPECT_LT(res.max_rel_error, kRelTol) << res.worst;
}

TEST(SoftmaxTest, ReferenceValues) {
  auto sym = softmax(Tensor<float>::from({2}, {0, 0}), -1);
  EXPECT_FLOAT_EQ(sym.data()[0], 0.5f);
  EXPECT_FLOAT_EQ(sym.data()[1], 0.5f);

  auto big = softmax(Tensor<float>::from({2}, {1000, 0}), 0);
  EXPECT_TRUE(big.all_finite());
  EXPECT_FLOAT_EQ(big.data()[0], 1.0f);
  EXPECT_NEAR(big.data()[1], 0.0f, 1e-30);

  // exp(x_i) / sum exp(x) evaluated directly in 64-bit
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  auto r = softmax(Tensor<double>::from({3}, {1, 2, 3}), 0);
  EXPECT_NEAR(r.data()[0], std::exp(1.0) / z, 1e-12);
  EXPECT_NEAR(r.data()[0], 0.09003, 1e-5);
  EXPECT_NEAR(r.data()[1], 0.24473, 1e-5);
  EXPECT_NEAR(r.data()[2], 0.66524, 1e-5);
}

TEST(SoftmaxTest, RowsSumToOneOnAnyAxis) {
  Rng rng(4);
  auto x = random_tensor({3, 5, 4}, rng, 3.0, false);
  const Shape& s = x.shape();
  for (std::size_t axis = 0; axis < 3; ++axis) {
    auto y = softmax(x, static_cast<int>(axis));
    std::size_t stride = 1;
    for (std::size_t d = axis + 1; d < 3; ++d) stride *= s[d];
    for (std::size_t flat = 0; flat < y.numel(); ++flat) {
      if ((flat / stride) % s[axis] != 0) continue;  // first element of a fibre
      double total = 0;
      for (std::size_t j = 0; j < s[axis]; ++j) {
        const double v = y.data()[flat + j * stride];
        EXPECT_GE(v, 0.0);
        total += v;
      }
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
  }
  EXPECT_THROW(softmax(x, 3), ShapeError);
}

TEST(SoftmaxTest, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  auto x = random_tensor({4, 6}, rng);
  for (int axis : {0, 1}) {
    auto res = check_gradients(
        [&] {
          Rng r(6);
          return random_readout(softmax(x, axis), r);
        },
        {x});
    EXPECT_LT(res.max_rel_error, kRelTol) << "axis " << axis << " " << res.worst;
  }
}

TEST(LayerNormTest, ConstantRowCollapsesToBeta) {
  auto x = Tensor<float>::full({1, 4}, 3.5f);
  auto g = Tensor<float>::full({4}, 1.0f);
  auto b = Tensor<float>::zeros({4});
  auto y = layer_norm(x, g, b);
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(LayerNormTest, TwoPointStandardization) {
  auto x = Tensor<double>::from({1, 2}, {1, 3});
  auto y = layer_norm(x, Tensor<double>::full({2}, 1.0), Tensor<double>::zeros({2}), 1e-14);
  EXPECT_NEAR(y.data()[0], -1.0, 1e-9);
  EXPECT_NEAR(y.data()[1], 1.0, 1e-9);
}

TEST(LayerNormTest, DimensionMismatchThrows) {
  EXPECT_THROW(layer_norm(Tensor<float>::zeros({2, 3}), Tensor<float>::zeros({4}),
                          Tensor<float>::zeros({4})),
               ShapeError);
}

TEST(LayerNormTest, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  auto x = random_tensor({5, 8}, rng);
  auto g = random_tensor({8}, rng);
  auto b = random_tensor({8}, rng);
  auto res = check_gradients(
      [&] {
        Rng r(8);
        return random_readout(layer_norm(x, g, b), r);
      },
      {x, g, b});
  EXPECT_LT(res.max_rel_error, kRelTol) << res.worst;
}

TEST(CrossEntropyTest, ReferenceValues) {
  std::vector<int> zero{0};
  EXPECT_NEAR(cross_entropy(Tensor<double>::from({1, 2}, {0, 0}), zero).item(),
              std::log(2.0), 1e-12);
  EXPECT_NEAR(cross_entropy(Tensor<double>::from({1, 2}, {100, 0}), zero).item(),
              0.0, 1e-12);
  std::vector<int> two{2};
  // -log of the softmax([1,2,3])[2] reference above
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  const double expected = -std::log(std::exp(3.0) / z);
  const double got = cross_entropy(Tensor<double>::from({1, 3}, {1, 2, 3}), two).item();
  EXPECT_NEAR(got, expected, 1e-12);
  EXPECT_NEAR(got, 0.40761, 1e-5);
}

TEST(CrossEntropyTest, OutOfRangeLabelThrows) {
  std::vector<int> bad{2};
  EXPECT_THROW(cross_entropy(Tensor<float>::zeros({1, 2}), bad), std::out_of_range);
  std::vector<int> neg{-1};
  EXPECT_THROW(cross_entropy(Tensor<float>::zeros({1, 2}), neg), std::out_of_range);
}

TEST(CrossEntropyTest, GradientMatchesFiniteDifferences) {
  Rng rng(9);
  auto logits = random_tensor({4, 3}, rng, 2.0);
  std::vector<int> labels{0, 2, 1, 2};
  auto res = check_gradients([&] { return cross_entropy(logits, labels); }, {logits});
  EXPECT_LT(res.max_rel_error, kRelTol) << res.worst;
}

TEST(ElementwiseTest, GradientsMatchFiniteDifferences) {
  Rng rng(10);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({3, 4}, rng);
  auto bias = random_tensor({4}, rng);
  auto res = check_gradients(
      [&] {
        Rng r(11);
        auto y = gelu(add(mul(a, sub(a, b)), bias));
        return random_readout(scale(y, 0.7), r);
      },
      {a, b, bias});
  EXPECT_LT(res.max_rel_error, kRelTol) << res.worst;
}

TEST(LinearTest, GradientMatchesFiniteDifferences) {
  Rng rng(12);
  auto x = random_tensor({2, 3, 5}, rng);
  auto w = random_tensor({5, 4}, rng);
  auto b = random_tensor({4}, rng);
  auto res = check_gradients(
      [&] {
        Rng r(13);
        return random_readout(linear(x, w, b), r);
      },
      {x, w, b});
  EXPECT_LT(res.max_rel_error, kRelTol) << res.worst;
}

TEST(StructuralOpsTest, GradientsMatchFiniteDifferences) {
  Rng rng(14);
  auto x = random_tensor({2, 3, 4}, rng);
  auto y = random_tensor({2, 1, 4}, rng);
  auto table = random_tensor({5, 4}, rng);
  std::vector<int> idx{4, 0, 4};
  auto res = check_gradients(
      [&] {
        Rng r(15);
        auto joined = concat<double>({x, y, x}, 1);       // [2, 7, 4]
        auto part = narrow(joined, 1, 2, 4);               // [2, 4, 4]
        auto pooled = mean(part, 1);                       // [2, 4]
        auto emb = embedding(table, idx);                  // [3, 4]
        auto tiled = expand_leading(emb, 2);               // [2, 3, 4]
        auto flat = reshape(tiled, {2, 12});
        return add(random_readout(pooled, r), random_readout(flat, r));
      },
      {x, y, table});
  EXPECT_LT(res.max_rel_error, kRelTol) << res.worst;
}

TEST(StructuralOpsTest, ErrorPaths) {
  auto x = Tensor<float>::zeros({2, 3});
  EXPECT_THROW(concat<float>({x, Tensor<float>::zeros({3, 3})}, 1), ShapeError);
  EXPECT_THROW(narrow(x, 1, 2, 2), ShapeError);
  EXPECT_THROW(reshape(x, {4}), ShapeError);
  std::vector<int> idx{3};
  EXPECT_THROW(embedding(x, idx), std::out_of_range);
  EXPECT_THROW(add(x, Tensor<float>::zeros({2})), ShapeError);
}

TEST(AttentionTest, WeightsAreRowStochastic) {
  Rng rng(16);
  auto q = random_tensor({2, 5, 8}, rng, 2.0, false);
  auto k = random_tensor({2, 7, 8}, rng, 2.0, false);
  auto v = random_tensor({2, 7, 8}, rng, 1.0, false);
  std::vector<double> w;
  auto out = scaled_dot_attention(q, k, v, 2, &w);
  EXPECT_EQ(out.shape(), (Shape{2, 5, 8}));
  ASSERT_EQ(w.size(), 2u * 2 * 5 * 7);
  for (std::size_t row = 0; row < w.size() / 7; ++row) {
    double total = 0;
    for (std::size_t j = 0; j < 7; ++j) {
      EXPECT_GE(w[row * 7 + j], 0.0);
      total += w[row * 7 + j];
    }
    EXPECT_NEAR(total, 1.0, 1e-5);
  }
}

TEST(AttentionTest, SingleKeyReturnsItsValue) {
  Rng rng(17);
  auto q = random_tensor({1, 3, 4}, rng, 1.0, false);
  auto k = random_tensor({1, 1, 4}, rng, 1.0, false);
  auto v = random_tensor({1, 1, 4}, rng, 1.0, false);
  auto out = scaled_dot_attention(q, k, v, 2);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_DOUBLE_EQ(out.data()[i * 4 + j], v.data()[j]);
    }
  }
}

TEST(AttentionTest, GradientMatchesFiniteDifferences) {
  Rng rng(18);
  auto q = random_tensor({2, 3, 8}, rng);
  auto k = random_tensor({2, 5, 8}, rng);
  auto v = random_tensor({2, 5, 8}, rng);
  auto res = check_gradients(
      [&] {
        Rng r(19);
        return random_readout(scaled_dot_attention(q, k, v, 4), r);
      },
      {q, k, v});
  EXPECT_LT(res.max_rel_error, kRelTol) << res.worst;
}

TEST(AttentionTest, HeadCountMustDivideModelDim) {
  auto t = Tensor<float>::zeros({1, 2, 6});
  EXPECT_THROW(scaled_dot_attention(t, t, t, 4), ShapeError);
}

TEST(DropoutTest, SeededAndEvalIdentity) {
  auto x = Tensor<float>::full({1000}, 1.0f);
  Rng r1(20), r2(20);
  auto a = dropout(x, 0.1, true, r1);
  auto b = dropout(x, 0.1, true, r2);
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  std::size_t zeros = 0;
  for (float v : a.data()) {
    if (v == 0.0f) {
      ++zeros;
    } else {
      EXPECT_FLOAT_EQ(v, 1.0f / 0.9f);
    }
  }
  EXPECT_GT(zeros, 50u);
  EXPECT_LT(zeros, 150u);
  auto e = dropout(x, 0.1, false, r1);
  EXPECT_EQ(e.node(), x.node());
}

TEST(DropoutTest, GradientUsesSameMask) {
  Rng rng(21);
  auto x = random_tensor({20}, rng);
  auto res = check_gradients(
      [&] {
        Rng r(22);
        auto y = dropout(x, 0.3, true, r);
        Rng rr(23);
        return random_readout(y, rr);
      },
      {x});
  EXPECT_LT(res.max_rel_error, kRelTol) << res.worst;
}

TEST(NoGradTest, GuardSuppressesGraph) {
  auto w = Tensor<float>::full({2, 2}, 1.0f, true);
  {
    NoGradGuard guard;
    auto y = matmul(w, w);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(matmul(w, w).requires_grad());
}

TEST(DeterminismTest, SameSeedBitIdenticalFloatOutputs) {
  auto run = [] {
    Rng rng(99);
    MultiHeadAttention<float> mha(16, 4, rng);
    Rng data_rng(100);
    std::vector<float> xs(3 * 9 * 16);
    for (float& v : xs) v = static_cast<float>(standard_normal(data_rng));
    auto x = Tensor<float>::from({3, 9, 16}, xs);
    auto y = mha(x, x);
    return std::vector<float>(y.data().begin(), y.data().end());
  };
  EXPECT_EQ(run(), run());
}

// --- Schedule and Adam -------------------------------------------------------

TEST(LrScheduleTest, WarmupThenCosineToMinimum) {
  LrSchedule s{1e-5, 1e-6, 100, 1000};
  EXPECT_DOUBLE_EQ(s.at(0), 0.0);
  EXPECT_NEAR(s.at(50), 5e-6, 1e-18);
  EXPECT_DOUBLE_EQ(s.at(100), 1e-5);
  EXPECT_NEAR(s.at(999), 1e-6, 1e-9);
  // midpoint of the cosine leg is the arithmetic mean of the two rates
  EXPECT_NEAR(s.at(100 + 899 / 2.0 + 0.5), 5.5e-6, 1e-8);
  for (std::size_t t = 101; t < 1000; ++t) EXPECT_LE(s.at(t), s.at(t - 1));
}

TEST(LrScheduleTest, RejectsInvalidConfigs) {
  EXPECT_THROW((LrSchedule{1e-6, 1e-5, 0, 10}.validate()), std::invalid_argument);
  EXPECT_THROW((LrSchedule{1e-5, 0.0, 0, 10}.validate()), std::invalid_argument);
  EXPECT_THROW((LrSchedule{1e-5, 1e-6, 10, 10}.validate()), std::invalid_argument);
}

TEST(AdamTest, ZeroGradientIsFixedPoint) {
  ParamList<double> params{{"w", Tensor<double>::from({3}, {1, -2, 3}, true)}};
  AdamState<double> state(params, {1e-5, 1e-6, 2, 10});
  params[0].tensor.node()->ensure_grad();
  for (int i = 0; i < 4; ++i) adam_step(params, state);
  EXPECT_EQ(std::vector<double>(params[0].tensor.data().begin(),
                                params[0].tensor.data().end()),
            (std::vector<double>{1, -2, 3}));
  for (double m : state.m[0]) EXPECT_EQ(m, 0.0);
}

TEST(AdamTest, MomentsDecayUnderZeroGradient) {
  ParamList<double> params{{"w", Tensor<double>::from({1}, {0.5}, true)}};
  AdamState<double> state(params, {1e-3, 1e-4, 0, 10});
  params[0].tensor.node()->ensure_grad();
  params[0].tensor.grad()[0] = 2.0;
  adam_step(params, state);
  const double m1 = state.m[0][0], v1 = state.v[0][0];
  EXPECT_NEAR(m1, 0.2, 1e-15);
  params[0].tensor.zero_grad();
  adam_step(params, state);
  EXPECT_NEAR(state.m[0][0], 0.9 * m1, 1e-15);
  EXPECT_NEAR(state.v[0][0], 0.999 * v1, 1e-15);
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  // bias correction makes |update| = lr * g / (|g| + eps) on the first step
  ParamList<double> params{{"w", Tensor<double>::from({2}, {1.0, 1.0}, true)}};
  AdamState<double> state(params, {1e-2, 1e-3, 0, 5});
  params[0].tensor.node()->ensure_grad();
  params[0].tensor.grad()[0] = 3.0;
  params[0].tensor.grad()[1] = -0.5;
  const double lr = adam_step(params, state);
  EXPECT_DOUBLE_EQ(lr, 1e-2);
  EXPECT_NEAR(params[0].tensor.data()[0], 1.0 - 1e-2, 1e-9);
  EXPECT_NEAR(params[0].tensor.data()[1], 1.0 + 1e-2, 1e-9);
}

TEST(AdamTest, NanGradientNamesParameter) {
  ParamList<float> params{{"block.0.q.weight", Tensor<float>::zeros({2}, true)}};
  AdamState<float> state(params, {1e-5, 1e-6, 0, 10});
  params[0].tensor.node()->ensure_grad();
  params[0].tensor.grad()[1] = std::nanf("");
  try {
    adam_step(params, state);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("block.0.q.weight"), std::string::npos);
  }
}

TEST(AdamTest, ExhaustedScheduleThrows) {
  ParamList<float> params{{"w", Tensor<float>::zeros({1}, true)}};
  AdamState<float> state(params, {1e-5, 1e-6, 0, 1});
  adam_step(params, state);
  EXPECT_THROW(adam_step(params, state), std::logic_error);
}

// --- Container ---------------------------------------------------------------

TEST(ContainerTest, HeaderLayoutIsLittleEndian) {
  std::vector<NamedArray> arrays{{"ab", {2}, {1.0f, -2.0f}}};
  auto bytes = encode_container(arrays);
  const std::vector<std::uint8_t> expected{
      'R', 'F', 'R', 'E', 1, 0, 0, 0, 1, 0, 0, 0,  // magic, version, count
      2, 0, 'a', 'b',                              // name
      1, 2, 0, 0, 0,                               // rank, dims
      0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0xC0};
  EXPECT_EQ(bytes, expected);
}

TEST(ContainerTest, RoundTripIsBitExact) {
  Rng rng(30);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<NamedArray> arrays;
    const auto n = 1 + uniform_index(rng, 5);
    for (std::uint64_t i = 0; i < n; ++i) {
      NamedArray a;
      a.name = "p" + std::to_string(trial) + "." + std::to_string(i);
      const auto rank = uniform_index(rng, 4);
      for (std::uint64_t r = 0; r < rank; ++r) a.shape.push_back(1 + uniform_index(rng, 4));
      a.values.resize(shape_numel(a.shape));
      for (float& v : a.values) {
        v = std::bit_cast<float>(static_cast<std::uint32_t>(rng()));
      }
      arrays.push_back(std::move(a));
    }
    auto bytes = encode_container(arrays);
    auto back = decode_container(bytes);
    ASSERT_EQ(back.size(), arrays.size());
    for (std::size_t i = 0; i < arrays.size(); ++i) {
      EXPECT_EQ(back[i].name, arrays[i].name);
      EXPECT_EQ(back[i].shape, arrays[i].shape);
      EXPECT_EQ(0, std::memcmp(back[i].values.data(), arrays[i].values.data(),
                               arrays[i].values.size() * sizeof(float)));
    }
    EXPECT_EQ(encode_container(back), bytes);
  }
}

TEST(ContainerTest, CorruptInputsAreRejected) {
  auto bytes = encode_container({{"x", {1}, {1.0f}}});
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_container(bad_magic), CheckpointError);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_container(truncated), CheckpointError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_container(trailing), CheckpointError);
}

TEST(ContainerTest, ParameterFileRoundTrip) {
  Rng rng(31);
  Linear<float> layer(3, 2, rng);
  ParamList<float> params;
  layer.collect(params, "fc");
  const auto path = std::filesystem::temp_directory_path() / "referee_ckpt_test.bin";
  save_parameters(path, params);

  Rng other(32);
  Linear<float> fresh(3, 2, other);
  ParamList<float> target;
  fresh.collect(target, "fc");
  load_parameters(path, target);
  for (std::size_t i = 0; i < params.size(); ++i) {
    EXPECT_TRUE(std::equal(params[i].tensor.data().begin(), params[i].tensor.data().end(),
                           target[i].tensor.data().begin()));
  }
  ParamList<float> wrong;
  Linear<float>(2, 2, other).collect(wrong, "fc");
  EXPECT_THROW(load_parameters(path, wrong), CheckpointError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace referee::numcore
