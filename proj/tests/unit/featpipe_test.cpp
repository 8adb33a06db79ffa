// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "gradcheck.hpp"
#include "referee/featpipe/features.hpp"

namespace referee::featpipe {
namespace {

using testing::random_tensor;
using testing::random_tensor_f;

TEST(SegmentStrideTest, DerivedExamples) {
  SegmentConfig cfg;
  EXPECT_NEAR(segment_stride(cfg), 0.32, 1e-12);
  EXPECT_NEAR(cfg.seg_duration_s + (cfg.n_seg - 1) * segment_stride(cfg), cfg.window_s, 1e-9);
  SegmentConfig two;
  two.n_seg = 2;
  two.window_s = 1.28;
  EXPECT_NEAR(segment_stride(two), 0.64, 1e-12);
}

TEST(SegmentStrideTest, RejectsDegenerateGeometry) {
  SegmentConfig flat;
  flat.window_s = flat.seg_duration_s;
  EXPECT_THROW(segment_stride(flat), std::invalid_argument);
  SegmentConfig one;
  one.n_seg = 1;
  EXPECT_THROW(segment_stride(one), std::invalid_argument);
  SegmentConfig neg;
  neg.window_s = 0.5;
  EXPECT_THROW(segment_stride(neg), std::invalid_argument);
  EXPECT_THROW(neg.validate(), std::invalid_argument);
}

TEST(LayoutTest, SpansTileTheSequence) {
  SegmentConfig cfg;
  const Layout l = make_layout(cfg);
  EXPECT_EQ(cfg.sequence_length(), 81u);
  EXPECT_EQ(l.length(), 81u);
  EXPECT_EQ(l.visual_begin, 0u);
  EXPECT_EQ(l.visual_len, 32u);
  EXPECT_EQ(l.mod_index, l.visual_begin + l.visual_len);
  EXPECT_EQ(l.audio_begin, l.mod_index + 1);
  EXPECT_EQ(l.audio_len, 48u);
  for (int n : {2, 3, 8, 11}) {
    SegmentConfig c;
    c.n_seg = n;
    const Layout m = make_layout(c);
    EXPECT_EQ(m.length(), static_cast<std::size_t>(n * 4 + 1 + n * 6));
    EXPECT_EQ(m.audio_begin + m.audio_len, m.length());
  }
}

TEST(AssembleTest, OutputLengthAndOrder) {
  SegmentConfig cfg;
  numcore::Rng rng(1);
  FeatureAssembler<float> fa(cfg, rng);
  numcore::Rng data(2);
  auto seq = fa.assemble(random_tensor_f({3, 32, 32}, data), random_tensor_f({3, 48, 32}, data),
                         Role::kTgt);
  EXPECT_EQ(seq.tokens.shape(), (numcore::Shape{3, 81, 64}));
  EXPECT_EQ(seq.role, Role::kTgt);
  EXPECT_EQ(seq.layout.mod_index, 32u);
}

TEST(AssembleTest, ZeroInputGivesPositionsAndSeparatorExactly) {
  SegmentConfig cfg;
  numcore::Rng rng(3);
  FeatureAssembler<float> fa(cfg, rng);
  auto seq = fa.assemble(numcore::Tensor<float>::zeros({32, 32}),
                         numcore::Tensor<float>::zeros({48, 32}), Role::kRef);
  const auto out = seq.tokens.data();
  const std::size_t d = 64;
  for (std::size_t t = 0; t < 32; ++t)
    for (std::size_t c = 0; c < d; ++c) ASSERT_EQ(out[t * d + c], fa.pos_v.data()[t * d + c]);
  for (std::size_t c = 0; c < d; ++c) ASSERT_EQ(out[32 * d + c], fa.f_mod.data()[c]);
  for (std::size_t t = 0; t < 48; ++t)
    for (std::size_t c = 0; c < d; ++c)
      ASSERT_EQ(out[(33 + t) * d + c], fa.pos_a.data()[t * d + c]);
}

TEST(AssembleTest, TargetAndReferenceShareWeights) {
  SegmentConfig cfg;
  numcore::Rng rng(4);
  FeatureAssembler<float> fa(cfg, rng);
  numcore::Rng data(5);
  auto v = random_tensor_f({32, 32}, data);
  auto a = random_tensor_f({48, 32}, data);
  auto tgt = fa.assemble(v, a, Role::kTgt);
  auto ref = fa.assemble(v, a, Role::kRef);
  EXPECT_TRUE(std::equal(tgt.tokens.data().begin(), tgt.tokens.data().end(),
                         ref.tokens.data().begin()));
}

TEST(AssembleTest, SwappingModalitiesChangesOutput) {
  // Equal token counts so the swap is shape-legal.
  SegmentConfig cfg;
  cfg.t_a = cfg.t_v;
  numcore::Rng rng(6);
  FeatureAssembler<float> fa(cfg, rng);
  numcore::Rng data(7);
  auto x = random_tensor_f({32, 32}, data);
  auto y = random_tensor_f({32, 32}, data);
  const auto xy_seq = fa.assemble(x, y, Role::kTgt);
  const auto yx_seq = fa.assemble(y, x, Role::kTgt);
  const auto xy = xy_seq.tokens.data();
  const auto yx = yx_seq.tokens.data();
  const std::size_t d = 64;
  double diff = 0;
  for (std::size_t i = 0; i < 32 * d; ++i) diff += std::abs(xy[i] - yx[i]);
  EXPECT_GT(diff, 1e-3);
}

TEST(AssembleTest, TokenCountMismatchIsAnError) {
  SegmentConfig cfg;
  numcore::Rng rng(8);
  FeatureAssembler<float> fa(cfg, rng);
  EXPECT_THROW(fa.assemble(numcore::Tensor<float>::zeros({31, 32}),
                           numcore::Tensor<float>::zeros({48, 32}), Role::kTgt),
               numcore::ShapeError);
  EXPECT_THROW(fa.assemble(numcore::Tensor<float>::zeros({32, 32}),
                           numcore::Tensor<float>::zeros({48, 31}), Role::kTgt),
               numcore::ShapeError);
  EXPECT_THROW(fa.assemble(numcore::Tensor<float>::zeros({2, 32, 32}),
                           numcore::Tensor<float>::zeros({3, 48, 32}), Role::kTgt),
               numcore::ShapeError);
}

TEST(AssembleTest, PositionalTablesCanBeDisabled) {
  SegmentConfig cfg;
  numcore::Rng rng(9);
  FeatureAssembler<float> fa(cfg, rng, false);
  numcore::ParamList<float> params;
  fa.collect(params, "features");
  for (const auto& p : params) EXPECT_EQ(p.name.find("pos_"), std::string::npos) << p.name;
  auto seq = fa.assemble(numcore::Tensor<float>::zeros({32, 32}),
                         numcore::Tensor<float>::zeros({48, 32}), Role::kTgt);
  for (std::size_t i = 0; i < 32 * 64; ++i) ASSERT_EQ(seq.tokens.data()[i], 0.0f);
}

TEST(AssembleTest, GradientsMatchFiniteDifferences) {
  SegmentConfig cfg;
  cfg.n_seg = 2;
  cfg.window_s = 1.28;
  cfg.d = 8;
  cfg.d_raw = 5;
  numcore::Rng rng(10);
  FeatureAssembler<double> fa(cfg, rng);
  numcore::Rng data(11);
  auto v = random_tensor({2, 8, 5}, data);
  auto a = random_tensor({2, 12, 5}, data);
  numcore::Rng readout_rng(12);
  auto w = random_tensor({2, 21, 8}, readout_rng, 1.0, false);
  auto loss = [&] {
    return numcore::sum(numcore::mul(fa.assemble(v, a, Role::kTgt).tokens, w));
  };
  auto r = testing::check_gradients(
      loss, {v, a, fa.proj_v.weight, fa.proj_a.bias, fa.pos_v, fa.pos_a, fa.f_mod});
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

}  // namespace
}  // namespace referee::featpipe
