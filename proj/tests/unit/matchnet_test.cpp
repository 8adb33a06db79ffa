// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "referee/matchnet/matcher.hpp"
#include "referee/numcore/ops.hpp"

namespace referee::matchnet {
namespace {

using testing::random_tensor;

IdentityTokens<double> tokens(const Tensor<double>& t, TokenSource s) { return {t, s}; }

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

TEST(MatcherTest, IdenticalReferenceRowsGiveQueryIndependentAttention) {
  const std::size_t d = 16;
  numcore::Rng rng(1);
  MatchConfig cfg;
  cfg.depth = 1;
  IdentityMatcher<double> m(d, cfg, rng);
  const auto& blk = m.blocks[0];
  numcore::Rng data(2);
  auto row = random_tensor({1, 1, d}, data, 1.0, false);
  auto ref = numcore::expand_leading(numcore::reshape(row, {1, d}), 1);
  ref = numcore::concat<double>({ref, ref, ref, ref, ref, ref}, 1);
  auto tgt = random_tensor({1, 6, d}, data, 1.0, false);

  numcore::NoGradGuard guard;
  std::vector<double> w;
  auto ca = blk.cross_attn(blk.ln_q(tgt), blk.ln_kv(ref), &w);
  for (double v : w) EXPECT_NEAR(v, 1.0 / 6.0, 1e-12);
  auto value = blk.cross_attn.out_proj(blk.cross_attn.v_proj(blk.ln_kv(row)));
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < d; ++c) EXPECT_NEAR(ca.data()[r * d + c], value.data()[c], 1e-12);
}

TEST(MatcherTest, ZeroDepthPassesTargetThrough) {
  numcore::Rng rng(3);
  MatchConfig cfg;
  cfg.depth = 0;
  IdentityMatcher<double> m(64, cfg, rng);
  numcore::Rng data(4);
  auto tgt = random_tensor({2, 6, 64}, data, 1.0, false);
  auto ref = random_tensor({2, 6, 64}, data, 1.0, false);
  auto out = m(tokens(tgt, TokenSource::kTgt), tokens(ref, TokenSource::kRef));
  EXPECT_EQ(out.source, TokenSource::kRefined);
  EXPECT_EQ(max_abs_diff(out.tokens, tgt), 0.0);
}

TEST(MatcherTest, OutputTracksTheReference) {
  numcore::Rng rng(5);
  IdentityMatcher<double> m(64, MatchConfig{}, rng);
  numcore::Rng data(6);
  auto tgt = random_tensor({1, 6, 64}, data, 1.0, false);
  auto other = random_tensor({1, 6, 64}, data, 1.0, false);
  auto self = m(tokens(tgt, TokenSource::kTgt), tokens(tgt, TokenSource::kRef)).tokens;
  auto cross = m(tokens(tgt, TokenSource::kTgt), tokens(other, TokenSource::kRef)).tokens;
  EXPECT_EQ(self.shape(), tgt.shape());
  EXPECT_GT(max_abs_diff(self, cross), 1e-3);
}

TEST(MatcherTest, RejectsShapeMismatch) {
  numcore::Rng rng(7);
  IdentityMatcher<double> m(64, MatchConfig{}, rng);
  EXPECT_THROW(m(tokens(Tensor<double>::zeros({1, 6, 64}), TokenSource::kTgt),
                 tokens(Tensor<double>::zeros({1, 4, 64}), TokenSource::kRef)),
               numcore::ShapeError);
  EXPECT_THROW(m(tokens(Tensor<double>::zeros({1, 6, 32}), TokenSource::kTgt),
                 tokens(Tensor<double>::zeros({1, 6, 32}), TokenSource::kRef)),
               numcore::ShapeError);
}

TEST(MatcherTest, ReferencePermutationInvariance) {
  numcore::Rng rng(8);
  IdentityMatcher<double> m(32, MatchConfig{}, rng);
  numcore::Rng data(9);
  auto tgt = random_tensor({2, 6, 32}, data, 1.0, false);
  auto ref = random_tensor({2, 6, 32}, data, 1.0, false);
  const std::vector<std::size_t> perm = {5, 2, 0, 4, 1, 3};
  std::vector<double> shuffled(ref.numel());
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t r = 0; r < 6; ++r)
      std::copy_n(ref.data().begin() + (b * 6 + perm[r]) * 32, 32,
                  shuffled.begin() + (b * 6 + r) * 32);
  auto ref_p = Tensor<double>::from({2, 6, 32}, shuffled);
  auto a = m(tokens(tgt, TokenSource::kTgt), tokens(ref, TokenSource::kRef)).tokens;
  auto b = m(tokens(tgt, TokenSource::kTgt), tokens(ref_p, TokenSource::kRef)).tokens;
  EXPECT_LT(max_abs_diff(a, b), 1e-12);
}

TEST(MatcherTest, FfnToggleRemovesParameters) {
  numcore::Rng r1(10), r2(10);
  MatchConfig no_ffn;
  no_ffn.ffn = false;
  IdentityMatcher<float> with(64, MatchConfig{}, r1);
  IdentityMatcher<float> without(64, no_ffn, r2);
  numcore::ParamList<float> pw, po;
  with.collect(pw, "match");
  without.collect(po, "match");
  // Per block: LN (128) + FFN up/down (64*256 + 256 + 256*64 + 64).
  const std::size_t per_block = 128 + 64 * 256 + 256 + 256 * 64 + 64;
  EXPECT_EQ(numcore::count_parameters(pw) - numcore::count_parameters(po), 2 * per_block);
}

TEST(IdentityHeadTest, ZeroTokensWithZeroBiasGiveZeroLogits) {
  numcore::Rng rng(11);
  IdentityHead<double> head(64, rng);
  auto logits = head(tokens(Tensor<double>::zeros({1, 6, 64}), TokenSource::kRefined));
  ASSERT_EQ(logits.shape(), (numcore::Shape{1, 2}));
  EXPECT_EQ(logits.data()[0], 0.0);
  EXPECT_EQ(logits.data()[1], 0.0);
}

TEST(IdentityHeadTest, IdenticalRowsPoolToThatRow) {
  numcore::Rng rng(12);
  IdentityHead<double> head(16, rng);
  numcore::Rng data(13);
  auto row = random_tensor({1, 1, 16}, data, 1.0, false);
  auto many = numcore::concat<double>({row, row, row, row}, 1);
  auto a = head(tokens(row, TokenSource::kRefined));
  auto b = head(tokens(many, TokenSource::kRefined));
  EXPECT_LT(max_abs_diff(a, b), 1e-12);
  auto pooled = numcore::mean(many, 1);
  for (std::size_t c = 0; c < 16; ++c) EXPECT_NEAR(pooled.data()[c], row.data()[c], 1e-15);
}

TEST(IdentityHeadTest, IdentityLossGradientReachesReferencePath) {
  const std::size_t d = 8;
  numcore::Rng rng(14);
  MatchConfig cfg;
  cfg.heads = 2;
  cfg.ffn_mult = 2;
  IdentityMatcher<double> m(d, cfg, rng);
  IdentityHead<double> head(d, rng);
  numcore::ParamList<double> params;
  m.collect(params, "match");
  head.collect(params, "id_head");
  numcore::Rng perturb(15);
  std::vector<Tensor<double>> inputs;
  for (auto& p : params) {
    for (double& v : p.tensor.data()) v += 0.2 * numcore::standard_normal(perturb);
    inputs.push_back(p.tensor);
  }
  numcore::Rng data(16);
  auto tgt = random_tensor({3, 4, d}, data);
  auto ref = random_tensor({3, 4, d}, data);
  inputs.push_back(tgt);
  inputs.push_back(ref);
  const std::vector<int> labels = {1, 0, 1};
  auto loss = [&] {
    auto refined = m(tokens(tgt, TokenSource::kTgt), tokens(ref, TokenSource::kRef));
    return numcore::cross_entropy(head(refined), labels);
  };
  auto r = testing::check_gradients(loss, inputs, 1e-5, 10);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  ref.zero_grad();
  loss().backward();
  double g = 0;
  for (double v : ref.grad()) g += v * v;
  EXPECT_GT(g, 0.0);
  for (const auto& p : params) {
    // Key biases shift every score in a row equally and get no gradient.
    const bool ref_path = p.name.find("ln_kv") != std::string::npos ||
                          p.name.find(".ca.k.weight") != std::string::npos ||
                          p.name.find(".ca.v.") != std::string::npos;
    if (!ref_path) continue;
    double n = 0;
    for (double v : p.tensor.grad()) n += v * v;
    EXPECT_GT(n, 0.0) << p.name;
  }
}

}  // namespace
}  // namespace referee::matchnet
