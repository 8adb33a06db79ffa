// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "gradcheck.hpp"
#include "referee/idb/bottleneck.hpp"
#include "referee/numcore/ops.hpp"

namespace referee::idb {
namespace {

using testing::random_tensor;
using testing::random_tensor_f;

// Plain row-major x[n, in] * w[in, out] + b, in double.
std::vector<double> affine(const std::vector<double>& x, std::size_t n, const Tensor<double>& w,
                           const Tensor<double>& b) {
  const std::size_t in = w.dim(0), out = w.dim(1);
  std::vector<double> y(n * out);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < out; ++c) {
      double s = b.data()[c];
      for (std::size_t k = 0; k < in; ++k) s += x[r * in + k] * w.data()[k * out + c];
      y[r * out + c] = s;
    }
  return y;
}

TEST(IdbTest, ZeroDepthReturnsInitialQueries) {
  numcore::Rng rng(1);
  IdbConfig cfg;
  cfg.depth = 0;
  IdentityBottleneck<float> idb(64, cfg, rng);
  numcore::Rng data(2);
  auto out = idb(random_tensor_f({2, 81, 64}, data), TokenSource::kTgt);
  ASSERT_EQ(out.tokens.shape(), (numcore::Shape{2, 6, 64}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < 6 * 64; ++i)
      ASSERT_EQ(out.tokens.data()[b * 6 * 64 + i], idb.q0.data()[i] + idb.q_pos.data()[i]);
}

TEST(IdbTest, OutputShapeIgnoresInputLength) {
  numcore::Rng rng(3);
  IdentityBottleneck<float> idb(64, IdbConfig{}, rng);
  numcore::Rng data(4);
  for (std::size_t len : {81u, 41u, 1u}) {
    auto out = idb(random_tensor_f({3, len, 64}, data), TokenSource::kRef);
    EXPECT_EQ(out.tokens.shape(), (numcore::Shape{3, 6, 64})) << len;
    EXPECT_EQ(out.source, TokenSource::kRef);
  }
}

TEST(IdbTest, RejectsWrongFeatureWidth) {
  numcore::Rng rng(5);
  IdentityBottleneck<float> idb(64, IdbConfig{}, rng);
  EXPECT_THROW(idb(Tensor<float>::zeros({1, 81, 32}), TokenSource::kTgt), numcore::ShapeError);
  EXPECT_THROW(idb(Tensor<float>::zeros({81, 64}), TokenSource::kTgt), numcore::ShapeError);
  IdbConfig bad;
  bad.heads = 5;
  EXPECT_THROW(bad.validate(64), std::invalid_argument);
}

TEST(IdbTest, SingleKeyCrossAttentionIsTheValuePath) {
  const std::size_t d = 16;
  numcore::Rng rng(6);
  IdbConfig cfg;
  cfg.depth = 1;
  IdentityBottleneck<double> idb(d, cfg, rng);
  numcore::Rng data(7);
  auto f = random_tensor({1, 1, d}, data, 1.0, false);
  const auto& blk = idb.blocks[0];

  // Oracle: softmax over one key is 1, so every query row receives
  // out_proj(v_proj(LN(f))).
  numcore::NoGradGuard guard;
  const auto fn = blk.ln_f(f);
  std::vector<double> fv(fn.data().begin(), fn.data().end());
  const auto value = affine(affine(fv, 1, blk.cross_attn.v_proj.weight, blk.cross_attn.v_proj.bias),
                            1, blk.cross_attn.out_proj.weight, blk.cross_attn.out_proj.bias);

  auto q = numcore::expand_leading(idb.initial_queries(), 1);
  const auto qn = blk.ln_sa(q);
  auto x = numcore::add(q, blk.self_attn(qn, qn));
  std::vector<double> weights;
  auto ca = blk.cross_attn(blk.ln_ca(x), fn, &weights);
  for (double w : weights) EXPECT_DOUBLE_EQ(w, 1.0);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < d; ++c) EXPECT_NEAR(ca.data()[r * d + c], value[c], 1e-12);

  // The full block built on the oracle matches the module output.
  std::vector<double> xh(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < d; ++c) xh[r * d + c] += value[c];
  auto xh_t = Tensor<double>::from({1, 6, d}, xh);
  auto want = numcore::add(xh_t, blk.ffn(blk.ln_ffn(xh_t)));
  auto got = idb(f, TokenSource::kTgt).tokens;
  for (std::size_t i = 0; i < got.numel(); ++i)
    EXPECT_NEAR(got.data()[i], want.data()[i], 1e-12);
}

TEST(IdbTest, AttentionRowsAreNormalized) {
  numcore::Rng rng(8);
  IdentityBottleneck<double> idb(64, IdbConfig{}, rng);
  numcore::Rng data(9);
  auto f = random_tensor({2, 81, 64}, data, 1.0, false);
  const auto& blk = idb.blocks[0];
  auto q = numcore::expand_leading(idb.initial_queries(), 2);
  std::vector<double> w;
  blk(q, f, {}, &w);
  ASSERT_EQ(w.size(), 2u * 4 * 6 * 81);
  for (std::size_t row = 0; row < w.size() / 81; ++row) {
    const double s = std::accumulate(w.begin() + row * 81, w.begin() + (row + 1) * 81, 0.0);
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_TRUE(std::all_of(w.begin() + row * 81, w.begin() + (row + 1) * 81,
                            [](double v) { return v >= 0.0; }));
  }
}

TEST(IdbTest, GradientsReachEveryParameter) {
  const std::size_t d = 8;
  numcore::Rng rng(10);
  IdbConfig cfg;
  cfg.n_q = 3;
  cfg.heads = 2;
  cfg.ffn_mult = 2;
  IdentityBottleneck<double> idb(d, cfg, rng);
  numcore::ParamList<double> params;
  idb.collect(params, "idb");
  // Break the identity initialization of the layer norms.
  numcore::Rng perturb(11);
  std::vector<Tensor<double>> inputs;
  for (auto& p : params) {
    for (double& v : p.tensor.data()) v += 0.3 * numcore::standard_normal(perturb);
    inputs.push_back(p.tensor);
  }
  numcore::Rng data(12);
  auto f = random_tensor({2, 5, d}, data);
  inputs.push_back(f);
  numcore::Rng readout(13);
  auto w = random_tensor({2, 3, d}, readout, 1.0, false);
  auto loss = [&] { return numcore::sum(numcore::mul(idb(f, TokenSource::kTgt).tokens, w)); };
  auto r = testing::check_gradients(loss, inputs, 1e-5, 12);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  // Every tensor receives some gradient.
  loss().backward();
  for (const auto& p : params) {
    ASSERT_TRUE(p.tensor.has_grad()) << p.name;
    double n = 0;
    for (double g : p.tensor.grad()) n += g * g;
    EXPECT_GT(n, 0.0) << p.name;
  }
}

Tensor<double> permute_rows(const Tensor<double>& x, const std::vector<std::size_t>& perm) {
  const std::size_t d = x.dim(x.rank() - 1);
  const std::size_t rows = x.numel() / d;
  const std::size_t n = perm.size();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = (r / n) * n;
    const std::size_t src = base + perm[r % n];
    std::copy_n(x.data().begin() + src * d, d, out.begin() + r * d);
  }
  return Tensor<double>::from(x.shape(), std::move(out));
}

TEST(IdbTest, QueryPermutationEquivarianceHoldsOnlyWithoutPositions) {
  const std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
  numcore::Rng data(14);
  auto f = random_tensor({2, 20, 32}, data, 1.0, false);

  IdbConfig plain;
  plain.query_pos = false;
  numcore::Rng rng(15);
  IdentityBottleneck<double> a(32, plain, rng);
  auto base = a(f, TokenSource::kTgt).tokens;
  a.q0 = permute_rows(a.q0, perm);
  auto permuted = a(f, TokenSource::kTgt).tokens;
  auto expected = permute_rows(base, perm);
  for (std::size_t i = 0; i < base.numel(); ++i)
    EXPECT_NEAR(permuted.data()[i], expected.data()[i], 1e-10);

  numcore::Rng rng2(15);
  IdentityBottleneck<double> b(32, IdbConfig{}, rng2);
  auto base_b = b(f, TokenSource::kTgt).tokens;
  b.q0 = permute_rows(b.q0, perm);
  auto permuted_b = b(f, TokenSource::kTgt).tokens;
  auto expected_b = permute_rows(base_b, perm);
  double diff = 0;
  for (std::size_t i = 0; i < base_b.numel(); ++i)
    diff = std::max(diff, std::abs(permuted_b.data()[i] - expected_b.data()[i]));
  EXPECT_GT(diff, 1e-3);
}

}  // namespace
}  // namespace referee::idb
