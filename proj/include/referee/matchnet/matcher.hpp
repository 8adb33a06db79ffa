// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef REFEREE_MATCHNET_MATCHER_HPP_
#define REFEREE_MATCHNET_MATCHER_HPP_

#include <string>
#include <string_view>
#include <vector>

#include "referee/idb/bottleneck.hpp"
#include "referee/numcore/nn.hpp"

namespace referee::matchnet {

using idb::IdentityTokens;
using idb::TokenSource;
using numcore::ForwardContext;
using numcore::Tensor;

struct MatchConfig {
  int depth = 2;
  int heads = 4;
  int ffn_mult = 4;
  /// FFN sublayer after each cross-attention.
  bool ffn = true;

  void validate(int d) const;
};

/// T = CA(LN T, LN R) + T;  T = FFN(LN T) + T.
template <typename T>
class MatchBlock {
 public:
  MatchBlock() = default;
  MatchBlock(std::size_t d, const MatchConfig& cfg, numcore::Rng& rng)
      : use_ffn(cfg.ffn),
        ln_q(d),
        ln_kv(d),
        cross_attn(d, static_cast<std::size_t>(cfg.heads), rng) {
    if (use_ffn) {
      ln_ffn = numcore::LayerNorm<T>(d);
      ffn = numcore::FeedForward<T>(d, d * static_cast<std::size_t>(cfg.ffn_mult), rng);
    }
  }

  Tensor<T> operator()(const Tensor<T>& tgt, const Tensor<T>& ref, const ForwardContext& ctx,
                       std::vector<T>* weights = nullptr) const {
    Tensor<T> x = numcore::add(
        tgt, numcore::apply_dropout(cross_attn(ln_q(tgt), ln_kv(ref), weights), ctx));
    if (use_ffn) x = numcore::add(x, numcore::apply_dropout(ffn(ln_ffn(x)), ctx));
    return x;
  }

  void collect(numcore::ParamList<T>& out, std::string_view prefix) const {
    using numcore::join_name;
    ln_q.collect(out, join_name(prefix, "ln_q"));
    ln_kv.collect(out, join_name(prefix, "ln_kv"));
    cross_attn.collect(out, join_name(prefix, "ca"));
    if (use_ffn) {
      ln_ffn.collect(out, join_name(prefix, "ln_ffn"));
      ffn.collect(out, join_name(prefix, "ffn"));
    }
  }

  bool use_ffn = true;
  numcore::LayerNorm<T> ln_q, ln_kv, ln_ffn;
  numcore::MultiHeadAttention<T> cross_attn;
  numcore::FeedForward<T> ffn;
};

/// Refines target identity tokens against reference tokens.
template <typename T>
class IdentityMatcher {
 public:
  IdentityMatcher() = default;
  IdentityMatcher(std::size_t d, const MatchConfig& cfg, numcore::Rng& rng) : d_(d) {
    cfg.validate(static_cast<int>(d));
    for (int m = 0; m < cfg.depth; ++m) blocks.emplace_back(d, cfg, rng);
  }

  IdentityTokens<T> operator()(const IdentityTokens<T>& tgt, const IdentityTokens<T>& ref,
                               const ForwardContext& ctx = {}) const {
    const auto& ts = tgt.tokens.shape();
    const auto& rs = ref.tokens.shape();
    if (ts.size() != 3 || rs.size() != 3 || ts != rs || ts[2] != d_) {
      throw numcore::ShapeError("match: target " + numcore::shape_to_string(ts) +
                                " and reference " + numcore::shape_to_string(rs) +
                                " must both be [B, N_q, " + std::to_string(d_) + "]");
    }
    Tensor<T> x = tgt.tokens;
    for (const auto& block : blocks) x = block(x, ref.tokens, ctx);
    return {x, TokenSource::kRefined};
  }

  void collect(numcore::ParamList<T>& out, std::string_view prefix) const {
    for (std::size_t m = 0; m < blocks.size(); ++m) {
      blocks[m].collect(out, numcore::join_name(prefix, "block" + std::to_string(m)));
    }
  }

  std::vector<MatchBlock<T>> blocks;

 private:
  std::size_t d_ = 0;
};

/// Mean over tokens, then D -> D/2 -> GELU -> 2 identity logits
/// (0 mismatch, 1 match).
template <typename T>
class IdentityHead {
 public:
  IdentityHead() = default;
  IdentityHead(std::size_t d, numcore::Rng& rng) : hidden(d, d / 2, rng), out(d / 2, 2, rng) {}

  Tensor<T> operator()(const IdentityTokens<T>& refined) const {
    return out(numcore::gelu(hidden(numcore::mean(refined.tokens, 1))));
  }

  void collect(numcore::ParamList<T>& params, std::string_view prefix) const {
    hidden.collect(params, numcore::join_name(prefix, "fc1"));
    out.collect(params, numcore::join_name(prefix, "fc2"));
  }

  numcore::Linear<T> hidden, out;
};

}  // namespace referee::matchnet

#endif  // REFEREE_MATCHNET_MATCHER_HPP_
