// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef REFEREE_IDB_BOTTLENECK_HPP_
#define REFEREE_IDB_BOTTLENECK_HPP_

#include <string>
#include <string_view>
#include <vector>

#include "referee/numcore/nn.hpp"
#include "referee/numcore/tensor.hpp"

namespace referee::idb {

using numcore::ForwardContext;
using numcore::Tensor;

enum class TokenSource { kTgt, kRef, kRefined };

template <typename T>
struct IdentityTokens {
  Tensor<T> tokens;  // [B, N_q, D]
  TokenSource source = TokenSource::kTgt;
};

struct IdbConfig {
  int n_q = 6;
  int depth = 2;
  int heads = 4;
  int ffn_mult = 4;
  /// Adds q_pos to the initial queries.
  bool query_pos = true;

  void validate(int d) const;
};

/// Q~ = SA(LN Q) + Q;  Q^ = CA(LN Q~, LN F) + Q~;  Q' = FFN(LN Q^) + Q^.
template <typename T>
class IdbBlock {
 public:
  IdbBlock() = default;
  IdbBlock(std::size_t d, const IdbConfig& cfg, numcore::Rng& rng)
      : ln_sa(d),
        ln_ca(d),
        ln_f(d),
        ln_ffn(d),
        self_attn(d, static_cast<std::size_t>(cfg.heads), rng),
        cross_attn(d, static_cast<std::size_t>(cfg.heads), rng),
        ffn(d, d * static_cast<std::size_t>(cfg.ffn_mult), rng) {}

  Tensor<T> operator()(const Tensor<T>& q, const Tensor<T>& f, const ForwardContext& ctx,
                       std::vector<T>* cross_weights = nullptr) const {
    const Tensor<T> qn = ln_sa(q);
    Tensor<T> x = numcore::add(q, numcore::apply_dropout(self_attn(qn, qn), ctx));
    x = numcore::add(x, numcore::apply_dropout(cross_attn(ln_ca(x), ln_f(f), cross_weights), ctx));
    return numcore::add(x, numcore::apply_dropout(ffn(ln_ffn(x)), ctx));
  }

  void collect(numcore::ParamList<T>& out, std::string_view prefix) const {
    using numcore::join_name;
    ln_sa.collect(out, join_name(prefix, "ln_sa"));
    self_attn.collect(out, join_name(prefix, "sa"));
    ln_ca.collect(out, join_name(prefix, "ln_ca"));
    ln_f.collect(out, join_name(prefix, "ln_f"));
    cross_attn.collect(out, join_name(prefix, "ca"));
    ln_ffn.collect(out, join_name(prefix, "ln_ffn"));
    ffn.collect(out, join_name(prefix, "ffn"));
  }

  numcore::LayerNorm<T> ln_sa, ln_ca, ln_f, ln_ffn;
  numcore::MultiHeadAttention<T> self_attn, cross_attn;
  numcore::FeedForward<T> ffn;
};

/// Compresses a [B, L, D] feature sequence into N_q identity tokens.
template <typename T>
class IdentityBottleneck {
 public:
  IdentityBottleneck() = default;
  IdentityBottleneck(std::size_t d, const IdbConfig& cfg, numcore::Rng& rng)
      : cfg_(cfg), d_(d) {
    cfg.validate(static_cast<int>(d));
    const auto nq = static_cast<std::size_t>(cfg.n_q);
    q0 = numcore::init_normal<T>({nq, d}, rng);
    if (cfg.query_pos) q_pos = numcore::init_normal<T>({nq, d}, rng);
    for (int l = 0; l < cfg.depth; ++l) blocks.emplace_back(d, cfg, rng);
  }

  /// Q_(0) = q0 (+ q_pos), shape [N_q, D].
  Tensor<T> initial_queries() const {
    return cfg_.query_pos ? numcore::add(q0, q_pos) : q0;
  }

  IdentityTokens<T> operator()(const Tensor<T>& f, TokenSource source,
                               const ForwardContext& ctx = {}) const {
    if (f.rank() != 3 || f.dim(2) != d_) {
      throw numcore::ShapeError("idb: expected features [B, L, " + std::to_string(d_) +
                                "], got " + numcore::shape_to_string(f.shape()));
    }
    Tensor<T> q = numcore::expand_leading(initial_queries(), f.dim(0));
    for (const auto& block : blocks) q = block(q, f, ctx);
    return {q, source};
  }

  void collect(numcore::ParamList<T>& out, std::string_view prefix) const {
    out.push_back({numcore::join_name(prefix, "q0"), q0});
    if (cfg_.query_pos) out.push_back({numcore::join_name(prefix, "q_pos"), q_pos});
    for (std::size_t l = 0; l < blocks.size(); ++l) {
      blocks[l].collect(out, numcore::join_name(prefix, "block" + std::to_string(l)));
    }
  }

  const IdbConfig& config() const { return cfg_; }

  Tensor<T> q0, q_pos;
  std::vector<IdbBlock<T>> blocks;

 private:
  IdbConfig cfg_;
  std::size_t d_ = 0;
};

}  // namespace referee::idb

#endif  // REFEREE_IDB_BOTTLENECK_HPP_
