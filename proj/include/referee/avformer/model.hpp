// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef REFEREE_AVFORMER_MODEL_HPP_
#define REFEREE_AVFORMER_MODEL_HPP_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "referee/featpipe/features.hpp"
#include "referee/idb/bottleneck.hpp"
#include "referee/matchnet/matcher.hpp"
#include "referee/numcore/nn.hpp"

namespace referee::avformer {

using numcore::ForwardContext;
using numcore::Tensor;

struct LossWeights {
  double w_rf = 1.0;
  double w_id = 1.0;

  void validate() const;
};

struct ModelConfig {
  featpipe::SegmentConfig seg;
  idb::IdbConfig idb;
  matchnet::MatchConfig match;
  int av_depth = 2;
  int heads = 4;
  int ffn_mult = 4;
  double dropout = 0.1;
  /// Off: no reference branch; refined tokens are the target tokens.
  bool use_reference = true;
  bool type_embeddings = true;
  /// Off: the reference path gets its own bottleneck weights.
  bool share_idb = true;
  /// Instantiate the identity head (required when loss.w_id > 0).
  bool aux_head = true;
  LossWeights loss;

  void validate() const;
};

/// Rows of the type-embedding table.
enum TypeRole : int { kTypeCls = 0, kTypeIdQuery = 1, kTypeAvFeature = 2 };

template <typename T>
struct ModelInputs {
  Tensor<T> visual_tgt;  // [B, N_seg*T_v, D_raw]
  Tensor<T> audio_tgt;   // [B, N_seg*T_a, D_raw]
  Tensor<T> visual_ref;  // unused without the reference branch
  Tensor<T> audio_ref;
};

template <typename T>
struct ModelOutputs {
  Tensor<T> rf_logits;  // [B, 2], 0 real / 1 fake
  Tensor<T> id_logits;  // [B, 2], 0 mismatch / 1 match; undefined without aux head
  Tensor<T> cls_out;    // [B, D]
};

/// Pre-norm self-attention block: x += SA(LN x); x += FFN(LN x).
template <typename T>
class AvBlock {
 public:
  AvBlock() = default;
  AvBlock(std::size_t d, std::size_t heads, std::size_t hidden, numcore::Rng& rng)
      : ln_sa(d), ln_ffn(d), self_attn(d, heads, rng), ffn(d, hidden, rng) {}

  Tensor<T> operator()(const Tensor<T>& x, const ForwardContext& ctx) const {
    const Tensor<T> xn = ln_sa(x);
    Tensor<T> y = numcore::add(x, numcore::apply_dropout(self_attn(xn, xn), ctx));
    return numcore::add(y, numcore::apply_dropout(ffn(ln_ffn(y)), ctx));
  }

  void collect(numcore::ParamList<T>& out, std::string_view prefix) const {
    using numcore::join_name;
    ln_sa.collect(out, join_name(prefix, "ln_sa"));
    self_attn.collect(out, join_name(prefix, "sa"));
    ln_ffn.collect(out, join_name(prefix, "ln_ffn"));
    ffn.collect(out, join_name(prefix, "ffn"));
  }

  numcore::LayerNorm<T> ln_sa, ln_ffn;
  numcore::MultiHeadAttention<T> self_attn;
  numcore::FeedForward<T> ffn;
};

/// Full detector: feature assembly, identity bottleneck, identity matching,
/// AV-Transformer over [CLS; refined identity tokens; F_tgt] and both heads.
template <typename T>
class RefereeModel {
 public:
  /// Every component draws its initial weights from its own seed stream, so
  /// ablated models share the initialization of the components they keep.
  RefereeModel(const ModelConfig& config, std::uint64_t seed);

  ModelOutputs<T> forward(const ModelInputs<T>& in, const ForwardContext& ctx = {}) const;

  /// AV-Transformer stage alone. refined: [B, N_q, D]; f_tgt: [B, L, D].
  ModelOutputs<T> classify(const Tensor<T>& refined, const featpipe::FeatureSequence<T>& f_tgt,
                           const ForwardContext& ctx = {}) const;

  /// Stable, named parameter list (checkpoint order).
  numcore::ParamList<T> parameters() const;
  std::size_t parameter_count() const { return numcore::count_parameters(parameters()); }

  const ModelConfig& config() const { return cfg_; }
  std::size_t sequence_length() const;

  featpipe::FeatureAssembler<T> features;
  idb::IdentityBottleneck<T> bottleneck;
  idb::IdentityBottleneck<T> bottleneck_ref;  // only when !share_idb
  matchnet::IdentityMatcher<T> matcher;       // only when use_reference
  matchnet::IdentityHead<T> id_head;          // only when aux_head
  Tensor<T> cls_token;                        // [D]
  Tensor<T> type_embedding;                   // [3, D]
  std::vector<AvBlock<T>> blocks;
  numcore::Linear<T> rf_head;

 private:
  ModelConfig cfg_;
};

/// w_rf * CE(rf_logits, y_fake) + w_id * CE(id_logits, y_id_match). The
/// identity term is skipped entirely when w_id == 0.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& rf_logits, std::span<const int> y_fake,
                     const Tensor<T>& id_logits, std::span<const int> y_id_match,
                     const LossWeights& weights);

extern template class RefereeModel<float>;
extern template class RefereeModel<double>;

}  // namespace referee::avformer

#endif  // REFEREE_AVFORMER_MODEL_HPP_
