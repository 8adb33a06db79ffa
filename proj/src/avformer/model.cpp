// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#include "referee/avformer/model.hpp"

#include <array>
#include <stdexcept>

#include "referee/numcore/random.hpp"

namespace referee::avformer {

namespace {

enum : std::uint64_t {
  kInitFeatures = 11,
  kInitIdb,
  kInitIdbRef,
  kInitMatch,
  kInitIdHead,
  kInitCls,
  kInitAv,
  kInitRfHead,
};

}  // namespace

void LossWeights::validate() const {
  if (!(w_rf > 0)) throw std::invalid_argument("loss weights: w_rf must be positive");
  if (!(w_id >= 0)) throw std::invalid_argument("loss weights: w_id must be non-negative");
}

void ModelConfig::validate() const {
  seg.validate();
  idb.validate(seg.d);
  match.validate(seg.d);
  loss.validate();
  if (av_depth < 0 || heads <= 0 || ffn_mult <= 0 || seg.d % heads != 0) {
    throw std::invalid_argument("model config: invalid AV-Transformer geometry");
  }
  if (dropout < 0 || dropout >= 1) throw std::invalid_argument("model config: dropout in [0, 1)");
  if (loss.w_id > 0 && !aux_head) {
    throw std::invalid_argument("model config: w_id > 0 needs the identity head");
  }
}

template <typename T>
RefereeModel<T>::RefereeModel(const ModelConfig& config, std::uint64_t seed) : cfg_(config) {
  config.validate();
  using numcore::derive_seed;
  using numcore::Rng;
  const auto d = static_cast<std::size_t>(config.seg.d);
  {
    Rng rng(derive_seed(seed, kInitFeatures));
    features = featpipe::FeatureAssembler<T>(config.seg, rng);
  }
  {
    Rng rng(derive_seed(seed, kInitIdb));
    bottleneck = idb::IdentityBottleneck<T>(d, config.idb, rng);
  }
  if (config.use_reference && !config.share_idb) {
    Rng rng(derive_seed(seed, kInitIdbRef));
    bottleneck_ref = idb::IdentityBottleneck<T>(d, config.idb, rng);
  }
  if (config.use_reference) {
    Rng rng(derive_seed(seed, kInitMatch));
    matcher = matchnet::IdentityMatcher<T>(d, config.match, rng);
  }
  if (config.aux_head) {
    Rng rng(derive_seed(seed, kInitIdHead));
    id_head = matchnet::IdentityHead<T>(d, rng);
  }
  {
    Rng rng(derive_seed(seed, kInitCls));
    cls_token = numcore::init_normal<T>({d}, rng);
    if (config.type_embeddings) type_embedding = numcore::init_normal<T>({3, d}, rng);
  }
  {
    Rng rng(derive_seed(seed, kInitAv));
    for (int k = 0; k < config.av_depth; ++k) {
      blocks.emplace_back(d, static_cast<std::size_t>(config.heads),
                          d * static_cast<std::size_t>(config.ffn_mult), rng);
    }
  }
  {
    Rng rng(derive_seed(seed, kInitRfHead));
    rf_head = numcore::Linear<T>(d, 2, rng);
  }
}

template <typename T>
std::size_t RefereeModel<T>::sequence_length() const {
  return 1 + static_cast<std::size_t>(cfg_.idb.n_q) + cfg_.seg.sequence_length();
}

template <typename T>
ModelOutputs<T> RefereeModel<T>::forward(const ModelInputs<T>& in,
                                         const ForwardContext& ctx) const {
  using featpipe::Role;
  using idb::TokenSource;
  if (!cfg_.use_reference) {
    const auto f_tgt = features.assemble(in.visual_tgt, in.audio_tgt, Role::kTgt);
    const auto t_tgt = bottleneck(f_tgt.tokens, TokenSource::kTgt, ctx);
    auto out = classify(t_tgt.tokens, f_tgt, ctx);
    if (cfg_.aux_head) out.id_logits = id_head(t_tgt);
    return out;
  }
  featpipe::FeatureSequence<T> f_tgt;
  idb::IdentityTokens<T> t_tgt, t_ref;
  if (cfg_.share_idb) {
    // One pass over the stacked [TGT; REF] batch with shared weights.
    const std::size_t b = in.visual_tgt.rank() == 3 ? in.visual_tgt.dim(0) : 1;
    auto stack = [](const Tensor<T>& a, const Tensor<T>& r) {
      if (a.rank() == 2) {
        return numcore::concat<T>({numcore::reshape(a, {1, a.dim(0), a.dim(1)}),
                                   numcore::reshape(r, {1, r.dim(0), r.dim(1)})},
                                  0);
      }
      return numcore::concat<T>({a, r}, 0);
    };
    const auto f_both =
        features.assemble(stack(in.visual_tgt, in.visual_ref), stack(in.audio_tgt, in.audio_ref),
                          Role::kTgt);
    const auto t_both = bottleneck(f_both.tokens, TokenSource::kTgt, ctx);
    f_tgt = {numcore::narrow(f_both.tokens, 0, 0, b), f_both.layout, Role::kTgt};
    t_tgt = {numcore::narrow(t_both.tokens, 0, 0, b), TokenSource::kTgt};
    t_ref = {numcore::narrow(t_both.tokens, 0, b, b), TokenSource::kRef};
  } else {
    f_tgt = features.assemble(in.visual_tgt, in.audio_tgt, Role::kTgt);
    const auto f_ref = features.assemble(in.visual_ref, in.audio_ref, Role::kRef);
    t_tgt = bottleneck(f_tgt.tokens, TokenSource::kTgt, ctx);
    t_ref = bottleneck_ref(f_ref.tokens, TokenSource::kRef, ctx);
  }
  const auto refined = matcher(t_tgt, t_ref, ctx);
  auto out = classify(refined.tokens, f_tgt, ctx);
  if (cfg_.aux_head) out.id_logits = id_head(refined);
  return out;
}

template <typename T>
ModelOutputs<T> RefereeModel<T>::classify(const Tensor<T>& refined,
                                          const featpipe::FeatureSequence<T>& f_tgt,
                                          const ForwardContext& ctx) const {
  const std::size_t d = cls_token.numel();
  if (refined.rank() != 3 || f_tgt.tokens.rank() != 3 || refined.dim(0) != f_tgt.tokens.dim(0) ||
      refined.dim(2) != d || f_tgt.tokens.dim(2) != d) {
    throw numcore::ShapeError("classify: identity tokens " +
                              numcore::shape_to_string(refined.shape()) + " and features " +
                              numcore::shape_to_string(f_tgt.tokens.shape()) +
                              " are inconsistent");
  }
  const std::size_t b = refined.dim(0);
  const std::size_t nq = refined.dim(1);
  const std::size_t nf = f_tgt.tokens.dim(1);
  const Tensor<T> cls = numcore::expand_leading(numcore::reshape(cls_token, {1, d}), b);
  Tensor<T> x = numcore::concat<T>({cls, refined, f_tgt.tokens}, 1);
  if (cfg_.type_embeddings) {
    std::vector<int> roles(1 + nq + nf, kTypeAvFeature);
    roles[0] = kTypeCls;
    for (std::size_t i = 0; i < nq; ++i) roles[1 + i] = kTypeIdQuery;
    x = numcore::add(x, numcore::embedding(type_embedding, std::span<const int>(roles)));
  }
  for (const auto& block : blocks) x = block(x, ctx);
  ModelOutputs<T> out;
  out.cls_out = numcore::reshape(numcore::narrow(x, 1, 0, 1), {b, d});
  out.rf_logits = rf_head(out.cls_out);
  return out;
}

template <typename T>
numcore::ParamList<T> RefereeModel<T>::parameters() const {
  numcore::ParamList<T> p;
  features.collect(p, "features");
  bottleneck.collect(p, "idb");
  if (cfg_.use_reference && !cfg_.share_idb) bottleneck_ref.collect(p, "idb_ref");
  if (cfg_.use_reference) matcher.collect(p, "match");
  if (cfg_.aux_head) id_head.collect(p, "id_head");
  p.push_back({"av.cls", cls_token});
  if (cfg_.type_embeddings) p.push_back({"av.type", type_embedding});
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    blocks[k].collect(p, "av.block" + std::to_string(k));
  }
  rf_head.collect(p, "rf_head");
  return p;
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& rf_logits, std::span<const int> y_fake,
                     const Tensor<T>& id_logits, std::span<const int> y_id_match,
                     const LossWeights& weights) {
  weights.validate();
  auto check = [](std::span<const int> labels, const char* what) {
    for (int y : labels) {
      if (y != 0 && y != 1) {
        throw std::invalid_argument(std::string("total_loss: ") + what + " labels must be 0/1");
      }
    }
  };
  check(y_fake, "y_fake");
  Tensor<T> loss = numcore::scale(numcore::cross_entropy(rf_logits, y_fake), T(weights.w_rf));
  if (weights.w_id > 0) {
    if (!id_logits.defined()) {
      throw std::invalid_argument("total_loss: w_id > 0 but no identity logits");
    }
    check(y_id_match, "y_id_match");
    loss = numcore::add(
        loss, numcore::scale(numcore::cross_entropy(id_logits, y_id_match), T(weights.w_id)));
  }
  return loss;
}

template class RefereeModel<float>;
template class RefereeModel<double>;
template Tensor<float> total_loss(const Tensor<float>&, std::span<const int>,
                                  const Tensor<float>&, std::span<const int>,
                                  const LossWeights&);
template Tensor<double> total_loss(const Tensor<double>&, std::span<const int>,
                                   const Tensor<double>&, std::span<const int>,
                                   const LossWeights&);

}  // namespace referee::avformer
