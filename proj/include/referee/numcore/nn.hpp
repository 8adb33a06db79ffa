// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef REFEREE_NUMCORE_NN_HPP_
#define REFEREE_NUMCORE_NN_HPP_

#include <string>
#include <string_view>
#include <vector>

#include "referee/numcore/ops.hpp"
#include "referee/numcore/random.hpp"
#include "referee/numcore/tensor.hpp"

namespace referee::numcore {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

template <typename T>
std::size_t count_parameters(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

inline std::string join_name(std::string_view prefix, std::string_view leaf) {
  if (prefix.empty()) return std::string(leaf);
  std::string out(prefix);
  out += '.';
  out += leaf;
  return out;
}

/// Per-call state shared by every layer of a forward pass.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;
};

/// Weights/embeddings: truncated normal, std 0.02. Biases zero, LN affine 1/0.
template <typename T>
Tensor<T> init_normal(Shape shape, Rng& rng, double stddev = 0.02) {
  std::vector<T> values(shape_numel(shape));
  for (T& v : values) v = static_cast<T>(truncated_normal(rng, stddev));
  return Tensor<T>::from(std::move(shape), std::move(values), true);
}

template <typename T>
Tensor<T> apply_dropout(const Tensor<T>& x, const ForwardContext& ctx) {
  if (!ctx.training || ctx.dropout == 0.0 || ctx.rng == nullptr) return x;
  return dropout(x, ctx.dropout, true, *ctx.rng);
}

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng)
      : weight(init_normal<T>({in, out}, rng)),
        bias(Tensor<T>::zeros({out}, true)) {}

  Tensor<T> operator()(const Tensor<T>& x) const {
    return linear(x, weight, bias);
  }

  void collect(ParamList<T>& out, std::string_view prefix) const {
    out.push_back({join_name(prefix, "weight"), weight});
    out.push_back({join_name(prefix, "bias"), bias});
  }

  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t d, double eps = 1e-5)
      : gamma(Tensor<T>::full({d}, T(1), true)),
        beta(Tensor<T>::zeros({d}, true)),
        eps(eps) {}

  Tensor<T> operator()(const Tensor<T>& x) const {
    return layer_norm(x, gamma, beta, eps);
  }

  void collect(ParamList<T>& out, std::string_view prefix) const {
    out.push_back({join_name(prefix, "gamma"), gamma});
    out.push_back({join_name(prefix, "beta"), beta});
  }

  Tensor<T> gamma;
  Tensor<T> beta;
  double eps = 1e-5;
};

/// Multi-head attention with separate q/k/v/out projections.
template <typename T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t d, std::size_t heads, Rng& rng)
      : q_proj(d, d, rng),
        k_proj(d, d, rng),
        v_proj(d, d, rng),
        out_proj(d, d, rng),
        heads(heads) {}

  /// query: [B, Nq, D]; context: [B, Nk, D] supplies keys and values.
  Tensor<T> operator()(const Tensor<T>& query, const Tensor<T>& context,
                       std::vector<T>* weights_out = nullptr) const {
    auto attended = scaled_dot_attention(q_proj(query), k_proj(context),
                                         v_proj(context), heads, weights_out);
    return out_proj(attended);
  }

  void collect(ParamList<T>& out, std::string_view prefix) const {
    q_proj.collect(out, join_name(prefix, "q"));
    k_proj.collect(out, join_name(prefix, "k"));
    v_proj.collect(out, join_name(prefix, "v"));
    out_proj.collect(out, join_name(prefix, "o"));
  }

  Linear<T> q_proj, k_proj, v_proj, out_proj;
  std::size_t heads = 1;
};

/// Linear -> GELU -> Linear.
template <typename T>
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(std::size_t d, std::size_t hidden, Rng& rng)
      : up(d, hidden, rng), down(hidden, d, rng) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return down(gelu(up(x))); }

  void collect(ParamList<T>& out, std::string_view prefix) const {
    up.collect(out, join_name(prefix, "up"));
    down.collect(out, join_name(prefix, "down"));
  }

  Linear<T> up, down;
};

}  // namespace referee::numcore

#endif  // REFEREE_NUMCORE_NN_HPP_
