// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#include "referee/numcore/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace referee::numcore {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstStrided = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using MutStrided = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " invalid for rank " +
                     std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

// (outer, extent, inner) decomposition around an axis.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

bool is_suffix(const Shape& full, const Shape& suffix) {
  if (suffix.size() > full.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), full.rbegin());
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError("matmul needs rank >= 2 operands, got " +
                     shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(-2), k = a.dim(-1);
  const std::size_t kb = b.dim(-2), n = b.dim(-1);
  if (k != kb) {
    throw ShapeError("matmul inner dimensions differ: " +
                     shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  Shape out_shape = a.shape();
  out_shape.back() = n;

  if (b.rank() == 2) {
    const std::size_t rows = a.numel() / k;
    detail::Buffer<T> out(rows * n);
    MutMap<T>(out.data(), rows, n).noalias() =
        ConstMap<T>(a.data().data(), rows, k) *
        ConstMap<T>(b.data().data(), k, n);
    return detail::make_result<T>(
        std::move(out_shape), std::move(out), {a.node(), b.node()},
        [rows, k, n](detail::Node<T>& self) {
          auto& na = *self.inputs[0];
          auto& nb = *self.inputs[1];
          ConstMap<T> g(self.grad.data(), rows, n);
          if (na.requires_grad) {
            MutMap<T>(na.grad.data(), rows, k).noalias() +=
                g * ConstMap<T>(nb.value.data(), k, n).transpose();
          }
          if (nb.requires_grad) {
            MutMap<T>(nb.grad.data(), k, n).noalias() +=
                ConstMap<T>(na.value.data(), rows, k).transpose() * g;
          }
        });
  }

  Shape a_batch(a.shape().begin(), a.shape().end() - 2);
  Shape b_batch(b.shape().begin(), b.shape().end() - 2);
  if (a_batch != b_batch) {
    throw ShapeError("matmul batch dimensions differ: " +
                     shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  const std::size_t batch = shape_numel(a_batch);
  detail::Buffer<T> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    MutMap<T>(out.data() + i * m * n, m, n).noalias() =
        ConstMap<T>(a.data().data() + i * m * k, m, k) *
        ConstMap<T>(b.data().data() + i * k * n, k, n);
  }
  return detail::make_result<T>(
      std::move(out_shape), std::move(out), {a.node(), b.node()},
      [batch, m, k, n](detail::Node<T>& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        for (std::size_t i = 0; i < batch; ++i) {
          ConstMap<T> g(self.grad.data() + i * m * n, m, n);
          if (na.requires_grad) {
            MutMap<T>(na.grad.data() + i * m * k, m, k).noalias() +=
                g * ConstMap<T>(nb.value.data() + i * k * n, k, n).transpose();
          }
          if (nb.requires_grad) {
            MutMap<T>(nb.grad.data() + i * k * n, k, n).noalias() +=
                ConstMap<T>(na.value.data() + i * m * k, m, k).transpose() * g;
          }
        }
      });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!is_suffix(a.shape(), b.shape())) {
    throw ShapeError("add: " + shape_to_string(b.shape()) +
                     " is not a suffix of " + shape_to_string(a.shape()));
  }
  const std::size_t inner = b.numel();
  const std::size_t outer = a.numel() / inner;
  detail::Buffer<T> out(a.data().begin(), a.data().end());
  const T* pb = b.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    T* row = out.data() + o * inner;
    for (std::size_t i = 0; i < inner; ++i) row[i] += pb[i];
  }
  return detail::make_result<T>(
      a.shape(), std::move(out), {a.node(), b.node()},
      [outer, inner](detail::Node<T>& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        const T* g = self.grad.data();
        if (na.requires_grad) {
          for (std::size_t i = 0; i < outer * inner; ++i) na.grad[i] += g[i];
        }
        if (nb.requires_grad) {
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < inner; ++i) nb.grad[i] += g[o * inner + i];
          }
        }
      });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("sub: shapes differ " + shape_to_string(a.shape()) +
                     " vs " + shape_to_string(b.shape()));
  }
  detail::Buffer<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return detail::make_result<T>(
      a.shape(), std::move(out), {a.node(), b.node()},
      [](detail::Node<T>& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          if (na.requires_grad) na.grad[i] += self.grad[i];
          if (nb.requires_grad) nb.grad[i] -= self.grad[i];
        }
      });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: shapes differ " + shape_to_string(a.shape()) +
                     " vs " + shape_to_string(b.shape()));
  }
  detail::Buffer<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return detail::make_result<T>(
      a.shape(), std::move(out), {a.node(), b.node()},
      [](detail::Node<T>& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          if (na.requires_grad) na.grad[i] += self.grad[i] * nb.value[i];
          if (nb.requires_grad) nb.grad[i] += self.grad[i] * na.value[i];
        }
      });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  detail::Buffer<T> out(x.data().begin(), x.data().end());
  for (T& v : out) v *= factor;
  return detail::make_result<T>(
      x.shape(), std::move(out), {x.node()},
      [factor](detail::Node<T>& self) {
        auto& nx = *self.inputs[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          nx.grad[i] += factor * self.grad[i];
        }
      });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  if (weight.rank() != 2 || x.dim(-1) != weight.dim(0)) {
    throw ShapeError("linear: input " + shape_to_string(x.shape()) +
                     " incompatible with weight " +
                     shape_to_string(weight.shape()));
  }
  const std::size_t in = weight.dim(0), out_dim = weight.dim(1);
  if (bias.rank() != 1 || bias.dim(0) != out_dim) {
    throw ShapeError("linear: bias " + shape_to_string(bias.shape()) +
                     " does not match weight " +
                     shape_to_string(weight.shape()));
  }
  const std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  detail::Buffer<T> out(rows * out_dim);
  MutMap<T> y(out.data(), rows, out_dim);
  y.noalias() = ConstMap<T>(x.data().data(), rows, in) *
                ConstMap<T>(weight.data().data(), in, out_dim);
  y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(
      bias.data().data(), out_dim);
  return detail::make_result<T>(
      std::move(out_shape), std::move(out), {x.node(), weight.node(), bias.node()},
      [rows, in, out_dim](detail::Node<T>& self) {
        auto& nx = *self.inputs[0];
        auto& nw = *self.inputs[1];
        auto& nb = *self.inputs[2];
        ConstMap<T> g(self.grad.data(), rows, out_dim);
        if (nx.requires_grad) {
          MutMap<T>(nx.grad.data(), rows, in).noalias() +=
              g * ConstMap<T>(nw.value.data(), in, out_dim).transpose();
        }
        if (nw.requires_grad) {
          MutMap<T>(nw.grad.data(), in, out_dim).noalias() +=
              ConstMap<T>(nx.value.data(), rows, in).transpose() * g;
        }
        if (nb.requires_grad) {
          Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(nb.grad.data(), out_dim) +=
              g.colwise().sum();
        }
      });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T kInvSqrt2 = T(0.70710678118654752440);
  detail::Buffer<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x.data()[i];
    out[i] = T(0.5) * v * (T(1) + std::erf(v * kInvSqrt2));
  }
  return detail::make_result<T>(
      x.shape(), std::move(out), {x.node()}, [](detail::Node<T>& self) {
        constexpr T kInvSqrt2 = T(0.70710678118654752440);
        constexpr T kInvSqrt2Pi = T(0.39894228040143267794);
        auto& nx = *self.inputs[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const T v = nx.value[i];
          const T cdf = T(0.5) * (T(1) + std::erf(v * kInvSqrt2));
          const T pdf = kInvSqrt2Pi * std::exp(T(-0.5) * v * v);
          nx.grad[i] += self.grad[i] * (cdf + v * pdf);
        }
      });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  detail::Buffer<T> out(x.numel());
  const T* px = x.data().data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      T mx = px[base];
      for (std::size_t j = 1; j < s.extent; ++j) {
        mx = std::max(mx, px[base + j * s.inner]);
      }
      T total = 0;
      for (std::size_t j = 0; j < s.extent; ++j) {
        const T e = std::exp(px[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < s.extent; ++j) out[base + j * s.inner] /= total;
    }
  }
  return detail::make_result<T>(
      x.shape(), std::move(out), {x.node()}, [s](detail::Node<T>& self) {
        auto& nx = *self.inputs[0];
        const T* y = self.value.data();
        const T* g = self.grad.data();
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.extent * s.inner + i;
            T dot = 0;
            for (std::size_t j = 0; j < s.extent; ++j) {
              dot += g[base + j * s.inner] * y[base + j * s.inner];
            }
            for (std::size_t j = 0; j < s.extent; ++j) {
              const std::size_t idx = base + j * s.inner;
              nx.grad[idx] += y[idx] * (g[idx] - dot);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, double eps) {
  const std::size_t d = x.dim(-1);
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw ShapeError("layer_norm: feature dim " + std::to_string(d) +
                     " vs gamma " + shape_to_string(gamma.shape()) +
                     " / beta " + shape_to_string(beta.shape()));
  }
  const std::size_t rows = x.numel() / d;
  detail::Buffer<T> out(x.numel());
  detail::Buffer<T> xhat(x.numel());
  std::vector<T> rstd(rows);
  const T* px = x.data().data();
  const T* pg = gamma.data().data();
  const T* pb = beta.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = px + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= T(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= T(d);
    const T inv = T(1) / std::sqrt(var + T(eps));
    rstd[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mu) * inv;
      xhat[r * d + j] = h;
      out[r * d + j] = pg[j] * h + pb[j];
    }
  }
  return detail::make_result<T>(
      x.shape(), std::move(out), {x.node(), gamma.node(), beta.node()},
      [rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](
          detail::Node<T>& self) {
        auto& nx = *self.inputs[0];
        auto& ng = *self.inputs[1];
        auto& nb = *self.inputs[2];
        const T* g = self.grad.data();
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gr = g + r * d;
          const T* hr = xhat.data() + r * d;
          if (ng.requires_grad) {
            for (std::size_t j = 0; j < d; ++j) ng.grad[j] += gr[j] * hr[j];
          }
          if (nb.requires_grad) {
            for (std::size_t j = 0; j < d; ++j) nb.grad[j] += gr[j];
          }
          if (nx.requires_grad) {
            T mean_dh = 0, mean_dh_h = 0;
            for (std::size_t j = 0; j < d; ++j) {
              const T dh = gr[j] * ng.value[j];
              mean_dh += dh;
              mean_dh_h += dh * hr[j];
            }
            mean_dh /= T(d);
            mean_dh_h /= T(d);
            for (std::size_t j = 0; j < d; ++j) {
              const T dh = gr[j] * ng.value[j];
              nx.grad[r * d + j] += rstd[r] * (dh - mean_dh - hr[j] * mean_dh_h);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2) {
    throw ShapeError("cross_entropy expects [B, C] logits, got " +
                     shape_to_string(logits.shape()));
  }
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for batch of " + std::to_string(batch));
  }
  detail::Buffer<T> probs(batch * classes);
  T loss = 0;
  const T* pl = logits.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(label) +
                              " outside [0, " + std::to_string(classes) + ")");
    }
    const T* row = pl + b * classes;
    const T mx = *std::max_element(row, row + classes);
    T total = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs[b * classes + c] = std::exp(row[c] - mx);
      total += probs[b * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) probs[b * classes + c] /= total;
    loss += std::log(total) + mx - row[label];
  }
  loss /= T(batch);
  std::vector<int> saved_labels(labels.begin(), labels.end());
  return detail::make_result<T>(
      {}, {loss}, {logits.node()},
      [batch, classes, probs = std::move(probs),
       saved_labels = std::move(saved_labels)](detail::Node<T>& self) {
        auto& nl = *self.inputs[0];
        const T g = self.grad[0] / T(batch);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < classes; ++c) {
            const T onehot = static_cast<int>(c) == saved_labels[b] ? T(1) : T(0);
            nl.grad[b * classes + c] += g * (probs[b * classes + c] - onehot);
          }
        }
      });
}

template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k,
                               const Tensor<T>& v, std::size_t num_heads,
                               std::vector<T>* weights_out) {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3 ||
      k.shape() != v.shape() || q.dim(0) != k.dim(0) || q.dim(2) != k.dim(2)) {
    throw ShapeError("attention: incompatible q " + shape_to_string(q.shape()) +
                     ", k " + shape_to_string(k.shape()) + ", v " +
                     shape_to_string(v.shape()));
  }
  const std::size_t batch = q.dim(0), nq = q.dim(1), nk = k.dim(1), d = q.dim(2);
  if (num_heads == 0 || d % num_heads != 0) {
    throw ShapeError("attention: model dim " + std::to_string(d) +
                     " not divisible by " + std::to_string(num_heads) + " heads");
  }
  const std::size_t dh = d / num_heads;
  const T scale_factor = T(1) / std::sqrt(T(dh));
  detail::Buffer<T> probs(batch * num_heads * nq * nk);
  detail::Buffer<T> out(batch * nq * d);
  const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(d));
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < num_heads; ++h) {
      ConstStrided<T> qh(q.data().data() + b * nq * d + h * dh, nq, dh, stride);
      ConstStrided<T> kh(k.data().data() + b * nk * d + h * dh, nk, dh, stride);
      ConstStrided<T> vh(v.data().data() + b * nk * d + h * dh, nk, dh, stride);
      T* pp = probs.data() + (b * num_heads + h) * nq * nk;
      MutMap<T> p(pp, nq, nk);
      p.noalias() = (qh * kh.transpose()) * scale_factor;
      for (std::size_t i = 0; i < nq; ++i) {
        T* row = pp + i * nk;
        const T mx = *std::max_element(row, row + nk);
        T total = 0;
        for (std::size_t j = 0; j < nk; ++j) {
          row[j] = std::exp(row[j] - mx);
          total += row[j];
        }
        for (std::size_t j = 0; j < nk; ++j) row[j] /= total;
      }
      MutStrided<T>(out.data() + b * nq * d + h * dh, nq, dh, stride).noalias() =
          p * vh;
    }
  }
  if (weights_out != nullptr) weights_out->assign(probs.begin(), probs.end());
  return detail::make_result<T>(
      q.shape(), std::move(out), {q.node(), k.node(), v.node()},
      [batch, nq, nk, d, dh, num_heads, scale_factor,
       probs = std::move(probs)](detail::Node<T>& self) {
        auto& nqn = *self.inputs[0];
        auto& nkn = *self.inputs[1];
        auto& nvn = *self.inputs[2];
        const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(d));
        RowMat<T> dp(nq, nk);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < num_heads; ++h) {
            const std::size_t qoff = b * nq * d + h * dh;
            const std::size_t koff = b * nk * d + h * dh;
            ConstMap<T> p(probs.data() + (b * num_heads + h) * nq * nk, nq, nk);
            ConstStrided<T> go(self.grad.data() + qoff, nq, dh, stride);
            ConstStrided<T> vh(nvn.value.data() + koff, nk, dh, stride);
            if (nvn.requires_grad) {
              MutStrided<T>(nvn.grad.data() + koff, nk, dh, stride).noalias() +=
                  p.transpose() * go;
            }
            if (!nqn.requires_grad && !nkn.requires_grad) continue;
            dp.noalias() = go * vh.transpose();
            for (std::size_t i = 0; i < nq; ++i) {
              T dot = 0;
              for (std::size_t j = 0; j < nk; ++j) dot += dp(i, j) * p(i, j);
              for (std::size_t j = 0; j < nk; ++j) {
                dp(i, j) = p(i, j) * (dp(i, j) - dot) * scale_factor;
              }
            }
            if (nqn.requires_grad) {
              ConstStrided<T> kh(nkn.value.data() + koff, nk, dh, stride);
              MutStrided<T>(nqn.grad.data() + qoff, nq, dh, stride).noalias() +=
                  dp * kh;
            }
            if (nkn.requires_grad) {
              ConstStrided<T> qh(nqn.value.data() + qoff, nq, dh, stride);
              MutStrided<T>(nkn.grad.data() + koff, nk, dh, stride).noalias() +=
                  dp.transpose() * qh;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training,
                  std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) {
    throw std::invalid_argument("dropout rate must be in [0, 1), got " +
                                std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  const T keep_scale = T(1.0 / (1.0 - p));
  detail::Buffer<T> mask(x.numel());
  detail::Buffer<T> out(x.numel());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    mask[i] = u < p ? T(0) : keep_scale;
    out[i] = x.data()[i] * mask[i];
  }
  return detail::make_result<T>(
      x.shape(), std::move(out), {x.node()},
      [mask = std::move(mask)](detail::Node<T>& self) {
        auto& nx = *self.inputs[0];
        for (std::size_t i = 0; i < mask.size(); ++i) {
          nx.grad[i] += self.grad[i] * mask[i];
        }
      });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  detail::Buffer<T> out(s.outer * s.inner, T(0));
  const T* px = x.data().data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.extent; ++j) {
      const T* src = px + (o * s.extent + j) * s.inner;
      T* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  for (T& v : out) v /= T(s.extent);
  return detail::make_result<T>(
      std::move(out_shape), std::move(out), {x.node()},
      [s](detail::Node<T>& self) {
        auto& nx = *self.inputs[0];
        const T inv = T(1) / T(s.extent);
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t j = 0; j < s.extent; ++j) {
            T* dst = nx.grad.data() + (o * s.extent + j) * s.inner;
            const T* g = self.grad.data() + o * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) dst[i] += g[i] * inv;
          }
        }
      });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  return detail::make_result<T>({}, {total}, {x.node()},
                                [](detail::Node<T>& self) {
                                  auto& nx = *self.inputs[0];
                                  for (T& g : nx.grad) g += self.grad[0];
                                });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const std::size_t ax = normalize_axis(axis, parts[0].rank());
  Shape out_shape = parts[0].shape();
  out_shape[ax] = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != out_shape.size()) {
      throw ShapeError("concat: rank mismatch at " + shape_to_string(probe));
    }
    probe[ax] = 0;
    if (probe != out_shape) {
      throw ShapeError("concat: " + shape_to_string(p.shape()) +
                       " incompatible with " + shape_to_string(parts[0].shape()) +
                       " along axis " + std::to_string(ax));
    }
    extents.push_back(p.shape()[ax]);
  }
  out_shape[ax] = std::accumulate(extents.begin(), extents.end(), std::size_t{0});
  const AxisSplit s = split_at(out_shape, ax);
  detail::Buffer<T> out(shape_numel(out_shape));
  std::vector<std::shared_ptr<detail::Node<T>>> inputs;
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const std::size_t chunk = extents[pi] * s.inner;
    const T* src = parts[pi].data().data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy(src + o * chunk, src + (o + 1) * chunk,
                out.data() + o * s.extent * s.inner + offset);
    }
    offset += chunk;
    inputs.push_back(parts[pi].node());
  }
  return detail::make_result<T>(
      std::move(out_shape), std::move(out), std::move(inputs),
      [s, extents](detail::Node<T>& self) {
        std::size_t offset = 0;
        for (std::size_t pi = 0; pi < extents.size(); ++pi) {
          auto& np = *self.inputs[pi];
          const std::size_t chunk = extents[pi] * s.inner;
          if (np.requires_grad) {
            for (std::size_t o = 0; o < s.outer; ++o) {
              const T* g = self.grad.data() + o * s.extent * s.inner + offset;
              T* dst = np.grad.data() + o * chunk;
              for (std::size_t i = 0; i < chunk; ++i) dst[i] += g[i];
            }
          }
          offset += chunk;
        }
      });
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int> indices) {
  if (table.rank() != 2) {
    throw ShapeError("embedding table must be [V, D], got " +
                     shape_to_string(table.shape()));
  }
  if (indices.empty()) throw ShapeError("embedding lookup of zero indices");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  detail::Buffer<T> out(indices.size() * d);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || static_cast<std::size_t>(indices[i]) >= vocab) {
      throw std::out_of_range("embedding index " + std::to_string(indices[i]) +
                              " outside table of " + std::to_string(vocab));
    }
    const T* row = table.data().data() + static_cast<std::size_t>(indices[i]) * d;
    std::copy(row, row + d, out.data() + i * d);
  }
  std::vector<int> saved(indices.begin(), indices.end());
  return detail::make_result<T>(
      {indices.size(), d}, std::move(out), {table.node()},
      [d, saved = std::move(saved)](detail::Node<T>& self) {
        auto& nt = *self.inputs[0];
        for (std::size_t i = 0; i < saved.size(); ++i) {
          T* dst = nt.grad.data() + static_cast<std::size_t>(saved[i]) * d;
          const T* g = self.grad.data() + i * d;
          for (std::size_t j = 0; j < d; ++j) dst[j] += g[j];
        }
      });
}

template <typename T>
Tensor<T> narrow(const Tensor<T>& x, int axis, std::size_t start,
                 std::size_t length) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  if (length == 0 || start + length > s.extent) {
    throw ShapeError("narrow [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") out of range for " +
                     shape_to_string(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[ax] = length;
  detail::Buffer<T> out(s.outer * length * s.inner);
  const T* px = x.data().data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    const T* src = px + (o * s.extent + start) * s.inner;
    std::copy(src, src + length * s.inner, out.data() + o * length * s.inner);
  }
  return detail::make_result<T>(
      std::move(out_shape), std::move(out), {x.node()},
      [s, start, length](detail::Node<T>& self) {
        auto& nx = *self.inputs[0];
        for (std::size_t o = 0; o < s.outer; ++o) {
          T* dst = nx.grad.data() + (o * s.extent + start) * s.inner;
          const T* g = self.grad.data() + o * length * s.inner;
          for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += g[i];
        }
      });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape " + shape_to_string(x.shape()) + " -> " +
                     shape_to_string(shape) + " changes element count");
  }
  detail::Buffer<T> out(x.data().begin(), x.data().end());
  return detail::make_result<T>(std::move(shape), std::move(out), {x.node()},
                                [](detail::Node<T>& self) {
                                  auto& nx = *self.inputs[0];
                                  for (std::size_t i = 0; i < nx.grad.size(); ++i) {
                                    nx.grad[i] += self.grad[i];
                                  }
                                });
}

template <typename T>
Tensor<T> expand_leading(const Tensor<T>& x, std::size_t count) {
  if (count == 0) throw ShapeError("expand_leading with count 0");
  Shape out_shape;
  out_shape.push_back(count);
  out_shape.insert(out_shape.end(), x.shape().begin(), x.shape().end());
  const std::size_t n = x.numel();
  detail::Buffer<T> out(count * n);
  for (std::size_t c = 0; c < count; ++c) {
    std::copy(x.data().begin(), x.data().end(), out.begin() + static_cast<std::ptrdiff_t>(c * n));
  }
  return detail::make_result<T>(
      std::move(out_shape), std::move(out), {x.node()},
      [count, n](detail::Node<T>& self) {
        auto& nx = *self.inputs[0];
        for (std::size_t c = 0; c < count; ++c) {
          for (std::size_t i = 0; i < n; ++i) nx.grad[i] += self.grad[c * n + i];
        }
      });
}

#define REFEREE_INSTANTIATE_OPS(T)                                            \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> scale(const Tensor<T>&, T);                              \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&,               \
                            const Tensor<T>&);                                \
  template Tensor<T> gelu(const Tensor<T>&);                                  \
  template Tensor<T> softmax(const Tensor<T>&, int);                          \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&,           \
                                const Tensor<T>&, double);                    \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);   \
  template Tensor<T> scaled_dot_attention(const Tensor<T>&, const Tensor<T>&, \
                                          const Tensor<T>&, std::size_t,      \
                                          std::vector<T>*);                   \
  template Tensor<T> dropout(const Tensor<T>&, double, bool,                  \
                             std::mt19937_64&);                               \
  template Tensor<T> mean(const Tensor<T>&, int);                             \
  template Tensor<T> sum(const Tensor<T>&);                                   \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);              \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const int>);       \
  template Tensor<T> narrow(const Tensor<T>&, int, std::size_t, std::size_t); \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                        \
  template Tensor<T> expand_leading(const Tensor<T>&, std::size_t);

REFEREE_INSTANTIATE_OPS(float)
REFEREE_INSTANTIATE_OPS(double)

#undef REFEREE_INSTANTIATE_OPS

}  // namespace referee::numcore
