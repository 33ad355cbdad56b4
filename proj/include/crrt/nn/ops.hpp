#pragma once

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "crrt/nn/graph.hpp"

namespace crrt::nn {

namespace detail {

template <class T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                        shape_string(b.shape()));
  }
}

template <class T>
void require_graph(const char* op, Var<T> a, Var<T> b) {
  if (a.graph != b.graph) throw ContractError(std::string(op) + ": operands on different graphs");
}

template <class T>
void accumulate(Graph<T>& g, int id, const Tensor<T>& delta) {
  if (g.wants(id)) g.grad(id).mat() += delta.mat();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_graph("add", a, b);
  detail::require_same_shape("add", a.value(), b.value());
  Tensor<T> out = a.value();
  out.mat() += b.value().mat();
  return a.graph->record("add", std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Graph<T>& g, int self) {
    detail::accumulate(g, ia, g.grad(self));
    detail::accumulate(g, ib, g.grad(self));
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require_graph("sub", a, b);
  detail::require_same_shape("sub", a.value(), b.value());
  Tensor<T> out = a.value();
  out.mat() -= b.value().mat();
  return a.graph->record("sub", std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Graph<T>& g, int self) {
    detail::accumulate(g, ia, g.grad(self));
    if (g.wants(ib)) g.grad(ib).mat() -= g.grad(self).mat();
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_graph("mul", a, b);
  detail::require_same_shape("mul", a.value(), b.value());
  Tensor<T> out = a.value();
  out.mat().array() *= b.value().mat().array();
  return a.graph->record("mul", std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Graph<T>& g, int self) {
    if (g.wants(ia)) g.grad(ia).mat().array() += g.grad(self).mat().array() * g.value(ib).mat().array();
    if (g.wants(ib)) g.grad(ib).mat().array() += g.grad(self).mat().array() * g.value(ia).mat().array();
  });
}

template <class T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out = a.value();
  out.mat() *= factor;
  return a.graph->record("scale", std::move(out), {a.id}, [ia = a.id, factor](Graph<T>& g, int self) {
    if (g.wants(ia)) g.grad(ia).mat() += factor * g.grad(self).mat();
  });
}

template <class T>
Var<T> tanh(Var<T> a) {
  Tensor<T> out = a.value();
  out.mat() = out.mat().array().tanh().matrix();
  return a.graph->record("tanh", std::move(out), {a.id}, [ia = a.id](Graph<T>& g, int self) {
    const auto y = g.value(self).mat().array();
    g.grad(ia).mat().array() += g.grad(self).mat().array() * (T(1) - y * y);
  });
}

template <class T>
Var<T> sigmoid(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = T(1) / (T(1) + std::exp(-v));
  return a.graph->record("sigmoid", std::move(out), {a.id}, [ia = a.id](Graph<T>& g, int self) {
    const auto y = g.value(self).mat().array();
    g.grad(ia).mat().array() += g.grad(self).mat().array() * y * (T(1) - y);
  });
}

template <class T>
Var<T> relu(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = v > T(0) ? v : T(0);
  return a.graph->record("relu", std::move(out), {a.id}, [ia = a.id](Graph<T>& g, int self) {
    auto gi = g.grad(ia).values();
    auto gs = g.grad(self).values();
    auto x = g.value(ia).values();
    for (std::size_t i = 0; i < gi.size(); ++i)
      if (x[i] > T(0)) gi[i] += gs[i];
  });
}

/// GELU, tanh approximation (GPT-2 variant).
template <class T>
Var<T> gelu(Var<T> a) {
  constexpr T kAlpha = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kBeta = T(0.044715);
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = T(0.5) * v * (T(1) + std::tanh(kAlpha * (v + kBeta * v * v * v)));
  return a.graph->record("gelu", std::move(out), {a.id}, [ia = a.id](Graph<T>& g, int self) {
    auto gi = g.grad(ia).values();
    auto gs = g.grad(self).values();
    auto x = g.value(ia).values();
    for (std::size_t i = 0; i < gi.size(); ++i) {
      const T u = kAlpha * (x[i] + kBeta * x[i] * x[i] * x[i]);
      const T t = std::tanh(u);
      const T du = kAlpha * (T(1) + T(3) * kBeta * x[i] * x[i]);
      gi[i] += gs[i] * (T(0.5) * (T(1) + t) + T(0.5) * x[i] * (T(1) - t * t) * du);
    }
  });
}

/// Inverted dropout. Identity when `p == 0`.
template <class T, class Rng>
Var<T> dropout(Var<T> a, T p, Rng& rng) {
  if (p <= T(0)) return a;
  if (p >= T(1)) throw ContractError("dropout: rate must be < 1");
  std::bernoulli_distribution keep(1.0 - static_cast<double>(p));
  Tensor<T> mask(a.shape());
  const T s = T(1) / (T(1) - p);
  for (auto& m : mask.values()) m = keep(rng) ? s : T(0);
  Tensor<T> out = a.value();
  out.mat().array() *= mask.mat().array();
  return a.graph->record("dropout", std::move(out), {a.id}, [ia = a.id, mask = std::move(mask)](Graph<T>& g, int self) {
    g.grad(ia).mat().array() += g.grad(self).mat().array() * mask.mat().array();
  });
}

// ---------------------------------------------------------------------------
// Linear algebra and shape ops

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::require_graph("matmul", a, b);
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.cols() != B.rows()) {
    throw ContractError("matmul: inner dimensions differ " + shape_string(A.shape()) + " x " + shape_string(B.shape()));
  }
  auto out = Tensor<T>::matrix(A.rows(), B.cols());
  out.mat().noalias() = A.mat() * B.mat();
  return a.graph->record("matmul", std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Graph<T>& g, int self) {
    const auto G = g.grad(self).mat();
    if (g.wants(ia)) g.grad(ia).mat().noalias() += G * g.value(ib).mat().transpose();
    if (g.wants(ib)) g.grad(ib).mat().noalias() += g.value(ia).mat().transpose() * G;
  });
}

/// x (n x m) + bias (m) broadcast over rows.
template <class T>
Var<T> add_rowvec(Var<T> x, Var<T> bias) {
  detail::require_graph("add_rowvec", x, bias);
  const auto& X = x.value();
  const auto& B = bias.value();
  if (B.size() != X.cols()) throw ContractError("add_rowvec: bias length differs from column count");
  Tensor<T> out = X;
  auto bm = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(B.data(), B.size());
  out.mat().rowwise() += bm;
  return x.graph->record("add_rowvec", std::move(out), {x.id, bias.id}, [ix = x.id, ib = bias.id](Graph<T>& g, int self) {
    detail::accumulate(g, ix, g.grad(self));
    if (g.wants(ib)) {
      auto& gb = g.grad(ib);
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(gb.data(), gb.size()) += g.grad(self).mat().colwise().sum();
    }
  });
}

/// Adds `tile` (r x m) to every block of r consecutive rows of x (n x m), n % r == 0.
template <class T>
Var<T> add_tiled(Var<T> x, Var<T> tile) {
  detail::require_graph("add_tiled", x, tile);
  const auto& X = x.value();
  const auto& P = tile.value();
  const std::size_t r = P.rows();
  if (P.cols() != X.cols() || r == 0 || X.rows() % r != 0) {
    throw ContractError("add_tiled: cannot tile " + shape_string(P.shape()) + " over " + shape_string(X.shape()));
  }
  Tensor<T> out = X;
  for (std::size_t blk = 0; blk < X.rows() / r; ++blk) out.mat().middleRows(blk * r, r) += P.mat();
  return x.graph->record("add_tiled", std::move(out), {x.id, tile.id}, [ix = x.id, ip = tile.id, r](Graph<T>& g, int self) {
    const auto& G = g.grad(self);
    detail::accumulate(g, ix, G);
    if (g.wants(ip)) {
      auto gp = g.grad(ip).mat();
      for (std::size_t blk = 0; blk < G.rows() / r; ++blk) gp += G.mat().middleRows(blk * r, r);
    }
  });
}

/// Gathers rows `index` of a (n x m); repeated indices are allowed.
template <class T>
Var<T> select_rows(Var<T> a, std::vector<int> index) {
  const auto& A = a.value();
  auto out = Tensor<T>::matrix(index.size(), A.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || static_cast<std::size_t>(index[k]) >= A.rows()) throw IndexError("select_rows: row out of range");
    out.mat().row(k) = A.mat().row(index[k]);
  }
  return a.graph->record("select_rows", std::move(out), {a.id}, [ia = a.id, index = std::move(index)](Graph<T>& g, int self) {
    auto gi = g.grad(ia).mat();
    const auto G = g.grad(self).mat();
    for (std::size_t k = 0; k < index.size(); ++k) gi.row(index[k]) += G.row(k);
  });
}

/// Embedding lookup: rows `ids` of `table`. Every id must lie in [0, table.rows()).
template <class T>
Var<T> embedding(Var<T> table, std::span<const int> ids) {
  const auto& E = table.value();
  auto out = Tensor<T>::matrix(ids.size(), E.cols());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] < 0 || static_cast<std::size_t>(ids[k]) >= E.rows()) {
      throw IndexError("embedding: id " + std::to_string(ids[k]) + " outside [0, " + std::to_string(E.rows() - 1) + "]");
    }
    out.mat().row(k) = E.mat().row(ids[k]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return table.graph->record("embedding", std::move(out), {table.id}, [it = table.id, idx = std::move(idx)](Graph<T>& g, int self) {
    auto gt = g.grad(it).mat();
    const auto G = g.grad(self).mat();
    for (std::size_t k = 0; k < idx.size(); ++k) gt.row(idx[k]) += G.row(k);
  });
}

template <class T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  detail::require_graph("concat_cols", a, b);
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.rows() != B.rows()) throw ContractError("concat_cols: row counts differ");
  const std::size_t ca = A.cols();
  auto out = Tensor<T>::matrix(A.rows(), ca + B.cols());
  out.mat().leftCols(ca) = A.mat();
  out.mat().rightCols(B.cols()) = B.mat();
  return a.graph->record("concat_cols", std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id, ca](Graph<T>& g, int self) {
    const auto G = g.grad(self).mat();
    if (g.wants(ia)) g.grad(ia).mat() += G.leftCols(ca);
    if (g.wants(ib)) g.grad(ib).mat() += G.rightCols(G.cols() - ca);
  });
}

/// Columns [begin, end) of a.
template <class T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t end) {
  const auto& A = a.value();
  if (begin >= end || end > A.cols()) throw ContractError("slice_cols: bad column range");
  auto out = Tensor<T>::matrix(A.rows(), end - begin);
  out.mat() = A.mat().middleCols(begin, end - begin);
  return a.graph->record("slice_cols", std::move(out), {a.id}, [ia = a.id, begin](Graph<T>& g, int self) {
    const auto G = g.grad(self).mat();
    g.grad(ia).mat().middleCols(begin, G.cols()) += G;
  });
}

/// Picks a[rows[k], cols[k]] into an (n x 1) column.
template <class T>
Var<T> gather_elements(Var<T> a, std::vector<int> rows, std::vector<int> cols) {
  const auto& A = a.value();
  if (rows.size() != cols.size()) throw ContractError("gather_elements: index lists differ in length");
  auto out = Tensor<T>::matrix(rows.size(), 1);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || cols[k] < 0 || static_cast<std::size_t>(rows[k]) >= A.rows() ||
        static_cast<std::size_t>(cols[k]) >= A.cols())
      throw IndexError("gather_elements: index out of range");
    out[k] = A.at(rows[k], cols[k]);
  }
  return a.graph->record("gather_elements", std::move(out), {a.id},
                         [ia = a.id, rows = std::move(rows), cols = std::move(cols)](Graph<T>& g, int self) {
                           auto& gi = g.grad(ia);
                           const auto& G = g.grad(self);
                           for (std::size_t k = 0; k < rows.size(); ++k) gi.at(rows[k], cols[k]) += G[k];
                         });
}

// ---------------------------------------------------------------------------
// Normalisation and attention

/// Per-row layer normalisation with affine gain and bias of length cols.
template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5)) {
  using Row = Eigen::Map<const Eigen::Array<T, 1, Eigen::Dynamic>>;
  using Col = Eigen::Array<T, Eigen::Dynamic, 1>;
  const auto& X = x.value();
  const std::size_t n = X.rows(), m = X.cols();
  if (gain.value().size() != m || bias.value().size() != m) throw ContractError("layer_norm: affine size mismatch");
  const Row G(gain.value().data(), m), B(bias.value().data(), m);
  Tensor<T> xhat({n, m});
  auto xa = X.mat().array();
  const Col mean = xa.rowwise().mean();
  xhat.mat().array() = xa.colwise() - mean;
  Col rstd = (xhat.mat().array().square().rowwise().mean() + eps).rsqrt();
  xhat.mat().array().colwise() *= rstd;
  auto out = Tensor<T>::matrix(n, m);
  out.mat().array() = (xhat.mat().array().rowwise() * G).rowwise() + B;
  return x.graph->record(
      "layer_norm", std::move(out), {x.id, gain.id, bias.id},
      [ix = x.id, ig = gain.id, ib = bias.id, xhat = std::move(xhat), rstd = std::move(rstd)](Graph<T>& g, int self) {
        using RowMut = Eigen::Map<Eigen::Array<T, 1, Eigen::Dynamic>>;
        const auto D = g.grad(self).mat().array();
        const auto Xh = xhat.mat().array();
        const std::size_t m = xhat.cols();
        if (g.wants(ig)) {
          auto& gg = g.grad(ig);
          RowMut(gg.data(), m) += (D * Xh).colwise().sum();
        }
        if (g.wants(ib)) {
          auto& gb = g.grad(ib);
          RowMut(gb.data(), m) += D.colwise().sum();
        }
        if (g.wants(ix)) {
          const Row G(g.value(ig).data(), m);
          const Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dxhat = D.rowwise() * G;
          const Col mean_d = dxhat.rowwise().mean();
          const Col mean_dx = (dxhat * Xh).rowwise().mean();
          g.grad(ix).mat().array() += ((dxhat.colwise() - mean_d) - Xh.colwise() * mean_dx).colwise() * rstd;
        }
      });
}

/// Multi-head causal self-attention core.
///
/// `qkv` holds [Q | K | V] for `batch` sequences of `seq` positions each
/// ((batch*seq) x 3d, sequence-major). Position i attends to positions j <= i.
/// With `last_only` only the final position of each sequence is computed and
/// the result is (batch x d); otherwise (batch*seq x d).
template <class T>
Var<T> causal_attention(Var<T> qkv, std::size_t batch, std::size_t seq, std::size_t heads, bool last_only = false) {
  const auto& X = qkv.value();
  if (X.rows() != batch * seq || X.cols() % 3 != 0) throw ContractError("causal_attention: qkv shape mismatch");
  const std::size_t d = X.cols() / 3;
  if (heads == 0 || d % heads != 0) throw ContractError("causal_attention: width not divisible by heads");
  const std::size_t dh = d / heads;
  const T inv_sqrt = T(1) / std::sqrt(T(dh));
  const std::size_t first_q = last_only ? seq - 1 : 0;
  const std::size_t nq = seq - first_q;
  // probs[((b*heads + h)*nq + qi)*seq + j]
  std::vector<T> probs(batch * heads * nq * seq, T(0));
  auto out = Tensor<T>::matrix(batch * nq, d);
  std::vector<T> scores(seq);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t qi = 0; qi < nq; ++qi) {
        const std::size_t i = first_q + qi;
        const T* q = X.data() + (b * seq + i) * 3 * d + h * dh;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j <= i; ++j) {
          const T* k = X.data() + (b * seq + j) * 3 * d + d + h * dh;
          T s = 0;
          for (std::size_t c = 0; c < dh; ++c) s += q[c] * k[c];
          scores[j] = s * inv_sqrt;
          mx = std::max(mx, scores[j]);
        }
        T z = 0;
        for (std::size_t j = 0; j <= i; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          z += scores[j];
        }
        T* p = probs.data() + ((b * heads + h) * nq + qi) * seq;
        T* o = out.data() + (b * nq + qi) * d + h * dh;
        for (std::size_t j = 0; j <= i; ++j) {
          p[j] = scores[j] / z;
          const T* v = X.data() + (b * seq + j) * 3 * d + 2 * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) o[c] += p[j] * v[c];
        }
      }
    }
  }
  return qkv.graph->record(
      "causal_attention", std::move(out), {qkv.id},
      [ix = qkv.id, batch, seq, heads, d, dh, inv_sqrt, first_q, nq, probs = std::move(probs)](Graph<T>& g, int self) {
        const auto& X = g.value(ix);
        const auto& G = g.grad(self);
        auto& GX = g.grad(ix);
        std::vector<T> dp(seq);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t qi = 0; qi < nq; ++qi) {
              const std::size_t i = first_q + qi;
              const T* p = probs.data() + ((b * heads + h) * nq + qi) * seq;
              const T* go = G.data() + (b * nq + qi) * d + h * dh;
              T dot = 0;
              for (std::size_t j = 0; j <= i; ++j) {
                const T* v = X.data() + (b * seq + j) * 3 * d + 2 * d + h * dh;
                T* gv = GX.data() + (b * seq + j) * 3 * d + 2 * d + h * dh;
                T s = 0;
                for (std::size_t c = 0; c < dh; ++c) {
                  s += go[c] * v[c];
                  gv[c] += p[j] * go[c];
                }
                dp[j] = s;
                dot += p[j] * s;
              }
              const T* q = X.data() + (b * seq + i) * 3 * d + h * dh;
              T* gq = GX.data() + (b * seq + i) * 3 * d + h * dh;
              for (std::size_t j = 0; j <= i; ++j) {
                const T ds = p[j] * (dp[j] - dot) * inv_sqrt;
                const T* k = X.data() + (b * seq + j) * 3 * d + d + h * dh;
                T* gk = GX.data() + (b * seq + j) * 3 * d + d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) {
                  gq[c] += ds * k[c];
                  gk[c] += ds * q[c];
                }
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions and losses

template <class T>
Var<T> sum(Var<T> a) {
  T s = a.value().mat().sum();
  return a.graph->record("sum", Tensor<T>::scalar(s), {a.id}, [ia = a.id](Graph<T>& g, int self) {
    g.grad(ia).mat().array() += g.grad(self)[0];
  });
}

template <class T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), T(1) / T(a.value().size()));
}

/// (1/b) * sum_j w_j * (-log softmax(logits_j)[targets_j]).
///
/// Weights are constants: no gradient flows into them.
template <class T>
Var<T> weighted_cross_entropy(Var<T> logits, std::vector<int> targets, std::vector<T> weights) {
  const auto& Z = logits.value();
  const std::size_t b = Z.rows(), n = Z.cols();
  if (targets.size() != b || weights.size() != b) throw ContractError("weighted_cross_entropy: batch size mismatch");
  auto probs = Tensor<T>::matrix(b, n);
  T loss = 0;
  for (std::size_t r = 0; r < b; ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= n) {
      throw IndexError("cross_entropy: target " + std::to_string(targets[r]) + " outside [0, " + std::to_string(n) + ")");
    }
    auto z = Z.row(r);
    const T mx = *std::max_element(z.begin(), z.end());
    T s = 0;
    for (std::size_t c = 0; c < n; ++c) s += (probs.at(r, c) = std::exp(z[c] - mx));
    for (std::size_t c = 0; c < n; ++c) probs.at(r, c) /= s;
    loss += weights[r] * (std::log(s) + mx - z[targets[r]]);
  }
  loss /= T(b);
  return logits.graph->record(
      "cross_entropy", Tensor<T>::scalar(loss), {logits.id},
      [il = logits.id, targets = std::move(targets), weights = std::move(weights), probs = std::move(probs)](Graph<T>& g,
                                                                                                            int self) {
        const T up = g.grad(self)[0] / T(probs.rows());
        auto& gz = g.grad(il);
        for (std::size_t r = 0; r < probs.rows(); ++r) {
          const T w = up * weights[r];
          if (w == T(0)) continue;
          for (std::size_t c = 0; c < probs.cols(); ++c) gz.at(r, c) += w * probs.at(r, c);
          gz.at(r, targets[r]) -= w;
        }
      });
}

template <class T>
Var<T> cross_entropy(Var<T> logits, std::vector<int> targets) {
  std::vector<T> ones(targets.size(), T(1));
  return weighted_cross_entropy(logits, std::move(targets), std::move(ones));
}

/// (1/b) * sum_j (pred_j - target_j)^2 for pred of shape (b x 1); targets are constants.
template <class T>
Var<T> mse(Var<T> pred, std::vector<T> targets) {
  const auto& P = pred.value();
  if (P.size() != targets.size()) throw ContractError("mse: size mismatch");
  T loss = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) loss += (P[i] - targets[i]) * (P[i] - targets[i]);
  loss /= T(targets.size());
  return pred.graph->record("mse", Tensor<T>::scalar(loss), {pred.id},
                            [ip = pred.id, targets = std::move(targets)](Graph<T>& g, int self) {
                              const T up = g.grad(self)[0] * T(2) / T(targets.size());
                              auto& gp = g.grad(ip);
                              const auto& P = g.value(ip);
                              for (std::size_t i = 0; i < targets.size(); ++i) gp[i] += up * (P[i] - targets[i]);
                            });
}

/// Fused LSTM over `batch` sequences of length `seq`. Rows of x are
/// sequence-major (row b*seq + t). Gate columns: input, forget, cell, output.
/// Returns every hidden state (batch*seq x h, same row order) when
/// `all_steps`, else the final hidden state (batch x h).
template <class T>
Var<T> lstm(Var<T> x, Var<T> w_input, Var<T> w_hidden, Var<T> bias, std::size_t batch, std::size_t seq, bool all_steps) {
  using M = typename Tensor<T>::Matrix;
  const auto& X = x.value();
  const std::size_t h = w_hidden.value().rows();
  if (X.rows() != batch * seq || w_input.value().rows() != X.cols() || w_input.value().cols() != 4 * h ||
      w_hidden.value().cols() != 4 * h || bias.value().size() != 4 * h)
    throw ContractError("lstm: shape mismatch");
  const auto B = static_cast<Eigen::Index>(batch);
  const auto H = static_cast<Eigen::Index>(h);

  struct Tape {
    M xp;                       // (batch*seq x 4h) input projection + bias
    std::vector<M> gates;       // per step, activated (batch x 4h)
    std::vector<M> c, tc, hs;   // per step + initial zero state: c, tanh(c), h
  };
  auto tape = std::make_shared<Tape>();
  tape->xp = X.mat() * w_input.value().mat();
  tape->xp.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.value().data(), 4 * H);
  for (auto* v : {&tape->c, &tape->tc, &tape->hs}) {
    v->resize(seq + 1);
    (*v)[0] = M::Zero(B, H);
  }
  tape->gates.resize(seq);
  const auto Wh = w_hidden.value().mat();
  for (std::size_t t = 0; t < seq; ++t) {
    M& G = tape->gates[t];
    G.resize(B, 4 * H);
    for (Eigen::Index b = 0; b < B; ++b) G.row(b) = tape->xp.row(b * static_cast<Eigen::Index>(seq) + static_cast<Eigen::Index>(t));
    if (t > 0) G.noalias() += tape->hs[t] * Wh;
    G.leftCols(2 * H) = G.leftCols(2 * H).array().logistic();
    G.middleCols(2 * H, H) = G.middleCols(2 * H, H).array().tanh();
    G.rightCols(H) = G.rightCols(H).array().logistic();
    tape->c[t + 1] = G.middleCols(H, H).cwiseProduct(tape->c[t]) + G.leftCols(H).cwiseProduct(G.middleCols(2 * H, H));
    tape->tc[t + 1] = tape->c[t + 1].array().tanh();
    tape->hs[t + 1] = G.rightCols(H).cwiseProduct(tape->tc[t + 1]);
  }
  Tensor<T> out = all_steps ? Tensor<T>::matrix(batch * seq, h) : Tensor<T>::matrix(batch, h);
  if (all_steps) {
    for (std::size_t t = 0; t < seq; ++t)
      for (Eigen::Index b = 0; b < B; ++b) out.mat().row(b * static_cast<Eigen::Index>(seq) + static_cast<Eigen::Index>(t)) = tape->hs[t + 1].row(b);
  } else {
    out.mat() = tape->hs[seq];
  }
  return x.graph->record(
      "lstm", std::move(out), {x.id, w_input.id, w_hidden.id, bias.id},
      [tape, ix = x.id, iwx = w_input.id, iwh = w_hidden.id, ib = bias.id, seq, all_steps, B, H](Graph<T>& g, int self) {
        const auto dOut = g.grad(self).mat();
        const auto Wh = g.value(iwh).mat();
        const auto S = static_cast<Eigen::Index>(seq);
        M dxp(B * S, 4 * H);
        M dh_next = M::Zero(B, H), dc_next = M::Zero(B, H), dG(B, 4 * H);
        M dWh = M::Zero(H, 4 * H);
        for (std::size_t t = seq; t-- > 0;) {
          M dh = dh_next;
          if (all_steps) {
            for (Eigen::Index b = 0; b < B; ++b) dh.row(b) += dOut.row(b * S + static_cast<Eigen::Index>(t));
          } else if (t + 1 == seq) {
            dh += dOut;
          }
          const M& G = tape->gates[t];
          const auto i = G.leftCols(H).array(), f = G.middleCols(H, H).array();
          const auto gg = G.middleCols(2 * H, H).array(), o = G.rightCols(H).array();
          const auto tc = tape->tc[t + 1].array();
          const M dc = (dh.array() * o * (T(1) - tc.square()) + dc_next.array()).matrix();
          dG.leftCols(H) = (dc.array() * gg * i * (T(1) - i)).matrix();
          dG.middleCols(H, H) = (dc.array() * tape->c[t].array() * f * (T(1) - f)).matrix();
          dG.middleCols(2 * H, H) = (dc.array() * i * (T(1) - gg.square())).matrix();
          dG.rightCols(H) = (dh.array() * tc * o * (T(1) - o)).matrix();
          dc_next = (dc.array() * f).matrix();
          if (t > 0) {
            dWh.noalias() += tape->hs[t].transpose() * dG;
            dh_next.noalias() = dG * Wh.transpose();
          }
          for (Eigen::Index b = 0; b < B; ++b) dxp.row(b * S + static_cast<Eigen::Index>(t)) = dG.row(b);
        }
        if (g.wants(iwh)) g.grad(iwh).mat() += dWh;
        if (g.wants(iwx)) g.grad(iwx).mat().noalias() += g.value(ix).mat().transpose() * dxp;
        if (g.wants(ib)) {
          auto& gb = g.grad(ib);
          Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(gb.data(), gb.size()) += dxp.colwise().sum();
        }
        if (g.wants(ix)) g.grad(ix).mat().noalias() += dxp * g.value(iwx).mat().transpose();
      });
}

// ---------------------------------------------------------------------------
// Graph-free helpers

/// Max-subtracted softmax of one logit vector.
template <class T>
std::vector<T> softmax(std::span<const T> logits) {
  if (logits.empty()) throw ContractError("softmax: empty input");
  const T mx = *std::max_element(logits.begin(), logits.end());
  std::vector<T> p(logits.size());
  T s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] = std::exp(logits[i] - mx));
  for (auto& v : p) v /= s;
  return p;
}

/// -log softmax(logits)[target], via log-sum-exp.
template <class T>
T cross_entropy(std::span<const T> logits, std::size_t target) {
  if (target >= logits.size()) {
    throw IndexError("cross_entropy: target " + std::to_string(target) + " outside [0, " + std::to_string(logits.size()) + ")");
  }
  const T mx = *std::max_element(logits.begin(), logits.end());
  T s = 0;
  for (T z : logits) s += std::exp(z - mx);
  return std::log(s) + mx - logits[target];
}

}  // namespace crrt::nn
