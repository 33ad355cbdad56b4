#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "crrt/nn/ops.hpp"

namespace crrt::nn {

/// Ordered, named collection of parameters owned by one network.
/// Copying a store copies every value (used for target networks).
template <class T>
class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor<T> value, bool trainable = true) {
    for (const auto& p : params_)
      if (p.name == name) throw ContractError("parameter store: duplicate name " + name);
    params_.emplace_back(std::move(name), std::move(value), trainable);
    return params_.size() - 1;
  }

  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const noexcept { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  Parameter<T>* find(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  std::vector<Parameter<T>*> pointers() {
    std::vector<Parameter<T>*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

 private:
  std::vector<Parameter<T>> params_;
};

namespace init {

template <class T, class Rng>
Tensor<T> normal(Shape shape, double stddev, Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

template <class T, class Rng>
Tensor<T> uniform(Shape shape, double bound, Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

}  // namespace init

struct DenseLayer {
  std::size_t weight = 0, bias = 0;

  template <class T, class Rng>
  static DenseLayer create(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                           double stddev, Rng& rng) {
    DenseLayer l;
    l.weight = store.add(name + ".weight", init::normal<T>({in, out}, stddev, rng));
    l.bias = store.add(name + ".bias", Tensor<T>({out}));
    return l;
  }

  template <class T>
  Var<T> operator()(Graph<T>& g, ParameterStore<T>& store, Var<T> x) const {
    return add_rowvec(matmul(x, g.param(store[weight])), g.param(store[bias]));
  }
};

struct LayerNormLayer {
  std::size_t gain = 0, bias = 0;

  template <class T>
  static LayerNormLayer create(ParameterStore<T>& store, const std::string& name, std::size_t width) {
    LayerNormLayer l;
    l.gain = store.add(name + ".gain", Tensor<T>({width}, T(1)));
    l.bias = store.add(name + ".bias", Tensor<T>({width}));
    return l;
  }

  template <class T>
  Var<T> operator()(Graph<T>& g, ParameterStore<T>& store, Var<T> x) const {
    return layer_norm(x, g.param(store[gain]), g.param(store[bias]));
  }
};

/// Pre-norm transformer block: x + attn(ln1(x)), then + ffn(ln2(x)).
struct AttentionBlock {
  LayerNormLayer ln1, ln2;
  DenseLayer qkv, proj, fc, out;
  std::size_t heads = 1;

  template <class T, class Rng>
  static AttentionBlock create(ParameterStore<T>& store, const std::string& name, std::size_t width, std::size_t heads,
                               std::size_t ffn_width, std::size_t depth, Rng& rng) {
    if (heads == 0 || width % heads != 0) throw ContractError("attention block: width not divisible by heads");
    AttentionBlock b;
    b.heads = heads;
    const double residual_std = 0.02 / std::sqrt(2.0 * static_cast<double>(std::max<std::size_t>(depth, 1)));
    b.ln1 = LayerNormLayer::create<T>(store, name + ".ln1", width);
    b.qkv = DenseLayer::create<T>(store, name + ".qkv", width, 3 * width, 0.02, rng);
    b.proj = DenseLayer::create<T>(store, name + ".proj", width, width, residual_std, rng);
    b.ln2 = LayerNormLayer::create<T>(store, name + ".ln2", width);
    b.fc = DenseLayer::create<T>(store, name + ".fc", width, ffn_width, 0.02, rng);
    b.out = DenseLayer::create<T>(store, name + ".out", ffn_width, width, residual_std, rng);
    return b;
  }

  /// `x` is (batch*seq x width). With `last_only` the result holds only the
  /// final position of each sequence, (batch x width).
  template <class T, class Rng>
  Var<T> operator()(Graph<T>& g, ParameterStore<T>& store, Var<T> x, std::size_t batch, std::size_t seq,
                    bool last_only, T dropout_rate, Rng* rng) const {
    Var<T> attn = causal_attention(qkv(g, store, ln1(g, store, x)), batch, seq, heads, last_only);
    Var<T> residual = x;
    if (last_only) {
      std::vector<int> last(batch);
      for (std::size_t b = 0; b < batch; ++b) last[b] = static_cast<int>(b * seq + seq - 1);
      residual = select_rows(x, std::move(last));
    }
    Var<T> h = proj(g, store, attn);
    if (rng) h = dropout(h, dropout_rate, *rng);
    Var<T> y = add(residual, h);
    Var<T> f = out(g, store, gelu(fc(g, store, ln2(g, store, y))));
    if (rng) f = dropout(f, dropout_rate, *rng);
    return add(y, f);
  }
};

/// One LSTM layer over (batch*seq x in) inputs, sequence-major rows.
/// Gate column order in the fused weights: input, forget, cell, output.
struct LstmLayer {
  std::size_t w_input = 0, w_hidden = 0, bias = 0;
  std::size_t hidden = 0;

  template <class T, class Rng>
  static LstmLayer create(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t hidden,
                          Rng& rng) {
    LstmLayer l;
    l.hidden = hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    l.w_input = store.add(name + ".w_input", init::uniform<T>({in, 4 * hidden}, bound, rng));
    l.w_hidden = store.add(name + ".w_hidden", init::uniform<T>({hidden, 4 * hidden}, bound, rng));
    Tensor<T> b({4 * hidden});
    for (std::size_t c = hidden; c < 2 * hidden; ++c) b[c] = T(1);  // forget gate
    l.bias = store.add(name + ".bias", std::move(b));
    return l;
  }

  /// Returns the hidden state at every step ((batch*seq x hidden), sequence-major)
  /// when `all_steps`, else only the final hidden state (batch x hidden).
  template <class T>
  Var<T> operator()(Graph<T>& g, ParameterStore<T>& store, Var<T> x, std::size_t batch, std::size_t seq,
                    bool all_steps) const {
    return lstm(x, g.param(store[w_input]), g.param(store[w_hidden]), g.param(store[bias]), batch, seq, all_steps);
  }
};

}  // namespace crrt::nn
