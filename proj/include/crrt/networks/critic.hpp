#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crrt/data/types.hpp"
#include "crrt/nn/checkpoint.hpp"
#include "crrt/nn/layers.hpp"

namespace crrt::networks {

using nn::Graph;
using nn::Tensor;
using nn::Var;

struct CriticConfig {
  std::size_t num_items = 0;
  std::size_t window = 30;
  std::size_t embed_dim = 64;  // must match the policy embedding width
  std::size_t hidden = 256;
  std::size_t lstm_layers = 2;
  std::size_t head_layers = 1;
  std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const CriticConfig& c) {
  j = {{"num_items", c.num_items}, {"window", c.window},           {"embed_dim", c.embed_dim},
       {"hidden", c.hidden},       {"lstm_layers", c.lstm_layers}, {"head_layers", c.head_layers},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, CriticConfig& c) {
  c.num_items = j.at("num_items");
  c.window = j.at("window");
  c.embed_dim = j.at("embed_dim");
  c.hidden = j.at("hidden");
  c.lstm_layers = j.at("lstm_layers");
  c.head_layers = j.at("head_layers");
  c.seed = j.at("seed");
}

/// Q(s, a): frozen item embeddings -> stacked LSTM over the window -> head on
/// [final hidden state | embedding of a].
template <class T>
class ValueNetwork {
 public:
  ValueNetwork() = default;

  /// `embedding` ((I+1) x d) is copied and marked non-trainable.
  ValueNetwork(CriticConfig cfg, const Tensor<T>& embedding) : cfg_(cfg) {
    if (cfg_.num_items == 0 || cfg_.window == 0 || cfg_.hidden == 0 || cfg_.lstm_layers == 0 || cfg_.head_layers == 0)
      throw ContractError("critic: sizes must be >= 1");
    if (embedding.rank() != 2 || embedding.dim(0) != cfg_.num_items + 1 || embedding.dim(1) != cfg_.embed_dim) {
      throw ContractError("critic: embedding table has shape " + nn::shape_string(embedding.shape()) + ", expected [" +
                          std::to_string(cfg_.num_items + 1) + "," + std::to_string(cfg_.embed_dim) + "]");
    }
    std::mt19937_64 rng(cfg_.seed);
    embedding_ = store_.add("embedding", embedding, /*trainable=*/false);
    std::size_t in = cfg_.embed_dim;
    for (std::size_t l = 0; l < cfg_.lstm_layers; ++l) {
      lstm_.push_back(nn::LstmLayer::create<T>(store_, "lstm" + std::to_string(l), in, cfg_.hidden, rng));
      in = cfg_.hidden;
    }
    std::size_t width = cfg_.hidden + cfg_.embed_dim;
    for (std::size_t h = 0; h + 1 < cfg_.head_layers; ++h) {
      hidden_head_.push_back(nn::DenseLayer::create<T>(store_, "head.hidden" + std::to_string(h), width, cfg_.hidden,
                                                       1.0 / std::sqrt(double(width)), rng));
      width = cfg_.hidden;
    }
    head_ = nn::DenseLayer::create<T>(store_, "head.out", width, 1, 1.0 / std::sqrt(double(width)), rng);
  }

  const CriticConfig& config() const noexcept { return cfg_; }
  nn::ParameterStore<T>& parameters() noexcept { return store_; }
  const nn::ParameterStore<T>& parameters() const noexcept { return store_; }
  const nn::Parameter<T>& embedding() const { return store_[embedding_]; }

  /// Final hidden state of the top LSTM layer, (batch x hidden).
  Var<T> encode(Graph<T>& g, std::span<const int> ids, std::size_t batch) {
    const std::size_t l = cfg_.window;
    if (batch == 0 || ids.size() != batch * l) throw ContractError("critic: id buffer does not hold batch windows");
    for (int id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) > cfg_.num_items) {
        throw IndexError("critic: item id " + std::to_string(id) + " outside [0, " + std::to_string(cfg_.num_items) + "]");
      }
    }
    Var<T> x = nn::embedding(g.param(store_[embedding_]), ids);
    for (std::size_t k = 0; k < lstm_.size(); ++k) x = lstm_[k](g, store_, x, batch, l, k + 1 < lstm_.size());
    return x;
  }

  /// Q for pairs (state row `rows[k]` of `features`, item `actions[k]`), (n x 1).
  Var<T> q_values(Graph<T>& g, Var<T> features, std::vector<int> rows, std::span<const int> actions) {
    for (int a : actions) {
      if (a < 1 || static_cast<std::size_t>(a) > cfg_.num_items) {
        throw IndexError("critic: action " + std::to_string(a) + " outside [1, " + std::to_string(cfg_.num_items) + "]");
      }
    }
    Var<T> h = nn::select_rows(features, std::move(rows));
    Var<T> x = nn::concat_cols(h, nn::embedding(g.param(store_[embedding_]), actions));
    for (const auto& layer : hidden_head_) x = nn::gelu(layer(g, store_, x));
    return head_(g, store_, x);
  }

  /// Q(s_k, a_k) for a batch of states and one action each.
  Var<T> q(Graph<T>& g, std::span<const int> ids, std::size_t batch, std::span<const int> actions) {
    if (actions.size() != batch) throw ContractError("critic: one action per state expected");
    std::vector<int> rows(batch);
    for (std::size_t k = 0; k < batch; ++k) rows[k] = static_cast<int>(k);
    return q_values(g, encode(g, ids, batch), std::move(rows), actions);
  }

  /// Inference-only scalar Q(s, a).
  T value(const StateSequence& state, int action) {
    Graph<T> g(false);
    int a = action;
    return q(g, state.items(), 1, std::span<const int>(&a, 1)).value()[0];
  }

  nn::Checkpoint to_checkpoint() const {
    nn::Checkpoint ck;
    ck.meta["kind"] = "critic";
    ck.meta["config"] = cfg_;
    for (const auto& p : store_) ck.put(p.name, p.value);
    return ck;
  }

  static ValueNetwork from_checkpoint(const nn::Checkpoint& ck) {
    if (ck.meta.value("kind", "") != "critic") throw DataError("checkpoint does not hold a critic");
    ValueNetwork net(ck.meta.at("config").get<CriticConfig>(), ck.get<T>("embedding"));
    for (auto& p : net.store_) {
      Tensor<T> v = ck.get<T>(p.name);
      if (v.shape() != p.value.shape()) throw DataError("critic checkpoint: shape mismatch for " + p.name);
      p.value = std::move(v);
    }
    return net;
  }

 private:
  CriticConfig cfg_;
  nn::ParameterStore<T> store_;
  std::size_t embedding_ = 0;
  std::vector<nn::LstmLayer> lstm_;
  std::vector<nn::DenseLayer> hidden_head_;
  nn::DenseLayer head_;
};

/// Q as an explicit (states+1) x I table indexed by a length-1 window.
/// Same interface as ValueNetwork; used for exact tabular fixed-point checks.
template <class T>
class TabularCritic {
 public:
  TabularCritic() = default;
  TabularCritic(std::size_t num_states, std::size_t num_items) : num_items_(num_items) {
    table_ = store_.add("q_table", Tensor<T>({num_states + 1, num_items}));
  }

  nn::ParameterStore<T>& parameters() noexcept { return store_; }
  const nn::ParameterStore<T>& parameters() const noexcept { return store_; }
  const Tensor<T>& table() const { return store_[table_].value; }

  Var<T> encode(Graph<T>& g, std::span<const int> ids, std::size_t batch) {
    if (ids.size() != batch) throw ContractError("tabular critic: windows must have length 1");
    return nn::embedding(g.param(store_[table_]), ids);
  }

  Var<T> q_values(Graph<T>& g, Var<T> features, std::vector<int> rows, std::span<const int> actions) {
    std::vector<int> cols(actions.size());
    for (std::size_t k = 0; k < actions.size(); ++k) {
      if (actions[k] < 1 || static_cast<std::size_t>(actions[k]) > num_items_) throw IndexError("tabular critic: action out of range");
      cols[k] = actions[k] - 1;
    }
    (void)g;
    return nn::gather_elements(features, std::move(rows), std::move(cols));
  }

 private:
  std::size_t num_items_ = 0;
  nn::ParameterStore<T> store_;
  std::size_t table_ = 0;
};

}  // namespace crrt::networks
