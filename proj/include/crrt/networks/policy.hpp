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

struct PolicyConfig {
  std::size_t num_items = 0;  // I; logits cover items 1..I
  std::size_t window = 30;    // l
  std::size_t embed_dim = 64;
  std::size_t blocks = 2;
  std::size_t heads = 4;
  std::size_t ffn_mult = 4;
  std::size_t head_layers = 1;  // 1 = single affine map d -> I
  double dropout = 0.0;
  double head_init_std = 0.02;
  std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const PolicyConfig& c) {
  j = {{"num_items", c.num_items}, {"window", c.window},       {"embed_dim", c.embed_dim},
       {"blocks", c.blocks},       {"heads", c.heads},         {"ffn_mult", c.ffn_mult},
       {"head_layers", c.head_layers}, {"dropout", c.dropout}, {"head_init_std", c.head_init_std},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, PolicyConfig& c) {
  c.num_items = j.at("num_items");
  c.window = j.at("window");
  c.embed_dim = j.at("embed_dim");
  c.blocks = j.at("blocks");
  c.heads = j.at("heads");
  c.ffn_mult = j.at("ffn_mult");
  c.head_layers = j.at("head_layers");
  c.dropout = j.at("dropout");
  c.head_init_std = j.value("head_init_std", 0.02);
  c.seed = j.at("seed");
}

/// Causal self-attention policy over item windows.
///
/// Item embeddings ((I+1) x d, row 0 = PAD) plus learned positions feed a stack
/// of pre-norm attention blocks; the final position's features go through the
/// head to produce logits z in R^I, where column c scores item c+1. PAD is an
/// ordinary token inside the window and is never a candidate output.
template <class T>
class PolicyNetwork {
 public:
  PolicyNetwork() = default;

  explicit PolicyNetwork(PolicyConfig cfg) : cfg_(cfg) {
    if (cfg_.num_items == 0) throw ContractError("policy: num_items must be >= 1");
    if (cfg_.window == 0) throw ContractError("policy: window must be >= 1");
    if (cfg_.blocks == 0) throw ContractError("policy: needs at least one attention block");
    if (cfg_.head_layers == 0) throw ContractError("policy: head_layers must be >= 1");
    std::mt19937_64 rng(cfg_.seed);
    const std::size_t d = cfg_.embed_dim;
    embedding_ = store_.add("embedding", nn::init::normal<T>({cfg_.num_items + 1, d}, 0.02, rng));
    position_ = store_.add("position", nn::init::normal<T>({cfg_.window, d}, 0.01, rng));
    for (std::size_t b = 0; b < cfg_.blocks; ++b) {
      blocks_.push_back(nn::AttentionBlock::create<T>(store_, "block" + std::to_string(b), d, cfg_.heads,
                                                      cfg_.ffn_mult * d, cfg_.blocks, rng));
    }
    final_norm_ = nn::LayerNormLayer::create<T>(store_, "final_norm", d);
    for (std::size_t h = 0; h + 1 < cfg_.head_layers; ++h) {
      hidden_head_.push_back(nn::DenseLayer::create<T>(store_, "head.hidden" + std::to_string(h), d, d, 0.02, rng));
    }
    head_ = nn::DenseLayer::create<T>(store_, "head.out", d, cfg_.num_items, cfg_.head_init_std, rng);
  }

  const PolicyConfig& config() const noexcept { return cfg_; }

  /// Rate used whenever a dropout rng is passed to `logits`.
  void set_dropout(double rate) {
    if (!(rate >= 0 && rate < 1)) throw ConfigError("dropout", "rate must lie in [0, 1)");
    cfg_.dropout = rate;
  }

  std::size_t num_items() const noexcept { return cfg_.num_items; }
  std::size_t window() const noexcept { return cfg_.window; }
  nn::ParameterStore<T>& parameters() noexcept { return store_; }
  const nn::ParameterStore<T>& parameters() const noexcept { return store_; }
  nn::Parameter<T>& embedding() { return store_[embedding_]; }
  const nn::Parameter<T>& embedding() const { return store_[embedding_]; }

  /// Logits (batch x I) for `batch` windows packed row-major in `ids`.
  /// Dropout is active only when `dropout_rng` is given.
  Var<T> logits(Graph<T>& g, std::span<const int> ids, std::size_t batch,
                std::mt19937_64* dropout_rng = nullptr) {
    Var<T> x = encode(g, ids, batch, /*last_only=*/true, dropout_rng);
    for (const auto& layer : hidden_head_) x = nn::gelu(layer(g, store_, x));
    return head_(g, store_, x);
  }

  /// Final-norm features at every position ((batch*l) x d), no dropout.
  Var<T> features(Graph<T>& g, std::span<const int> ids, std::size_t batch) {
    return encode(g, ids, batch, /*last_only=*/false, nullptr);
  }

  /// Inference-only logits.
  Tensor<T> forward(std::span<const int> ids, std::size_t batch) {
    Graph<T> g(false);
    return logits(g, ids, batch).value();
  }

  Tensor<T> forward(std::span<const StateSequence> states) {
    auto ids = flatten_states(states);
    return forward(ids, states.size());
  }

  /// p(s): softmax over the I real items, index c <-> item c+1.
  std::vector<T> distribution(const StateSequence& state) {
    Tensor<T> z = forward(state.items(), 1);
    return nn::softmax<T>(z.values());
  }

  /// Draws `m` item ids (1-based) from p(s).
  template <class Rng>
  std::vector<int> sample(const StateSequence& state, std::size_t m, Rng& rng) {
    if (m == 0) throw ContractError("policy_sample: m must be >= 1");
    auto p = distribution(state);
    return sample_items<T>(p, m, rng);
  }

  void save(const std::string& path) const { to_checkpoint().save(path); }

  nn::Checkpoint to_checkpoint() const {
    nn::Checkpoint ck;
    ck.meta["kind"] = "policy";
    ck.meta["config"] = cfg_;
    for (const auto& p : store_) ck.put(p.name, p.value);
    return ck;
  }

  static PolicyNetwork from_checkpoint(const nn::Checkpoint& ck) {
    if (ck.meta.value("kind", "") != "policy") throw DataError("checkpoint does not hold a policy");
    PolicyNetwork net(ck.meta.at("config").get<PolicyConfig>());
    for (auto& p : net.store_) {
      Tensor<T> v = ck.get<T>(p.name);
      if (v.shape() != p.value.shape()) throw DataError("policy checkpoint: shape mismatch for " + p.name);
      p.value = std::move(v);
    }
    return net;
  }

  static PolicyNetwork load(const std::string& path) { return from_checkpoint(nn::Checkpoint::load(path)); }

  /// Draws from a probability vector over items 1..n.
  template <class U, class Rng>
  static std::vector<int> sample_items(std::span<const U> probs, std::size_t m, Rng& rng) {
    std::discrete_distribution<int> dist(probs.begin(), probs.end());
    std::vector<int> out(m);
    for (auto& a : out) a = dist(rng) + 1;
    return out;
  }

 private:
  Var<T> encode(Graph<T>& g, std::span<const int> ids, std::size_t batch, bool last_only, std::mt19937_64* rng) {
    const std::size_t l = cfg_.window;
    if (batch == 0 || ids.size() != batch * l) {
      throw ContractError("policy: expected " + std::to_string(batch) + " windows of length " + std::to_string(l) +
                          ", got " + std::to_string(ids.size()) + " ids");
    }
    for (int id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) > cfg_.num_items) {
        throw IndexError("policy: item id " + std::to_string(id) + " outside [0, " + std::to_string(cfg_.num_items) + "]");
      }
    }
    const T rate = static_cast<T>(cfg_.dropout);
    Var<T> x = nn::add_tiled(nn::embedding(g.param(store_[embedding_]), ids), g.param(store_[position_]));
    if (rng) x = nn::dropout(x, rate, *rng);
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const bool last = last_only && b + 1 == blocks_.size();
      x = blocks_[b](g, store_, x, batch, l, last, rate, rng);
    }
    return final_norm_(g, store_, x);
  }

  PolicyConfig cfg_;
  nn::ParameterStore<T> store_;
  std::size_t embedding_ = 0, position_ = 0;
  std::vector<nn::AttentionBlock> blocks_;
  nn::LayerNormLayer final_norm_;
  std::vector<nn::DenseLayer> hidden_head_;
  nn::DenseLayer head_;
};

}  // namespace crrt::networks
