#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "crrt/data/transitions.hpp"
#include "crrt/eval/metrics.hpp"
#include "crrt/eval/reference.hpp"
#include "crrt/networks/critic.hpp"
#include "crrt/networks/policy.hpp"
#include "crrt/nn/gradcheck.hpp"
#include "crrt/oracle/tabular.hpp"

/// Self-contained oracle and property suites shared by `crrt verify` and the
/// acceptance runner. Each check records the measured quantity and its bound.
namespace crrt::verify {

struct Check {
  std::string name;
  double value = 0;
  double bound = 0;
  bool pass = false;
};

struct SuiteReport {
  std::string suite;
  std::vector<Check> checks;

  bool passed() const {
    return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }
  void add(std::string name, double value, double bound) { checks.push_back({std::move(name), value, bound, value <= bound}); }
};

inline std::ostream& operator<<(std::ostream& out, const SuiteReport& r) {
  for (const auto& c : r.checks)
    out << (c.pass ? "ok   " : "FAIL ") << r.suite << '/' << c.name << "  value=" << c.value << "  bound=" << c.bound << '\n';
  return out;
}

namespace detail {

inline nn::Tensor<double> noise(nn::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  return nn::init::normal<double>(std::move(shape), scale, rng);
}

// Scalar loss from a fixed random projection of every output coordinate.
inline nn::Var<double> project(nn::Graph<double>& g, nn::Var<double> out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return nn::sum(nn::mul(out, g.constant(noise(out.shape(), rng))));
}

inline std::vector<nn::Parameter<double>*> trainable(nn::ParameterStore<double>& store) {
  std::vector<nn::Parameter<double>*> out;
  for (auto* p : store.pointers())
    if (p->trainable) out.push_back(p);
  return out;
}

inline std::vector<int> random_ids(std::size_t n, std::size_t items, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, static_cast<int>(items));
  std::vector<int> ids(n);
  for (auto& x : ids) x = d(rng);
  return ids;
}

}  // namespace detail

/// Central-difference gradient checks in double precision.
inline SuiteReport gradient_suite(std::uint64_t seed = 2024, double eps = 1e-5, double bound = 1e-4) {
  using namespace nn;
  SuiteReport r{"gradients", {}};
  std::mt19937_64 rng(seed);
  std::mt19937_64* no_dropout = nullptr;
  auto check = [&](std::span<Parameter<double>* const> params, const std::function<Var<double>(Graph<double>&)>& f) {
    return finite_diff_check(params, f, eps);
  };
  {
    ParameterStore<double> s;
    auto t = s.add("table", detail::noise({6, 4}, rng));
    std::vector<int> ids{0, 3, 3, 5, 1};
    auto p = s.pointers();
    r.add("embedding", check(p, [&](Graph<double>& g) { return detail::project(g, embedding(g.param(s[t]), ids), 1); }), bound);
  }
  {
    ParameterStore<double> s;
    auto dense = DenseLayer::create<double>(s, "d", 4, 3, 0.5, rng);
    s[dense.bias].value = detail::noise({3}, rng);
    auto x = s.add("x", detail::noise({5, 4}, rng));
    auto p = s.pointers();
    r.add("dense", check(p, [&](Graph<double>& g) { return detail::project(g, dense(g, s, g.param(s[x])), 2); }), bound);
  }
  {
    ParameterStore<double> s;
    auto block = AttentionBlock::create<double>(s, "b", 8, 2, 16, 1, rng);
    for (auto& q : s) q.value = detail::noise(q.value.shape(), rng, 0.3);
    auto x = s.add("x", detail::noise({2 * 4, 8}, rng));
    auto p = s.pointers();
    r.add("attention_block", check(p, [&](Graph<double>& g) {
            return detail::project(g, block(g, s, g.param(s[x]), 2, 4, false, 0.0, no_dropout), 3);
          }), bound);
  }
  {
    ParameterStore<double> s;
    auto cell = LstmLayer::create<double>(s, "lstm", 3, 4, rng);
    auto x = s.add("x", detail::noise({2 * 5, 3}, rng));
    auto p = s.pointers();
    r.add("recurrent_cell", check(p, [&](Graph<double>& g) {
            return detail::project(g, cell(g, s, g.param(s[x]), 2, 5, true), 4);
          }), bound);
  }
  {
    ParameterStore<double> s;
    auto z = s.add("z", detail::noise({4, 7}, rng, 2.0));
    auto p = s.pointers();
    r.add("softmax_cross_entropy", check(p, [&](Graph<double>& g) {
            return weighted_cross_entropy(g.param(s[z]), {6, 0, 3, 3}, {0.5, 2.0, 1.0, 0.0});
          }), bound);
  }
  {
    networks::PolicyConfig c;
    c.num_items = 7;
    c.window = 4;
    c.embed_dim = 6;
    c.blocks = 1;
    c.heads = 2;
    c.ffn_mult = 2;
    c.head_init_std = 0.5;
    c.seed = seed + 1;
    networks::PolicyNetwork<double> net(c);
    auto ids = detail::random_ids(4 * 3, 7, rng);
    auto p = net.parameters().pointers();
    r.add("policy_1_block", check(p, [&](Graph<double>& g) { return cross_entropy(net.logits(g, ids, 3), {0, 3, 6}); }),
          bound);
  }
  {
    networks::CriticConfig c;
    c.num_items = 7;
    c.window = 4;
    c.embed_dim = 5;
    c.hidden = 6;
    c.lstm_layers = 1;
    c.seed = seed + 2;
    networks::ValueNetwork<double> q(c, nn::init::normal<double>({8, 5}, 0.5, rng));
    auto ids = detail::random_ids(4 * 3, 7, rng);
    std::vector<int> acts{1, 4, 7};
    auto p = detail::trainable(q.parameters());
    r.add("critic_1_layer", check(p, [&](Graph<double>& g) { return mse(q.q(g, ids, 3, acts), {0.5, -1.0, 2.0}); }), bound);
  }
  return r;
}

/// Fast metrics against a brute-force full sort on randomized instances, plus
/// NDCG <= HR and rand-pool >= all-pool on every instance. Values count
/// violating instances.
inline SuiteReport metric_suite(std::size_t instances = 1000, std::uint64_t seed = 17) {
  SuiteReport r{"metrics", {}};
  std::mt19937_64 rng(seed);
  std::size_t mismatch = 0, ndcg_above_hr = 0, rand_below_all = 0;
  for (std::size_t inst = 0; inst < instances; ++inst) {
    const int n = 5 + static_cast<int>(rng() % 300);
    std::vector<double> scores(static_cast<std::size_t>(n));
    std::uniform_int_distribution<int> coarse(0, 20);  // forces ties
    for (auto& s : scores) s = (inst % 2) ? coarse(rng) : std::normal_distribution<double>()(rng);
    std::vector<int> seen;
    for (int i = 1; i <= n; ++i)
      if (rng() % 4 == 0) seen.push_back(i);
    const int truth = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(n));
    const auto unrated = data::unrated_set(seen, static_cast<std::size_t>(n));
    const auto all = eval::build_all_pool(unrated, truth);
    const auto rnd = eval::build_rand_pool(unrated, truth, rng, 100);
    double hit[2], gain[2];
    int slot = 0;
    for (const auto* pool : {&all, &rnd}) {
      const auto [ref_hit, ref_gain] = eval::reference::sample_metrics<double>(scores, pool->items, truth, 10);
      const std::size_t rank = eval::rank_in_pool<double>(scores, pool->items, truth);
      hit[slot] = eval::hr_at_k(std::vector<std::size_t>{rank}, 10);
      gain[slot] = eval::ndcg_at_k(std::vector<std::size_t>{rank}, 10);
      auto top = eval::top_k<double>(scores, pool->items, 10);
      auto full = eval::reference::full_sort<double>(scores, pool->items);
      full.resize(std::min<std::size_t>(10, full.size()));
      mismatch += hit[slot] != ref_hit || gain[slot] != ref_gain || top != full;
      ndcg_above_hr += gain[slot] > hit[slot];
      ++slot;
    }
    rand_below_all += hit[1] < hit[0] || gain[1] < gain[0];
  }
  r.add("brute_force_mismatches", double(mismatch), 0);
  r.add("ndcg_above_hr", double(ndcg_above_hr), 0);
  r.add("rand_pool_below_all_pool", double(rand_below_all), 0);
  return r;
}

/// Exact evaluation on random MDPs: Bellman residual and on-policy advantage.
inline SuiteReport tabular_suite(std::size_t mdps = 100, std::size_t states = 5, std::size_t actions = 4,
                                 std::uint64_t seed = 2, double bound = 1e-10) {
  SuiteReport r{"tabular", {}};
  std::mt19937_64 rng(seed);
  double residual = 0, adv_sum = 0;
  for (std::size_t k = 0; k < mdps; ++k) {
    auto m = oracle::random_mdp(states, actions, 0.95, rng);
    auto pi = oracle::random_policy(states, actions, rng);
    residual = std::max(residual, oracle::bellman_residual(m, pi, oracle::exact_policy_eval(m, pi)));
    const auto a = oracle::exact_advantage(m, pi);
    for (std::size_t s = 0; s < states; ++s) {
      double sum = 0;
      for (std::size_t j = 0; j < actions; ++j) sum += pi[s][j] * a[s][j];
      adv_sum = std::max(adv_sum, std::abs(sum));
    }
  }
  r.add("bellman_residual", residual, bound);
  r.add("on_policy_advantage_sum", adv_sum, bound);
  return r;
}

/// Randomized transition-builder cases: window length, positive-append,
/// zero-reward fixpoint and replay self-consistency. Values count violations.
inline SuiteReport transition_suite(std::size_t cases = 100000, std::uint64_t seed = 5) {
  SuiteReport r{"transitions", {}};
  std::mt19937_64 rng(seed);
  std::size_t length = 0, append = 0, fixpoint = 0, replay_bad = 0;
  for (std::size_t trial = 0; trial < cases; ++trial) {
    const std::size_t window = 1 + rng() % 8;
    data::ActorStream stream{0, {}};
    const int n = 1 + static_cast<int>(rng() % 12);
    for (int k = 0; k < n; ++k)
      stream.steps.push_back({1 + static_cast<int>(rng() % 10), (rng() % 2) ? 1.0 : 0.0, EventType::none, k, 0});
    const auto ts = data::build_transitions({stream}, window);
    StateSequence replay(window);
    for (const auto& t : ts) {
      length += t.state.size() != window || t.next.size() != window;
      if (t.reward > 0) {
        bool ok = t.next.newest() == t.action;
        for (std::size_t j = 0; j + 1 < window; ++j) ok = ok && t.next[j] == t.state[j + 1];
        append += !ok;
      } else {
        fixpoint += !(t.next == t.state);
      }
      replay_bad += !(t.state == replay);
      replay = t.reward > 0 ? replay.shifted(t.action) : replay;
    }
  }
  r.add("window_length", double(length), 0);
  r.add("positive_append", double(append), 0);
  r.add("zero_reward_fixpoint", double(fixpoint), 0);
  r.add("replay_consistency", double(replay_bad), 0);
  return r;
}

}  // namespace crrt::verify
