#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "crrt/data/transitions.hpp"
#include "crrt/nn/tensor.hpp"

namespace crrt::eval {

enum class PoolKind { rand, all };

struct CandidatePool {
  PoolKind kind = PoolKind::all;
  std::vector<int> items;  // ascending, contains true_item once
  int true_item = 0;
  bool shrunk = false;  // rand pool with fewer than the requested negatives
};

/// Strict ranking order: higher score first, then lower item id.
template <class T>
bool ranks_before(std::span<const T> scores, int a, int b) {
  const T sa = scores[a - 1], sb = scores[b - 1];
  return sa > sb || (sa == sb && a < b);
}

/// The k best pool items, best first. `scores[c]` scores item c+1.
template <class T>
std::vector<int> top_k(std::span<const T> scores, std::span<const int> pool, std::size_t k = 10) {
  if (pool.empty()) throw ContractError("top_k: empty pool");
  std::vector<int> items(pool.begin(), pool.end());
  const std::size_t n = std::min(k, items.size());
  auto cmp = [&](int a, int b) { return ranks_before(scores, a, b); };
  std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n), items.end(), cmp);
  items.resize(n);
  return items;
}

/// 1-based rank of `true_item` within `pool` under the top_k order.
template <class T>
std::size_t rank_in_pool(std::span<const T> scores, std::span<const int> pool, int true_item) {
  std::size_t rank = 1;
  bool present = false;
  for (int j : pool) {
    if (j == true_item) {
      present = true;
      continue;
    }
    rank += ranks_before(scores, j, true_item);
  }
  if (!present) throw ContractError("rank_in_pool: true item not in pool");
  return rank;
}

inline double hit_at(std::size_t rank, std::size_t k) { return rank <= k ? 1.0 : 0.0; }
inline double dcg_at(std::size_t rank, std::size_t k) { return rank <= k ? 1.0 / std::log2(double(rank) + 1.0) : 0.0; }

/// HR@k over per-sample ranks; throws on an empty sample set.
inline double hr_at_k(std::span<const std::size_t> ranks, std::size_t k = 10) {
  if (ranks.empty()) throw DataError("HR@k undefined: no positive-target samples");
  double s = 0;
  for (auto r : ranks) s += hit_at(r, k);
  return s / double(ranks.size());
}

inline double ndcg_at_k(std::span<const std::size_t> ranks, std::size_t k = 10) {
  if (ranks.empty()) throw DataError("NDCG@k undefined: no positive-target samples");
  double s = 0;
  for (auto r : ranks) s += dcg_at(r, k);
  return s / double(ranks.size());
}

/// unrated ∪ {true_item}.
inline CandidatePool build_all_pool(std::span<const int> unrated, int true_item) {
  CandidatePool p;
  p.kind = PoolKind::all;
  p.true_item = true_item;
  p.items.assign(unrated.begin(), unrated.end());
  auto it = std::lower_bound(p.items.begin(), p.items.end(), true_item);
  if (it == p.items.end() || *it != true_item) p.items.insert(it, true_item);
  return p;
}

/// `negatives` unrated items drawn without replacement, plus the true item.
/// `unrated` must be ascending. Shrinks to every unrated item when too few.
template <class Rng>
CandidatePool build_rand_pool(std::span<const int> unrated, int true_item, Rng& rng, std::size_t negatives = 100) {
  std::vector<int> candidates;
  candidates.reserve(unrated.size());
  for (int i : unrated)
    if (i != true_item) candidates.push_back(i);
  CandidatePool p;
  p.kind = PoolKind::rand;
  p.true_item = true_item;
  p.shrunk = candidates.size() < negatives;
  std::sample(candidates.begin(), candidates.end(), std::back_inserter(p.items), negatives, rng);
  p.items.insert(std::lower_bound(p.items.begin(), p.items.end(), true_item), true_item);
  return p;
}

/// Independent stream for sample `index` under `seed`.
inline std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

struct EvalOptions {
  std::size_t k = 10;
  bool pool_all = true;
  bool pool_rand = true;
  std::size_t negatives = 100;
  std::uint64_t seed = 0;
  std::size_t batch = 256;
  std::size_t threads = 1;
  bool split_events = false;  // click-only and purchase-only sub-reports
};

struct SampleResult {
  std::size_t index = 0;  // position in the evaluated transition list
  EventType event = EventType::none;
  std::size_t rank_all = 0;  // 0 when that pool was not evaluated
  std::size_t rank_rand = 0;
  bool shrunk = false;
};

struct MetricReport {
  std::size_t n_pos = 0;
  std::size_t k = 10;
  std::optional<double> hr10, ndcg10, hr10_rand, ndcg10_rand;
  std::size_t shrunk_pools = 0;
  std::vector<std::pair<EventType, MetricReport>> events;
};

inline MetricReport summarize(std::span<const SampleResult> samples, const EvalOptions& opt) {
  MetricReport r;
  r.k = opt.k;
  r.n_pos = samples.size();
  if (samples.empty()) throw DataError("metrics undefined: no positive-target samples");
  std::vector<std::size_t> all, rnd;
  for (const auto& s : samples) {
    if (opt.pool_all) all.push_back(s.rank_all);
    if (opt.pool_rand) rnd.push_back(s.rank_rand);
    r.shrunk_pools += s.shrunk;
  }
  if (opt.pool_all) r.hr10 = hr_at_k(all, opt.k), r.ndcg10 = ndcg_at_k(all, opt.k);
  if (opt.pool_rand) r.hr10_rand = hr_at_k(rnd, opt.k), r.ndcg10_rand = ndcg_at_k(rnd, opt.k);
  return r;
}

inline void to_json(nlohmann::json& j, const MetricReport& r) {
  j = nlohmann::json::object();
  j["n_pos"] = r.n_pos;
  j["k"] = r.k;
  auto put = [&](const char* key, const std::optional<double>& v) { j[key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  put("hr10", r.hr10);
  put("ndcg10", r.ndcg10);
  put("hr10_rand", r.hr10_rand);
  put("ndcg10_rand", r.ndcg10_rand);
  j["shrunk_rand_pools"] = r.shrunk_pools;
  if (!r.events.empty()) {
    auto& ev = j["events"] = nlohmann::json::object();
    for (const auto& [e, sub] : r.events) ev[std::string(to_string(e))] = sub;
  }
}

/// Scores a batch of windows: (ids, batch) -> batch x I logits.
using Scorer = std::function<nn::Tensor<float>(std::span<const int>, std::size_t)>;

/// Ranks the true action of every positive-reward transition in `samples`
/// against the requested pools. Histories come from `history` (past-only).
inline std::vector<SampleResult> rank_samples(const Scorer& score, std::span<const Transition> samples,
                                              const data::HistoryIndex& history, std::size_t num_items,
                                              const EvalOptions& opt) {
  std::vector<std::size_t> positive;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].reward > 0) positive.push_back(i);
  std::vector<SampleResult> out(positive.size());

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t b0 = begin; b0 < end; b0 += opt.batch) {
      const std::size_t b1 = std::min(end, b0 + opt.batch);
      std::vector<int> ids;
      for (std::size_t q = b0; q < b1; ++q) {
        auto s = samples[positive[q]].state.items();
        ids.insert(ids.end(), s.begin(), s.end());
      }
      const nn::Tensor<float> logits = score(ids, b1 - b0);
      if (logits.rows() != b1 - b0 || logits.cols() != num_items) throw ContractError("evaluate: scorer returned wrong shape");
      for (std::size_t q = b0; q < b1; ++q) {
        const Transition& t = samples[positive[q]];
        std::span<const float> sc = logits.row(q - b0);
        const auto seen = history.before(t.actor, t.timestamp);
        const auto unrated = data::unrated_set(seen, num_items);
        SampleResult& r = out[q];
        r.index = positive[q];
        r.event = t.event;
        if (opt.pool_all) {
          const auto pool = build_all_pool(unrated, t.action);
          r.rank_all = rank_in_pool(sc, std::span<const int>(pool.items), t.action);
        }
        if (opt.pool_rand) {
          auto rng = sample_rng(opt.seed, positive[q]);
          const auto pool = build_rand_pool(unrated, t.action, rng, opt.negatives);
          r.rank_rand = rank_in_pool(sc, std::span<const int>(pool.items), t.action);
          r.shrunk = pool.shrunk;
        }
      }
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(opt.threads, positive.size() / std::max<std::size_t>(opt.batch, 1)));
  if (threads <= 1) {
    work(0, positive.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (positive.size() + threads - 1) / threads;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          work(w * chunk, std::min(positive.size(), (w + 1) * chunk));
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return out;
}

inline MetricReport evaluate(const Scorer& score, std::span<const Transition> samples, const data::HistoryIndex& history,
                             std::size_t num_items, const EvalOptions& opt, std::vector<SampleResult>* per_sample = nullptr) {
  auto ranks = rank_samples(score, samples, history, num_items, opt);
  MetricReport report = summarize(ranks, opt);
  if (opt.split_events) {
    for (EventType e : {EventType::click, EventType::purchase}) {
      std::vector<SampleResult> sub;
      for (const auto& s : ranks)
        if (s.event == e) sub.push_back(s);
      if (!sub.empty()) report.events.emplace_back(e, summarize(sub, opt));
    }
  }
  if (per_sample) *per_sample = std::move(ranks);
  return report;
}

/// Scorer over any network exposing `forward(ids, batch)`, cast to float.
template <class Net>
Scorer scorer_of(Net& net) {
  return [&net](std::span<const int> ids, std::size_t batch) {
    auto z = net.forward(ids, batch);
    if constexpr (std::is_same_v<decltype(z), nn::Tensor<float>>) {
      return z;
    } else {
      return z.template cast<float>();
    }
  };
}

inline void write_samples_csv(std::ostream& out, std::span<const SampleResult> samples) {
  out << "sample_id,event,rank_all,rank_rand\n";
  for (const auto& s : samples) out << s.index << ',' << to_string(s.event) << ',' << s.rank_all << ',' << s.rank_rand << '\n';
}

}  // namespace crrt::eval
