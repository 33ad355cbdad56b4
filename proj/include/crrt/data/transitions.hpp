#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "crrt/data/records.hpp"

namespace crrt::data {

/// Bijection between raw item ids and contiguous internal indices 1..I.
class Catalog {
 public:
  /// Returns the index of `raw`, assigning the next free one if new.
  int intern(const std::string& raw) {
    auto [it, inserted] = index_.try_emplace(raw, static_cast<int>(raw_.size()) + 1);
    if (inserted) raw_.push_back(raw);
    return it->second;
  }

  int index(const std::string& raw) const {
    auto it = index_.find(raw);
    if (it == index_.end()) throw IndexError("catalog: unknown item '" + raw + "'");
    return it->second;
  }

  const std::string& raw(int index) const {
    if (index < 1 || static_cast<std::size_t>(index) > raw_.size()) throw IndexError("catalog: index out of range");
    return raw_[index - 1];
  }

  bool contains(const std::string& raw) const { return index_.count(raw) > 0; }
  std::size_t size() const noexcept { return raw_.size(); }
  const std::vector<std::string>& raw_ids() const noexcept { return raw_; }

 private:
  std::unordered_map<std::string, int> index_;
  std::vector<std::string> raw_;
};

/// One record of an actor's stream after catalog mapping and reward shaping.
struct StepRecord {
  int item = 0;
  double reward = 0;
  EventType event = EventType::none;
  std::int64_t timestamp = 0;
  int split = 0;  // 0 train, 1 validation, 2 test
};

struct ActorStream {
  int actor = -1;
  std::vector<StepRecord> steps;  // time-ordered
};

struct TransitionOptions {
  bool emit_first_record = true;  // emit the transition out of the all-PAD start state
};

/// Walks each actor stream once, applying the positive-only window update:
/// s' = shift(s, a) when r > 0, else s' = s. The last record of each stream is
/// terminal. Output order follows `streams`, then time.
inline std::vector<Transition> build_transitions(const std::vector<ActorStream>& streams, std::size_t window,
                                                 const TransitionOptions& opt = {}) {
  if (window == 0) throw ContractError("build_transitions: window must be >= 1");
  std::vector<Transition> out;
  for (const auto& stream : streams) {
    StateSequence state(window);
    for (std::size_t k = 0; k < stream.steps.size(); ++k) {
      const StepRecord& step = stream.steps[k];
      Transition t;
      t.state = state;
      t.action = step.item;
      t.reward = step.reward;
      t.next = step.reward > 0 ? state.shifted(step.item) : state;
      t.terminal = k + 1 == stream.steps.size();
      t.event = step.event;
      t.actor = stream.actor;
      t.timestamp = step.timestamp;
      state = t.next;
      if (k == 0 && !opt.emit_first_record) continue;
      out.push_back(std::move(t));
    }
  }
  return out;
}

/// Items of [1, num_items] absent from `history`, ascending.
inline std::vector<int> unrated_set(std::span<const int> history, std::size_t num_items) {
  std::vector<char> seen(num_items + 1, 0);
  for (int i : history)
    if (i >= 1 && static_cast<std::size_t>(i) <= num_items) seen[i] = 1;
  std::vector<int> out;
  out.reserve(num_items);
  for (std::size_t i = 1; i <= num_items; ++i)
    if (!seen[i]) out.push_back(static_cast<int>(i));
  return out;
}

/// Per-actor interaction history (every transition's action, any reward).
class HistoryIndex {
 public:
  HistoryIndex() = default;

  void add(std::span<const Transition> transitions) {
    for (const auto& t : transitions) events_[t.actor].push_back({t.timestamp, t.action});
    sorted_ = false;
  }

  /// Items the actor interacted with strictly before `timestamp`.
  std::vector<int> before(int actor, std::int64_t timestamp) const {
    sort();
    std::vector<int> out;
    auto it = events_.find(actor);
    if (it == events_.end()) return out;
    for (const auto& [ts, item] : it->second) {
      if (ts >= timestamp) break;
      out.push_back(item);
    }
    return out;
  }

 private:
  void sort() const {
    if (sorted_) return;
    for (auto& [a, ev] : events_) std::stable_sort(ev.begin(), ev.end(), [](auto& x, auto& y) { return x.first < y.first; });
    sorted_ = true;
  }

  mutable std::map<int, std::vector<std::pair<std::int64_t, int>>> events_;
  mutable bool sorted_ = true;
};

/// The offline MDP dataset with its chronological partitions.
struct Dataset {
  Catalog catalog;
  std::vector<std::string> actors;  // internal actor index -> raw id
  std::size_t window = 30;
  LogSchema schema = LogSchema::ratings;
  std::vector<Transition> train, validation, test;

  std::size_t num_items() const noexcept { return catalog.size(); }

  HistoryIndex history() const {
    HistoryIndex h;
    h.add(train);
    h.add(validation);
    h.add(test);
    return h;
  }
};

namespace detail {

// Numeric ids compare as numbers, everything else lexicographically after them.
inline bool actor_less(const std::string& a, const std::string& b) {
  long long x = 0, y = 0;
  const bool na = parse_number(a, x), nb = parse_number(b, y);
  if (na && nb) return x != y ? x < y : a < b;
  if (na != nb) return na;
  return a < b;
}

}  // namespace detail

/// dedupe -> chronological split -> catalog -> per-actor transitions.
///
/// Transitions are built over each actor's full stream so validation and test
/// states carry the actor's training history; each transition lands in the
/// partition of the record it was emitted for.
inline Dataset build_dataset(const std::vector<InteractionRecord>& raw, const SplitSpec& split, std::size_t window,
                             const RewardSpec& reward, LogSchema schema, const TransitionOptions& opt = {}) {
  auto records = dedupe_simultaneous(raw);
  if (records.empty()) throw DataError("build_dataset: no records");
  std::stable_sort(records.begin(), records.end(),
                   [](const InteractionRecord& a, const InteractionRecord& b) { return a.timestamp < b.timestamp; });
  auto [b1, b2] = split_bounds(records.size(), split);

  Dataset ds;
  ds.window = window;
  ds.schema = schema;
  std::map<std::string, std::vector<StepRecord>, decltype(&detail::actor_less)> per_actor(&detail::actor_less);
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    StepRecord s;
    s.item = ds.catalog.intern(r.item);
    s.reward = map_reward(r, reward);
    s.event = r.event;
    s.timestamp = r.timestamp;
    s.split = k < b1 ? 0 : k < b2 ? 1 : 2;
    per_actor[r.actor].push_back(s);
  }
  std::vector<ActorStream> streams;
  std::vector<std::vector<int>> split_of;
  for (auto& [raw_actor, steps] : per_actor) {
    const int id = static_cast<int>(ds.actors.size());
    ds.actors.push_back(raw_actor);
    split_of.emplace_back();
    for (const auto& s : steps) split_of.back().push_back(s.split);
    streams.push_back({id, std::move(steps)});
  }
  // Walk actors one at a time so each transition can be matched to its record's split.
  for (std::size_t a = 0; a < streams.size(); ++a) {
    auto ts = build_transitions({streams[a]}, window, opt);
    const std::size_t skipped = streams[a].steps.size() - ts.size();
    for (std::size_t k = 0; k < ts.size(); ++k) {
      switch (split_of[a][k + skipped]) {
        case 0: ds.train.push_back(std::move(ts[k])); break;
        case 1: ds.validation.push_back(std::move(ts[k])); break;
        default: ds.test.push_back(std::move(ts[k])); break;
      }
    }
  }
  return ds;
}

}  // namespace crrt::data
