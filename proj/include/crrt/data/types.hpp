#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crrt/errors.hpp"

namespace crrt {

/// Reserved item index filling window slots with no real item.
inline constexpr int kPad = 0;

enum class EventType { none, click, purchase };

inline std::string_view to_string(EventType e) {
  switch (e) {
    case EventType::click: return "click";
    case EventType::purchase: return "purchase";
    default: return "-";
  }
}

inline EventType parse_event(std::string_view s) {
  if (s == "click") return EventType::click;
  if (s == "purchase") return EventType::purchase;
  if (s == "-" || s.empty()) return EventType::none;
  throw SchemaError("unknown event type '" + std::string(s) + "'");
}

/// The most recent positively-rewarded items, oldest first, left-padded with kPad.
class StateSequence {
 public:
  StateSequence() = default;
  explicit StateSequence(std::size_t window) : items_(window, kPad) {
    if (window == 0) throw ContractError("state window must be >= 1");
  }
  explicit StateSequence(std::vector<int> items) : items_(std::move(items)) {
    if (items_.empty()) throw ContractError("state window must be >= 1");
  }

  std::size_t size() const noexcept { return items_.size(); }
  std::span<const int> items() const noexcept { return items_; }
  int operator[](std::size_t i) const { return items_[i]; }
  int newest() const { return items_.back(); }

  /// Drops the oldest slot and appends `item` as the newest.
  StateSequence shifted(int item) const {
    StateSequence s = *this;
    std::move(s.items_.begin() + 1, s.items_.end(), s.items_.begin());
    s.items_.back() = item;
    return s;
  }

  std::size_t real_count() const {
    std::size_t n = 0;
    for (int v : items_) n += v != kPad;
    return n;
  }

  friend bool operator==(const StateSequence&, const StateSequence&) = default;

 private:
  std::vector<int> items_;
};

/// One offline sample (s, a, r, s', terminal). `actor` and `timestamp` record
/// where the sample came from; evaluation uses them to rebuild histories.
struct Transition {
  StateSequence state;
  int action = 0;
  double reward = 0;
  StateSequence next;
  bool terminal = false;
  EventType event = EventType::none;
  int actor = -1;
  std::int64_t timestamp = 0;
};

/// Concatenates the windows of `states` into one row-major id buffer.
inline std::vector<int> flatten_states(std::span<const StateSequence> states) {
  std::vector<int> ids;
  if (!states.empty()) ids.reserve(states.size() * states[0].size());
  for (const auto& s : states) ids.insert(ids.end(), s.items().begin(), s.items().end());
  return ids;
}

}  // namespace crrt
