#pragma once

#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "crrt/data/records.hpp"

namespace crrt::oracle {

/// next = (mult * prev + shift) mod I over items 1..I (prev, next 1-based).
struct AffineRule {
  std::size_t num_items = 200;
  std::size_t mult = 7;
  std::size_t shift = 13;

  int operator()(int prev) const {
    const std::size_t p = static_cast<std::size_t>(prev - 1);
    return static_cast<int>((mult * p + shift) % num_items) + 1;
  }
};

struct SessionSpec {
  AffineRule rule;
  std::size_t actors = 2000;
  std::size_t length = 20;  // records per actor
  double noise = 0.2;       // epsilon
  data::LogSchema schema = data::LogSchema::ratings;
  double purchase_rate = 0.3;  // sessions only: share of rule-following events logged as purchases
};

/// Planted-rule interaction log. Each actor opens with a uniform item received
/// positively. After that, with probability 1 - noise the next item is
/// rule(last positively received item) and is received positively; otherwise it
/// is uniform over the catalog with uniform feedback. Actors interleave in time
/// so a chronological split cuts every actor's stream at the same step.
template <class Rng>
std::vector<data::InteractionRecord> generate_synthetic_sessions(const SessionSpec& spec, Rng& rng) {
  const std::size_t I = spec.rule.num_items;
  if (I < 2 || spec.actors == 0 || spec.length == 0) throw ContractError("synthetic sessions: empty specification");
  if (!(spec.noise >= 0 && spec.noise <= 1)) throw ContractError("synthetic sessions: noise must lie in [0, 1]");
  std::uniform_int_distribution<int> item(1, static_cast<int>(I));
  std::uniform_int_distribution<int> half_stars(1, 10);   // 0.5 .. 5.0
  std::uniform_int_distribution<int> high_stars(8, 10);   // 4.0 .. 5.0
  std::bernoulli_distribution follow(1.0 - spec.noise), purchase(spec.purchase_rate), coin(0.5);

  std::vector<data::InteractionRecord> out(spec.actors * spec.length);
  std::vector<int> last(spec.actors, 0);
  for (std::size_t t = 0; t < spec.length; ++t) {
    for (std::size_t u = 0; u < spec.actors; ++u) {
      data::InteractionRecord r;
      r.actor = std::to_string(u + 1);
      r.timestamp = static_cast<std::int64_t>(t * spec.actors + u);
      bool positive;
      int next;
      if (last[u] == 0) {
        // opening item: uniform and received positively, so the rule can start
        next = item(rng);
        positive = true;
        r.rating = 0.5 * high_stars(rng);
        r.event = EventType::click;
      } else if (follow(rng)) {
        next = spec.rule(last[u]);
        positive = true;
        r.rating = 0.5 * high_stars(rng);
        r.event = purchase(rng) ? EventType::purchase : EventType::click;
      } else {
        next = item(rng);
        r.rating = 0.5 * half_stars(rng);
        positive = r.rating >= 3.5;
        r.event = coin(rng) ? EventType::click : EventType::purchase;
      }
      if (spec.schema == data::LogSchema::ratings) {
        r.event = EventType::none;
      } else {
        positive = true;  // every click or purchase carries a positive reward
      }
      r.item = std::to_string(next);
      if (positive) last[u] = next;
      out[t * spec.actors + u] = std::move(r);
    }
  }
  return out;
}

inline void write_log(std::ostream& out, const std::vector<data::InteractionRecord>& records, data::LogSchema schema) {
  if (schema == data::LogSchema::ratings) {
    out << data::kRatingsHeader << '\n';
    for (const auto& r : records) {
      char buf[32];
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, r.rating);
      out << r.actor << ',' << r.item << ',' << std::string_view(buf, p - buf) << ',' << r.timestamp << '\n';
    }
  } else {
    out << data::kSessionsHeader << '\n';
    for (const auto& r : records) out << r.actor << ',' << r.timestamp << ',' << r.item << ',' << to_string(r.event) << '\n';
  }
}

}  // namespace crrt::oracle
