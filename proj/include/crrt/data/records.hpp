#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "crrt/data/types.hpp"

namespace crrt::data {

enum class LogSchema { ratings, sessions };

inline std::string_view to_string(LogSchema s) { return s == LogSchema::ratings ? "ratings" : "sessions"; }

inline LogSchema parse_schema(std::string_view s) {
  if (s == "ratings") return LogSchema::ratings;
  if (s == "sessions") return LogSchema::sessions;
  throw DataError("unknown log schema '" + std::string(s) + "' (expected ratings or sessions)");
}

inline constexpr std::string_view kRatingsHeader = "userId,itemId,rating,timestamp";
inline constexpr std::string_view kSessionsHeader = "sessionId,timestamp,itemId,event";

/// One logged interaction. `actor` is the user id (ratings) or session id (sessions).
struct InteractionRecord {
  std::string actor;
  std::string item;
  double rating = 0;
  EventType event = EventType::none;
  std::int64_t timestamp = 0;
  std::size_t line = 0;  // 1-based source line, 0 if synthetic
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class Num>
bool parse_number(std::string_view s, Num& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace detail

/// Parses a ratings or session CSV. Records keep file order.
inline std::vector<InteractionRecord> parse_log(std::istream& in, LogSchema schema, const std::string& source = {}) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty log, expected a header", source, 1);
  const std::string_view expected = schema == LogSchema::ratings ? kRatingsHeader : kSessionsHeader;
  if (detail::trim(line) != expected) {
    throw DataError("header '" + std::string(detail::trim(line)) + "' does not match " + std::string(to_string(schema)) +
                        " schema '" + std::string(expected) + "'",
                    source, 1);
  }
  std::vector<InteractionRecord> records;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto f = detail::split(line, ',');
    if (f.size() != 4) throw DataError("expected 4 fields, got " + std::to_string(f.size()), source, lineno);
    InteractionRecord r;
    r.line = lineno;
    if (schema == LogSchema::ratings) {
      r.actor = std::string(f[0]);
      r.item = std::string(f[1]);
      if (!detail::parse_number(f[2], r.rating) || !std::isfinite(r.rating))
        throw DataError("unparseable rating '" + std::string(f[2]) + "'", source, lineno);
      if (!detail::parse_number(f[3], r.timestamp)) throw DataError("unparseable timestamp '" + std::string(f[3]) + "'", source, lineno);
    } else {
      r.actor = std::string(f[0]);
      if (!detail::parse_number(f[1], r.timestamp)) throw DataError("unparseable timestamp '" + std::string(f[1]) + "'", source, lineno);
      r.item = std::string(f[2]);
      try {
        r.event = parse_event(f[3]);
      } catch (const SchemaError&) {
        throw SchemaError("unknown event type '" + std::string(f[3]) + "'", source, lineno);
      }
      if (r.event == EventType::none) throw SchemaError("missing event type", source, lineno);
    }
    if (r.actor.empty() || r.item.empty()) throw DataError("empty actor or item id", source, lineno);
    if (r.timestamp < 0) throw DataError("negative timestamp", source, lineno);
    records.push_back(std::move(r));
  }
  return records;
}

inline std::vector<InteractionRecord> parse_log(const std::string& path, LogSchema schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open log", path);
  return parse_log(in, schema, path);
}

/// Keeps the first record (in file order) for each (actor, timestamp).
inline std::vector<InteractionRecord> dedupe_simultaneous(const std::vector<InteractionRecord>& records) {
  std::unordered_set<std::string> seen;
  std::vector<InteractionRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    std::string key = r.actor;
    key.push_back('\x1f');
    key += std::to_string(r.timestamp);
    if (seen.insert(std::move(key)).second) out.push_back(r);
  }
  return out;
}

struct RewardSpec {
  enum class Scheme { rating_threshold, event_valued };
  Scheme scheme = Scheme::rating_threshold;
  double threshold = 3.5;
  double click = 1.0;
  double purchase = 3.0;
};

/// rating >= threshold -> 1 else 0; purchase -> 3, click -> 1 (defaults).
inline double map_reward(const InteractionRecord& r, const RewardSpec& spec) {
  if (spec.scheme == RewardSpec::Scheme::rating_threshold) {
    if (r.event != EventType::none) throw SchemaError("event record under rating-threshold reward scheme", {}, r.line);
    return r.rating >= spec.threshold ? 1.0 : 0.0;
  }
  switch (r.event) {
    case EventType::click: return spec.click;
    case EventType::purchase: return spec.purchase;
    default: throw SchemaError("event must be click or purchase under event-valued reward scheme", {}, r.line);
  }
}

struct SplitSpec {
  double train = 0.99;
  double validation = 0.002;
  double test = 0.008;

  void validate() const {
    if (!(train > 0 && validation > 0 && test > 0)) throw ConfigError("split", "fractions must be positive");
    if (std::abs(train + validation + test - 1.0) > 1e-9) throw ConfigError("split", "fractions must sum to 1");
  }
};

struct SplitRecords {
  std::vector<InteractionRecord> train, validation, test;
};

/// Index boundaries [0, b1) / [b1, b2) / [b2, n) of a chronological split.
inline std::pair<std::size_t, std::size_t> split_bounds(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  auto b1 = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.train));
  auto b2 = static_cast<std::size_t>(std::llround(static_cast<double>(n) * (spec.train + spec.validation)));
  b1 = std::min(b1, n);
  b2 = std::clamp(b2, b1, n);
  return {b1, b2};
}

/// Stable sort by timestamp, then cut at the cumulative fractions.
inline SplitRecords chronological_split(std::vector<InteractionRecord> records, const SplitSpec& spec) {
  if (records.empty()) throw DataError("chronological_split: no records");
  std::stable_sort(records.begin(), records.end(),
                   [](const InteractionRecord& a, const InteractionRecord& b) { return a.timestamp < b.timestamp; });
  auto [b1, b2] = split_bounds(records.size(), spec);
  SplitRecords out;
  out.train.assign(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(b1));
  out.validation.assign(records.begin() + static_cast<std::ptrdiff_t>(b1), records.begin() + static_cast<std::ptrdiff_t>(b2));
  out.test.assign(records.begin() + static_cast<std::ptrdiff_t>(b2), records.end());
  return out;
}

}  // namespace crrt::data
