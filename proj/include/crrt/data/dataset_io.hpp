#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crrt/data/transitions.hpp"

namespace crrt::data {

namespace fs = std::filesystem;

/// Shortest round-trip decimal form of `v`.
inline std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

/// `s1,...,sl|action|reward|terminal|event`, plus `|n1,...,nl` when the next
/// state does not follow from the positive-only window rule.
inline std::string format_transition(const Transition& t) {
  std::string out;
  for (std::size_t i = 0; i < t.state.size(); ++i) {
    if (i) out.push_back(',');
    out += std::to_string(t.state[i]);
  }
  out += '|' + std::to_string(t.action) + '|' + format_number(t.reward) + '|' + (t.terminal ? "1" : "0") + '|' +
         std::string(to_string(t.event));
  const StateSequence implied = t.reward > 0 ? t.state.shifted(t.action) : t.state;
  if (!(implied == t.next)) {
    out.push_back('|');
    for (std::size_t i = 0; i < t.next.size(); ++i) {
      if (i) out.push_back(',');
      out += std::to_string(t.next[i]);
    }
  }
  return out;
}

inline Transition parse_transition(std::string_view line, std::size_t window, const std::string& source = {},
                                   std::size_t lineno = 0) {
  auto fields = detail::split(line, '|');
  if (fields.size() != 5 && fields.size() != 6)
    throw DataError("expected 5 or 6 '|'-separated fields, got " + std::to_string(fields.size()), source, lineno);
  auto parse_state = [&](std::string_view text) {
    auto ids = detail::split(text, ',');
    if (ids.size() != window)
      throw DataError("state has " + std::to_string(ids.size()) + " ids, expected " + std::to_string(window), source, lineno);
    std::vector<int> items(window);
    for (std::size_t i = 0; i < window; ++i)
      if (!detail::parse_number(ids[i], items[i]) || items[i] < 0) throw DataError("bad state id '" + std::string(ids[i]) + "'", source, lineno);
    return StateSequence(std::move(items));
  };
  Transition t;
  t.state = parse_state(fields[0]);
  if (!detail::parse_number(fields[1], t.action) || t.action < 1) throw DataError("bad action", source, lineno);
  if (!detail::parse_number(fields[2], t.reward) || !std::isfinite(t.reward)) throw DataError("bad reward", source, lineno);
  if (fields[3] != "0" && fields[3] != "1") throw DataError("terminal flag must be 0 or 1", source, lineno);
  t.terminal = fields[3] == "1";
  try {
    t.event = parse_event(fields[4]);
  } catch (const SchemaError&) {
    throw SchemaError("unknown event '" + std::string(fields[4]) + "'", source, lineno);
  }
  t.next = fields.size() == 6 ? parse_state(fields[5]) : t.reward > 0 ? t.state.shifted(t.action) : t.state;
  return t;
}

namespace detail {

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write", p.string());
  return out;
}

inline std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open", p.string());
  return in;
}

inline void write_split(const fs::path& dir, const std::string& name, const std::vector<Transition>& ts) {
  auto out = open_out(dir / (name + ".csv"));
  auto meta = open_out(dir / (name + ".meta.csv"));
  meta << "actor,timestamp\n";
  for (const auto& t : ts) {
    out << format_transition(t) << '\n';
    meta << t.actor << ',' << t.timestamp << '\n';
  }
}

inline std::vector<Transition> read_split(const fs::path& dir, const std::string& name, std::size_t window) {
  const fs::path path = dir / (name + ".csv");
  auto in = open_in(path);
  std::vector<Transition> ts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    ts.push_back(parse_transition(trim(line), window, path.string(), lineno));
  }
  const fs::path meta_path = dir / (name + ".meta.csv");
  if (fs::exists(meta_path)) {
    auto meta = open_in(meta_path);
    std::getline(meta, line);
    lineno = 1;
    for (auto& t : ts) {
      ++lineno;
      if (!std::getline(meta, line)) throw DataError("sidecar shorter than split", meta_path.string(), lineno);
      auto f = split(line, ',');
      if (f.size() != 2 || !parse_number(f[0], t.actor) || !parse_number(f[1], t.timestamp))
        throw DataError("bad sidecar row", meta_path.string(), lineno);
    }
  }
  return ts;
}

}  // namespace detail

/// Writes train/validation/test, their actor/timestamp sidecars, the catalog,
/// the actor table and a small manifest into `dir`.
inline void write_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  detail::write_split(dir, "train", ds.train);
  detail::write_split(dir, "validation", ds.validation);
  detail::write_split(dir, "test", ds.test);
  {
    auto out = detail::open_out(dir / "catalog.csv");
    out << "index,raw_id\n";
    for (std::size_t i = 0; i < ds.catalog.size(); ++i) out << i + 1 << ',' << ds.catalog.raw_ids()[i] << '\n';
  }
  {
    auto out = detail::open_out(dir / "actors.csv");
    out << "index,raw_id\n";
    for (std::size_t i = 0; i < ds.actors.size(); ++i) out << i << ',' << ds.actors[i] << '\n';
  }
  nlohmann::json m = {{"format", "crrt-dataset"},
                      {"version", 1},
                      {"window", ds.window},
                      {"schema", to_string(ds.schema)},
                      {"num_items", ds.num_items()},
                      {"num_actors", ds.actors.size()},
                      {"counts", {{"train", ds.train.size()}, {"validation", ds.validation.size()}, {"test", ds.test.size()}}}};
  detail::open_out(dir / "manifest.json") << m.dump(2) << '\n';
}

inline Dataset read_dataset(const fs::path& dir) {
  Dataset ds;
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(detail::open_in(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad dataset manifest: ") + e.what(), (dir / "manifest.json").string());
  }
  if (m.value("format", "") != "crrt-dataset") throw DataError("not a processed dataset", (dir / "manifest.json").string());
  ds.window = m.at("window").get<std::size_t>();
  ds.schema = parse_schema(m.at("schema").get<std::string>());
  {
    auto in = detail::open_in(dir / "catalog.csv");
    std::string line;
    std::getline(in, line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (detail::trim(line).empty()) continue;
      auto f = detail::split(line, ',');
      std::size_t idx = 0;
      if (f.size() != 2 || !detail::parse_number(f[0], idx) || idx != ds.catalog.size() + 1)
        throw DataError("catalog rows must be index,raw_id with contiguous indices", (dir / "catalog.csv").string(), lineno);
      ds.catalog.intern(std::string(f[1]));
    }
  }
  if (ds.catalog.size() != m.at("num_items").get<std::size_t>()) throw DataError("catalog size disagrees with manifest");
  if (fs::exists(dir / "actors.csv")) {
    auto in = detail::open_in(dir / "actors.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      auto f = detail::split(line, ',');
      if (f.size() == 2) ds.actors.emplace_back(f[1]);
    }
  }
  ds.train = detail::read_split(dir, "train", ds.window);
  ds.validation = detail::read_split(dir, "validation", ds.window);
  ds.test = detail::read_split(dir, "test", ds.window);
  for (const auto* part : {&ds.train, &ds.validation, &ds.test}) {
    for (const auto& t : *part) {
      if (static_cast<std::size_t>(t.action) > ds.num_items()) throw DataError("action outside catalog");
      for (int id : t.state.items())
        if (static_cast<std::size_t>(id) > ds.num_items()) throw DataError("state id outside catalog");
    }
  }
  return ds;
}

}  // namespace crrt::data
