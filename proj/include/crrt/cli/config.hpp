#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "crrt/data/records.hpp"
#include "crrt/eval/metrics.hpp"
#include "crrt/networks/critic.hpp"
#include "crrt/networks/policy.hpp"
#include "crrt/train/crr.hpp"
#include "crrt/train/pretrain.hpp"

namespace crrt::cli {

namespace fs = std::filesystem;

/// Everything a run needs besides its input and output paths.
struct RunConfig {
  data::LogSchema schema = data::LogSchema::ratings;
  std::size_t window = 30;
  data::RewardSpec reward;
  data::SplitSpec split;
  networks::PolicyConfig policy;  // num_items and seed are filled in per run
  networks::CriticConfig critic;
  train::PretrainConfig pretrain;
  train::CrrConfig crr;
  eval::EvalOptions eval;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  RunConfig() {
    policy.dropout = 0.1;
    critic.embed_dim = policy.embed_dim;
  }

  /// Component seeds are derived from the run seed so one number pins a run.
  std::uint64_t derived_seed(std::uint64_t purpose) const { return train::detail::splitmix64(seed ^ (purpose * 0x9e3779b97f4a7c15ULL)); }

  /// Fills derived fields; call after every override has been applied.
  void resolve() {
    policy.window = critic.window = window;
    critic.embed_dim = policy.embed_dim;
    policy.seed = derived_seed(1);
    critic.seed = derived_seed(2);
    pretrain.seed = derived_seed(3);
    crr.seed = derived_seed(4);
    eval.seed = seed;
    eval.threads = pretrain.eval.threads = crr.eval.threads = threads;
    pretrain.eval.k = crr.eval.k = eval.k;
    pretrain.eval.batch = crr.eval.batch = eval.batch;
    policy.dropout = pretrain.dropout;
  }

  void validate() const {
    if (window == 0) throw ConfigError("data.window", "must be >= 1");
    if (reward.scheme == data::RewardSpec::Scheme::rating_threshold && !std::isfinite(reward.threshold))
      throw ConfigError("data.reward_threshold", "must be finite");
    try {
      split.validate();
    } catch (const ConfigError& e) {
      throw ConfigError("data.split_train", e.what());
    }
    if (policy.embed_dim == 0) throw ConfigError("policy.embed_dim", "must be >= 1");
    if (policy.heads == 0 || policy.embed_dim % policy.heads != 0)
      throw ConfigError("policy.heads", "must be >= 1 and divide policy.embed_dim");
    if (policy.blocks == 0) throw ConfigError("policy.blocks", "must be >= 1");
    if (policy.ffn_mult == 0) throw ConfigError("policy.ffn_mult", "must be >= 1");
    if (policy.head_layers == 0) throw ConfigError("policy.head_layers", "must be >= 1");
    if (!(policy.head_init_std >= 0)) throw ConfigError("policy.head_init_std", "must be >= 0");
    if (critic.hidden == 0) throw ConfigError("critic.hidden", "must be >= 1");
    if (critic.lstm_layers == 0) throw ConfigError("critic.lstm_layers", "must be >= 1");
    if (critic.head_layers == 0) throw ConfigError("critic.head_layers", "must be >= 1");
    pretrain.validate();
    crr.validate();
    if (eval.k == 0) throw ConfigError("eval.k", "must be >= 1");
    if (eval.batch == 0) throw ConfigError("eval.batch", "must be >= 1");
    if (!eval.pool_all && !eval.pool_rand) throw ConfigError("eval.pool", "must select at least one pool");
    if (threads == 0) throw ConfigError("run.threads", "must be >= 1");
  }
};

namespace detail {

template <class N>
N parse_num(const std::string& path, const std::string& text) {
  N v{};
  const char* b = text.data();
  const char* e = b + text.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) throw ConfigError(path, "cannot parse '" + text + "' as a number");
  if constexpr (std::is_floating_point_v<N>) {
    if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
  }
  return v;
}

inline bool parse_bool(const std::string& path, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(path, "expected a boolean, got '" + text + "'");
}

inline nn::LrMode parse_lr_mode(const std::string& path, const std::string& text) {
  if (text == "constant") return nn::LrMode::constant;
  if (text == "cosine") return nn::LrMode::cosine;
  throw ConfigError(path, "unknown schedule '" + text + "' (constant, cosine)");
}

inline std::string lr_mode_name(nn::LrMode m) { return m == nn::LrMode::cosine ? "cosine" : "constant"; }

inline std::string pool_name(const eval::EvalOptions& o) {
  return o.pool_all && o.pool_rand ? "both" : o.pool_all ? "all" : "rand";
}

inline void set_pool(eval::EvalOptions& o, const std::string& path, const std::string& text) {
  if (text == "both") o.pool_all = o.pool_rand = true;
  else if (text == "all") o.pool_all = true, o.pool_rand = false;
  else if (text == "rand") o.pool_all = false, o.pool_rand = true;
  else throw ConfigError(path, "unknown pool '" + text + "' (rand, all, both)");
}

}  // namespace detail

/// One addressable configuration field, `section.key`.
struct Field {
  std::string path;
  std::function<void(const std::string&)> set;
  std::function<nlohmann::json()> get;
};

inline std::vector<Field> fields(RunConfig& c) {
  std::vector<Field> f;
  auto size = [&f](std::string path, std::size_t& ref) {
    f.push_back({path, [path, &ref](const std::string& s) { ref = detail::parse_num<std::size_t>(path, s); },
                 [&ref] { return nlohmann::json(ref); }});
  };
  auto real = [&f](std::string path, double& ref) {
    f.push_back({path, [path, &ref](const std::string& s) { ref = detail::parse_num<double>(path, s); },
                 [&ref] { return nlohmann::json(ref); }});
  };
  auto flag = [&f](std::string path, bool& ref) {
    f.push_back({path, [path, &ref](const std::string& s) { ref = detail::parse_bool(path, s); },
                 [&ref] { return nlohmann::json(ref); }});
  };
  auto lr_mode = [&f](std::string path, nn::LrMode& ref) {
    f.push_back({path, [path, &ref](const std::string& s) { ref = detail::parse_lr_mode(path, s); },
                 [&ref] { return nlohmann::json(detail::lr_mode_name(ref)); }});
  };

  f.push_back({"data.schema",
               [&c](const std::string& s) {
                 if (s != "ratings" && s != "sessions") throw ConfigError("data.schema", "expected ratings or sessions");
                 c.schema = data::parse_schema(s);
               },
               [&c] { return nlohmann::json(std::string(data::to_string(c.schema))); }});
  size("data.window", c.window);
  f.push_back({"data.reward_scheme",
               [&c](const std::string& s) {
                 if (s == "rating_threshold") c.reward.scheme = data::RewardSpec::Scheme::rating_threshold;
                 else if (s == "event_valued") c.reward.scheme = data::RewardSpec::Scheme::event_valued;
                 else throw ConfigError("data.reward_scheme", "expected rating_threshold or event_valued");
               },
               [&c] {
                 return nlohmann::json(c.reward.scheme == data::RewardSpec::Scheme::rating_threshold ? "rating_threshold"
                                                                                                     : "event_valued");
               }});
  real("data.reward_threshold", c.reward.threshold);
  real("data.reward_click", c.reward.click);
  real("data.reward_purchase", c.reward.purchase);
  real("data.split_train", c.split.train);
  real("data.split_validation", c.split.validation);
  real("data.split_test", c.split.test);

  size("policy.embed_dim", c.policy.embed_dim);
  size("policy.blocks", c.policy.blocks);
  size("policy.heads", c.policy.heads);
  size("policy.ffn_mult", c.policy.ffn_mult);
  size("policy.head_layers", c.policy.head_layers);
  real("policy.head_init_std", c.policy.head_init_std);

  size("critic.hidden", c.critic.hidden);
  size("critic.lstm_layers", c.critic.lstm_layers);
  size("critic.head_layers", c.critic.head_layers);

  real("pretrain.lr", c.pretrain.lr);
  size("pretrain.batch", c.pretrain.batch);
  size("pretrain.epochs", c.pretrain.epochs);
  real("pretrain.dropout", c.pretrain.dropout);
  lr_mode("pretrain.lr_mode", c.pretrain.lr_mode);
  size("pretrain.val_every", c.pretrain.val_every);

  real("crr.gamma", c.crr.gamma);
  f.push_back({"crr.filter", [&c](const std::string& s) { c.crr.filter.kind = train::parse_filter(s); },
               [&c] { return nlohmann::json(std::string(train::to_string(c.crr.filter.kind))); }});
  real("crr.beta", c.crr.filter.beta);
  real("crr.clip", c.crr.filter.clip);
  size("crr.m", c.crr.m);
  size("crr.m_target", c.crr.m_target);
  real("crr.tau", c.crr.tau);
  size("crr.batch", c.crr.batch);
  size("crr.iterations", c.crr.iterations);
  size("crr.cadence", c.crr.cadence);
  real("crr.lr", c.crr.lr);
  lr_mode("crr.lr_mode", c.crr.lr_mode);
  real("crr.dropout", c.crr.dropout);
  size("crr.action_count", c.crr.action_count);

  size("eval.k", c.eval.k);
  size("eval.negatives", c.eval.negatives);
  f.push_back({"eval.pool", [&c](const std::string& s) { detail::set_pool(c.eval, "eval.pool", s); },
               [&c] { return nlohmann::json(detail::pool_name(c.eval)); }});
  size("eval.batch", c.eval.batch);
  flag("eval.split_events", c.eval.split_events);

  f.push_back({"run.seed", [&c](const std::string& s) { c.seed = detail::parse_num<std::uint64_t>("run.seed", s); },
               [&c] { return nlohmann::json(c.seed); }});
  size("run.threads", c.threads);
  return f;
}

/// Applies `value` to the field at `path`; unknown paths are config errors.
inline void set_field(RunConfig& c, const std::string& path, const std::string& value) {
  for (auto& f : fields(c)) {
    if (f.path == path) {
      f.set(value);
      return;
    }
  }
  throw ConfigError(path, "unknown configuration field");
}

/// `section.key=value` as given to `--set`.
inline void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like section.key=value");
  const std::string_view text(assignment);
  set_field(c, std::string(data::detail::trim(text.substr(0, eq))), std::string(data::detail::trim(text.substr(eq + 1))));
}

/// Reads an INI file (sections map to the first path component).
inline void load_ini(RunConfig& c, const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("--config", "file not found: " + path.string());
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("--config", e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(section, "top-level keys are not allowed; put them in a [section]");
    for (const auto& [key, value] : body) set_field(c, section + "." + key, value.get_value<std::string>());
  }
}

/// Every field, defaults included, after resolution.
inline nlohmann::json to_json(const RunConfig& c) {
  RunConfig copy = c;
  nlohmann::json j = nlohmann::json::object();
  for (auto& f : fields(copy)) {
    const auto dot = f.path.find('.');
    j[f.path.substr(0, dot)][f.path.substr(dot + 1)] = f.get();
  }
  j["derived"] = {{"policy_seed", c.policy.seed}, {"critic_seed", c.critic.seed}, {"pretrain_seed", c.pretrain.seed},
                  {"crr_seed", c.crr.seed}};
  return j;
}

/// Writes the config back as INI, one `key = value` line per field.
inline void write_ini(std::ostream& out, const RunConfig& c) {
  auto j = to_json(c);
  j.erase("derived");
  for (const auto& [section, body] : j.items()) {
    out << '[' << section << "]\n";
    for (const auto& [key, value] : body.items()) out << key << " = " << (value.is_string() ? value.get<std::string>() : value.dump()) << '\n';
    out << '\n';
  }
}

/// Hex SHA-1 of "blob <size>\0<content>", the object id git assigns a file.
inline std::string git_blob_hash(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot read input for hashing", file.string());
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string header = "blob " + std::to_string(body.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, body.data(), body.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

/// Blob hashes of a file, or of every regular file under a directory keyed by
/// relative path.
inline nlohmann::json content_hash(const fs::path& p) {
  if (fs::is_regular_file(p)) return git_blob_hash(p);
  if (!fs::is_directory(p)) throw ConfigError(p.string(), "input path does not exist");
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(p))
    if (e.is_regular_file()) files[fs::relative(e.path(), p).generic_string()] = git_blob_hash(e.path());
  return files;
}

/// Relative outputs land under $CRRT_OUTPUT_ROOT when it is set.
inline fs::path resolve_output(const fs::path& out) {
  if (out.is_absolute()) return out;
  if (const char* root = std::getenv("CRRT_OUTPUT_ROOT"); root && *root) return fs::path(root) / out;
  return out;
}

/// run_manifest.json: command, resolved config, seed and input hashes.
inline void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& c,
                           const std::vector<std::pair<std::string, fs::path>>& inputs, const nlohmann::json& extra = {}) {
  nlohmann::json m;
  m["format"] = "crrt-run";
  m["command"] = command;
  m["seed"] = c.seed;
  m["config"] = to_json(c);
  auto& in = m["inputs"] = nlohmann::json::object();
  for (const auto& [name, path] : inputs) in[name] = {{"path", path.generic_string()}, {"sha1", content_hash(path)}};
  if (!extra.is_null()) m["extra"] = extra;
  fs::create_directories(dir);
  std::ofstream out(dir / "run_manifest.json");
  out << m.dump(2) << '\n';
  if (!out) throw DataError("cannot write manifest", (dir / "run_manifest.json").string());
}

}  // namespace crrt::cli
