#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "crrt/data/dataset_io.hpp"
#include "crrt/eval/metrics.hpp"
#include "crrt/networks/critic.hpp"
#include "crrt/networks/policy.hpp"
#include "crrt/networks/target.hpp"
#include "crrt/nn/checkpoint.hpp"
#include "crrt/nn/optim.hpp"

namespace crrt::train {

enum class FilterKind { exponential, binary, constant };

inline std::string_view to_string(FilterKind k) {
  switch (k) {
    case FilterKind::exponential: return "exponential";
    case FilterKind::binary: return "binary";
    default: return "constant";
  }
}

inline FilterKind parse_filter(std::string_view s) {
  if (s == "exponential") return FilterKind::exponential;
  if (s == "binary") return FilterKind::binary;
  if (s == "constant" || s == "bc") return FilterKind::constant;
  throw ConfigError("crr.filter", "unknown filter '" + std::string(s) + "' (exponential, binary, constant)");
}

/// `constant` is f = 1: plain behavior cloning through the same code path.
struct FilterSpec {
  FilterKind kind = FilterKind::exponential;
  double beta = 1.0;
  double clip = 20.0;
};

/// exponential: min(exp(A / beta), clip); binary: 1[A > 0]; constant: 1.
inline double filter_weight(double advantage, const FilterSpec& f) {
  switch (f.kind) {
    case FilterKind::binary: return advantage > 0 ? 1.0 : 0.0;
    case FilterKind::constant: return 1.0;
    default: return std::min(std::exp(advantage / f.beta), f.clip);
  }
}

struct CrrConfig {
  double gamma = 0.6;
  FilterSpec filter;
  std::size_t m = 4;         // advantage samples
  std::size_t m_target = 4;  // TD-target samples
  double tau = 0.01;
  std::size_t batch = 128;
  std::size_t iterations = 5000;
  std::size_t cadence = 1000;  // validation and checkpoint period; 0 disables validation
  double lr = 1e-4;
  nn::LrMode lr_mode = nn::LrMode::cosine;
  double dropout = 0.2;
  std::size_t action_count = 0;  // > 0 restricts the action space to items 1..action_count
  std::uint64_t seed = 0;
  eval::EvalOptions eval;

  CrrConfig() { eval.pool_rand = false; }

  void validate() const {
    if (!(gamma >= 0 && gamma < 1)) throw ConfigError("crr.gamma", "must lie in [0, 1)");
    if (!(filter.beta > 0)) throw ConfigError("crr.beta", "must be > 0");
    if (!(filter.clip > 0)) throw ConfigError("crr.clip", "must be > 0");
    if (m == 0) throw ConfigError("crr.m", "must be >= 1");
    if (m_target == 0) throw ConfigError("crr.m_target", "must be >= 1");
    if (!(tau > 0 && tau <= 1)) throw ConfigError("crr.tau", "must lie in (0, 1]");
    if (batch == 0) throw ConfigError("crr.batch", "must be >= 1");
    if (!(lr > 0)) throw ConfigError("crr.lr", "must be > 0");
    if (!(dropout >= 0 && dropout < 1)) throw ConfigError("crr.dropout", "must lie in [0, 1)");
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream for (seed, iteration, purpose, element). Streams are
/// derived, never stored, so resuming needs no RNG state and per-element
/// draws do not depend on evaluation order.
inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t iteration, std::uint32_t purpose, std::uint64_t element = 0) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t v : {iteration, std::uint64_t{purpose}, element}) h = splitmix64(h ^ v);
  return std::mt19937_64(h);
}

enum Purpose : std::uint32_t { kBatch = 1, kAdvantage = 2, kTarget = 3, kDropout = 4 };

template <class T>
std::vector<int> state_ids(std::span<const Transition* const> batch, bool next) {
  std::vector<int> ids;
  for (const auto* t : batch) {
    auto s = next ? t->next.items() : t->state.items();
    ids.insert(ids.end(), s.begin(), s.end());
  }
  return ids;
}

}  // namespace detail

/// Action probabilities per row of `logits`, restricted to the first
/// `action_count` items when that is non-zero.
template <class T>
std::vector<std::vector<double>> action_probs(const nn::Tensor<T>& logits, std::size_t action_count) {
  const std::size_t n = action_count ? std::min(action_count, logits.cols()) : logits.cols();
  std::vector<std::vector<double>> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    std::vector<double> z(logits.row(r).begin(), logits.row(r).begin() + static_cast<std::ptrdiff_t>(n));
    out[r] = nn::softmax<double>(z);
  }
  return out;
}

/// Q for (state k, actions[k][j]) pairs; returns one row of values per state.
template <class T, class Critic>
std::vector<std::vector<double>> critic_values(Critic& critic, std::span<const int> ids, std::size_t batch,
                                               const std::vector<std::vector<int>>& actions) {
  nn::Graph<T> g(false);
  auto features = critic.encode(g, ids, batch);
  std::vector<int> rows, acts;
  for (std::size_t k = 0; k < batch; ++k)
    for (int a : actions[k]) rows.push_back(static_cast<int>(k)), acts.push_back(a);
  auto q = critic.q_values(g, features, rows, acts).value();
  std::vector<std::vector<double>> out(batch);
  std::size_t i = 0;
  for (std::size_t k = 0; k < batch; ++k)
    for (std::size_t j = 0; j < actions[k].size(); ++j) out[k].push_back(static_cast<double>(q[i++]));
  return out;
}

/// Draws `m` actions per state from `policy`, state k using stream rng_for(k).
template <class T>
std::vector<std::vector<int>> sample_actions(networks::PolicyNetwork<T>& policy, std::span<const int> ids, std::size_t batch,
                                             std::size_t m, std::size_t action_count,
                                             const std::function<std::mt19937_64(std::size_t)>& rng_for) {
  const auto probs = action_probs(policy.forward(ids, batch), action_count);
  std::vector<std::vector<int>> out(batch);
  for (std::size_t k = 0; k < batch; ++k) {
    auto rng = rng_for(k);
    out[k] = networks::PolicyNetwork<T>::template sample_items<double>(probs[k], m, rng);
  }
  return out;
}

/// A(s, a) = Q(s, a) - mean_j Q(s, a_j), a_j ~ pi(.|s); online networks only.
template <class T, class Critic>
std::vector<double> estimate_advantage(Critic& critic, networks::PolicyNetwork<T>& policy,
                                       std::span<const Transition* const> batch, std::size_t m,
                                       std::size_t action_count,
                                       const std::function<std::mt19937_64(std::size_t)>& rng_for) {
  if (m == 0) throw ContractError("estimate_advantage: m must be >= 1");
  const auto ids = detail::state_ids<T>(batch, false);
  auto acts = sample_actions(policy, ids, batch.size(), m, action_count, rng_for);
  for (std::size_t k = 0; k < batch.size(); ++k) acts[k].insert(acts[k].begin(), batch[k]->action);
  const auto q = critic_values<T>(critic, ids, batch.size(), acts);
  std::vector<double> adv(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    double baseline = 0;
    for (std::size_t j = 1; j <= m; ++j) baseline += q[k][j];
    adv[k] = q[k][0] - baseline / double(m);
  }
  return adv;
}

/// y = r for terminal transitions, else r + gamma * mean_j Q'(s', a'_j), a'_j ~ pi'(.|s').
template <class T, class Critic>
std::vector<double> td_target(Critic& target_critic, networks::PolicyNetwork<T>& target_policy,
                              std::span<const Transition* const> batch, double gamma, std::size_t m_target,
                              std::size_t action_count, const std::function<std::mt19937_64(std::size_t)>& rng_for) {
  if (m_target == 0) throw ContractError("td_target: m' must be >= 1");
  std::vector<double> y(batch.size());
  std::vector<const Transition*> live;
  std::vector<std::size_t> where;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    y[k] = batch[k]->reward;
    if (!batch[k]->terminal && gamma > 0) live.push_back(batch[k]), where.push_back(k);
  }
  if (live.empty()) return y;
  const auto ids = detail::state_ids<T>(live, true);
  auto acts = sample_actions(target_policy, ids, live.size(), m_target, action_count,
                             [&](std::size_t i) { return rng_for(where[i]); });
  const auto q = critic_values<T>(target_critic, ids, live.size(), acts);
  for (std::size_t i = 0; i < live.size(); ++i) {
    double mean = 0;
    for (double v : q[i]) mean += v;
    y[where[i]] += gamma * mean / double(m_target);
  }
  return y;
}

/// Loss -(1/b) sum_j w_j log pi(a_j | s_j) with constant weights; returns the loss value
/// and leaves gradients in the policy parameters (no optimizer step).
template <class T>
double actor_gradient(networks::PolicyNetwork<T>& policy, std::span<const Transition* const> batch,
                      std::span<const double> weights, std::size_t action_count, std::mt19937_64* dropout_rng) {
  const auto ids = detail::state_ids<T>(batch, false);
  std::vector<int> targets;
  std::vector<T> w;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    targets.push_back(batch[k]->action - 1);
    w.push_back(static_cast<T>(weights[k]));
  }
  nn::Graph<T> g;
  auto z = policy.logits(g, ids, batch.size(), dropout_rng);
  if (action_count && action_count < policy.num_items()) z = nn::slice_cols(z, 0, action_count);
  auto loss = nn::weighted_cross_entropy(z, targets, w);
  g.backward(loss);
  return static_cast<double>(loss.value().item());
}

/// One Adam step of the actor. Returns nullopt (and takes no step) when every
/// weight is zero.
template <class T>
std::optional<double> actor_step(networks::PolicyNetwork<T>& policy, nn::Adam<T>& adam, double lr,
                                 std::span<const Transition* const> batch, std::span<const double> weights,
                                 std::size_t action_count, std::mt19937_64* dropout_rng) {
  if (std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; })) return std::nullopt;
  const double loss = actor_gradient(policy, batch, weights, action_count, dropout_rng);
  adam.step(policy.parameters().pointers(), lr);
  return loss;
}

/// One Adam step on (1/b) sum_j (Q(s_j, a_j) - y_j)^2.
template <class T, class Critic>
double critic_step(Critic& critic, nn::Adam<T>& adam, double lr, std::span<const Transition* const> batch,
                   std::span<const double> y) {
  const auto ids = detail::state_ids<T>(batch, false);
  std::vector<int> rows, acts;
  for (std::size_t k = 0; k < batch.size(); ++k) rows.push_back(static_cast<int>(k)), acts.push_back(batch[k]->action);
  std::vector<T> targets(y.begin(), y.end());
  nn::Graph<T> g;
  auto q = critic.q_values(g, critic.encode(g, ids, batch.size()), rows, acts);
  auto loss = nn::mse(q, targets);
  try {
    g.backward(loss);
  } catch (const NumericError& e) {
    throw NumericError(e.op(), std::string("critic step diverged: ") + e.what());
  }
  adam.step(critic.parameters().pointers(), lr);
  return static_cast<double>(loss.value().item());
}

/// Advantage estimate and critic step sharing one critic forward pass: the
/// sampled-action Q values come from the same pre-update online critic that the
/// TD regression differentiates, so the result equals estimate_advantage
/// followed by critic_step.
template <class T, class Critic>
std::pair<std::vector<double>, double> advantage_and_critic_step(Critic& critic, nn::Adam<T>& adam, double lr,
                                                                 std::span<const Transition* const> batch,
                                                                 const std::vector<std::vector<int>>& sampled,
                                                                 std::span<const double> y) {
  const std::size_t b = batch.size();
  const auto ids = detail::state_ids<T>(batch, false);
  std::vector<int> rows, acts;
  for (std::size_t k = 0; k < b; ++k) rows.push_back(static_cast<int>(k)), acts.push_back(batch[k]->action);
  for (std::size_t k = 0; k < b; ++k)
    for (int a : sampled[k]) rows.push_back(static_cast<int>(k)), acts.push_back(a);
  nn::Graph<T> g;
  auto q = critic.q_values(g, critic.encode(g, ids, b), rows, acts);
  std::vector<int> logged(b);
  for (std::size_t k = 0; k < b; ++k) logged[k] = static_cast<int>(k);
  auto loss = nn::mse(nn::select_rows(q, logged), std::vector<T>(y.begin(), y.end()));
  const auto& Q = q.value();
  std::vector<double> adv(b);
  std::size_t i = b;
  for (std::size_t k = 0; k < b; ++k) {
    double baseline = 0;
    for (std::size_t j = 0; j < sampled[k].size(); ++j) baseline += static_cast<double>(Q[i++]);
    adv[k] = static_cast<double>(Q[k]) - baseline / double(sampled[k].size());
  }
  try {
    g.backward(loss);
  } catch (const NumericError& e) {
    throw NumericError(e.op(), std::string("critic step diverged: ") + e.what());
  }
  adam.step(critic.parameters().pointers(), lr);
  return {std::move(adv), static_cast<double>(loss.value().item())};
}

struct CrrRecord {
  std::size_t iteration = 0;  // 1-based
  double actor_loss = 0, critic_loss = 0, mean_weight = 0;
  std::optional<double> val_hr10, val_ndcg10;
};

inline void write_crr_curve(std::ostream& out, std::span<const CrrRecord> curve) {
  out << "iteration,actor_loss,critic_loss,mean_filter_weight,val_hr10,val_ndcg10\n";
  for (const auto& r : curve) {
    out << r.iteration << ',' << data::format_number(r.actor_loss) << ',' << data::format_number(r.critic_loss) << ','
        << data::format_number(r.mean_weight) << ',';
    if (r.val_hr10) out << data::format_number(*r.val_hr10) << ',' << data::format_number(*r.val_ndcg10);
    else out << ',';
    out << '\n';
  }
}

/// Validation scorer: returns (HR@10, NDCG@10) for a policy.
template <class T>
using Validator = std::function<std::pair<double, double>(networks::PolicyNetwork<T>&)>;

template <class T, class Critic>
struct CrrState {
  networks::TargetPair<networks::PolicyNetwork<T>> actor;
  networks::TargetPair<Critic> critic;
  nn::Adam<T> actor_opt, critic_opt;
  std::size_t iteration = 0;  // completed iterations
  networks::PolicyNetwork<T> best;
  double best_hr10 = -std::numeric_limits<double>::infinity();
  std::size_t best_iteration = 0;
  std::size_t skipped_actor_steps = 0;
  std::vector<CrrRecord> curve;
};

namespace detail {

template <class T>
void put_store(nn::Checkpoint& ck, const std::string& prefix, const nn::ParameterStore<T>& store) {
  for (const auto& p : store) ck.put(prefix + p.name, p.value);
}

template <class T>
void get_store(const nn::Checkpoint& ck, const std::string& prefix, nn::ParameterStore<T>& store) {
  for (auto& p : store) {
    auto v = ck.get<T>(prefix + p.name);
    if (v.shape() != p.value.shape()) throw DataError("state checkpoint: shape mismatch for " + prefix + p.name);
    p.value = std::move(v);
  }
}

template <class T>
void put_adam(nn::Checkpoint& ck, const std::string& prefix, const nn::Adam<T>& adam) {
  ck.meta[prefix + "steps"] = adam.steps();
  for (std::size_t i = 0; i < adam.first_moments().size(); ++i) {
    ck.put(prefix + "m." + std::to_string(i), adam.first_moments()[i]);
    ck.put(prefix + "v." + std::to_string(i), adam.second_moments()[i]);
  }
}

template <class T>
void get_adam(const nn::Checkpoint& ck, const std::string& prefix, nn::Adam<T>& adam, std::size_t count) {
  const auto steps = ck.meta.at(prefix + "steps").get<std::int64_t>();
  if (steps == 0) return;
  std::vector<nn::Tensor<T>> m, v;
  for (std::size_t i = 0; i < count; ++i) {
    m.push_back(ck.get<T>(prefix + "m." + std::to_string(i)));
    v.push_back(ck.get<T>(prefix + "v." + std::to_string(i)));
  }
  adam.restore(std::move(m), std::move(v), steps);
}

}  // namespace detail

/// Serializes everything needed to continue a run bit-exactly.
template <class T, class Critic>
nn::Checkpoint save_state(const CrrState<T, Critic>& s) {
  nn::Checkpoint ck;
  ck.meta["kind"] = "crr-state";
  ck.meta["iteration"] = s.iteration;
  ck.meta["best_hr10"] = s.best_hr10;
  ck.meta["best_iteration"] = s.best_iteration;
  ck.meta["skipped_actor_steps"] = s.skipped_actor_steps;
  ck.meta["policy_config"] = s.actor.online.config();
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& r : s.curve) {
    curve.push_back({r.iteration, r.actor_loss, r.critic_loss, r.mean_weight, r.val_hr10 ? nlohmann::json(*r.val_hr10) : nlohmann::json(),
                     r.val_ndcg10 ? nlohmann::json(*r.val_ndcg10) : nlohmann::json()});
  }
  ck.meta["curve"] = std::move(curve);
  detail::put_store(ck, "actor.online.", s.actor.online.parameters());
  detail::put_store(ck, "actor.target.", s.actor.target.parameters());
  detail::put_store(ck, "critic.online.", s.critic.online.parameters());
  detail::put_store(ck, "critic.target.", s.critic.target.parameters());
  detail::put_store(ck, "best.", s.best.parameters());
  detail::put_adam(ck, "adam.actor.", s.actor_opt);
  detail::put_adam(ck, "adam.critic.", s.critic_opt);
  return ck;
}

/// Restores a state saved by `save_state` into `s`, whose networks must have
/// been built with the same architecture.
template <class T, class Critic>
void load_state(const nn::Checkpoint& ck, CrrState<T, Critic>& s) {
  if (ck.meta.value("kind", "") != "crr-state") throw DataError("checkpoint is not a CRR training state");
  s.iteration = ck.meta.at("iteration");
  s.best_hr10 = ck.meta.at("best_hr10").is_null() ? -std::numeric_limits<double>::infinity() : ck.meta.at("best_hr10").get<double>();
  s.best_iteration = ck.meta.at("best_iteration");
  s.skipped_actor_steps = ck.meta.at("skipped_actor_steps");
  s.curve.clear();
  for (const auto& row : ck.meta.at("curve")) {
    CrrRecord r;
    r.iteration = row[0];
    r.actor_loss = row[1];
    r.critic_loss = row[2];
    r.mean_weight = row[3];
    if (!row[4].is_null()) r.val_hr10 = row[4].get<double>(), r.val_ndcg10 = row[5].get<double>();
    s.curve.push_back(r);
  }
  detail::get_store(ck, "actor.online.", s.actor.online.parameters());
  detail::get_store(ck, "actor.target.", s.actor.target.parameters());
  detail::get_store(ck, "critic.online.", s.critic.online.parameters());
  detail::get_store(ck, "critic.target.", s.critic.target.parameters());
  detail::get_store(ck, "best.", s.best.parameters());
  detail::get_adam(ck, "adam.actor.", s.actor_opt, s.actor.online.parameters().size());
  detail::get_adam(ck, "adam.critic.", s.critic_opt, s.critic.online.parameters().size());
}

/// Prepares a fresh run: embeddings frozen, targets copied from the online nets.
template <class T, class Critic>
CrrState<T, Critic> init_state(networks::PolicyNetwork<T> policy, Critic critic, const CrrConfig& cfg) {
  cfg.validate();
  policy.embedding().trainable = false;
  policy.set_dropout(cfg.dropout);
  CrrState<T, Critic> s;
  s.best = policy;
  s.actor = {std::move(policy), cfg.tau};
  s.critic = {std::move(critic), cfg.tau};
  return s;
}

struct CrrHooks {
  std::function<void(std::size_t)> on_checkpoint;  // called after each cadence block with the iteration
  std::size_t stop_after = 0;                       // > 0: return after this many iterations (interruption tests)
  std::ostream* log = nullptr;
};

/// Runs iterations s.iteration+1 .. cfg.iterations of Critic Regularized Regression.
template <class T, class Critic>
void run_crr(CrrState<T, Critic>& s, std::span<const Transition> data, const CrrConfig& cfg, const Validator<T>& validate,
             const CrrHooks& hooks = {}) {
  cfg.validate();
  if (data.empty()) throw DataError("train_crr: empty dataset");
  const nn::LrSchedule schedule{cfg.lr, static_cast<std::int64_t>(std::max<std::size_t>(cfg.iterations, 1)), cfg.lr_mode};
  std::vector<const Transition*> batch(cfg.batch);
  std::size_t done_now = 0;
  while (s.iteration < cfg.iterations) {
    const std::size_t it = s.iteration;  // 0-based index of this iteration
    auto pick = detail::stream(cfg.seed, it, detail::kBatch);
    std::uniform_int_distribution<std::size_t> uni(0, data.size() - 1);
    for (auto& p : batch) p = &data[uni(pick)];

    const auto ids = detail::state_ids<T>(batch, false);
    const auto sampled = sample_actions(s.actor.online, ids, batch.size(), cfg.m, cfg.action_count,
                                        [&](std::size_t k) { return detail::stream(cfg.seed, it, detail::kAdvantage, k); });
    const auto y = td_target<T>(s.critic.target, s.actor.target, batch, cfg.gamma, cfg.m_target, cfg.action_count,
                                [&](std::size_t k) { return detail::stream(cfg.seed, it, detail::kTarget, k); });
    const double lr = schedule.at(static_cast<std::int64_t>(it));
    const auto [adv, critic_loss] = advantage_and_critic_step(s.critic.online, s.critic_opt, lr, batch, sampled, y);
    std::vector<double> w(adv.size());
    double wsum = 0;
    for (std::size_t k = 0; k < adv.size(); ++k) wsum += (w[k] = filter_weight(adv[k], cfg.filter));
    auto drop = detail::stream(cfg.seed, it, detail::kDropout);
    auto actor_loss = actor_step(s.actor.online, s.actor_opt, lr, batch, w, cfg.action_count, cfg.dropout > 0 ? &drop : nullptr);
    if (!actor_loss) ++s.skipped_actor_steps;
    s.actor.update();
    s.critic.update();
    ++s.iteration;

    CrrRecord rec;
    rec.iteration = s.iteration;
    rec.actor_loss = actor_loss.value_or(0.0);
    rec.critic_loss = critic_loss;
    rec.mean_weight = wsum / double(w.size());
    const bool at_cadence = cfg.cadence > 0 && (s.iteration % cfg.cadence == 0 || s.iteration == cfg.iterations);
    if (at_cadence && validate) {
      auto [hr, ndcg] = validate(s.actor.online);
      rec.val_hr10 = hr;
      rec.val_ndcg10 = ndcg;
      if (hr > s.best_hr10) {
        s.best_hr10 = hr;
        s.best_iteration = s.iteration;
        s.best = s.actor.online;
      }
      if (hooks.log) *hooks.log << "iteration " << s.iteration << " val_hr10 " << hr << " val_ndcg10 " << ndcg << '\n';
    }
    if ((!validate || cfg.cadence == 0) && s.iteration == cfg.iterations) {  // no selection: keep the final policy
      s.best = s.actor.online;
      s.best_iteration = s.iteration;
    }
    s.curve.push_back(rec);
    if (at_cadence && hooks.on_checkpoint) hooks.on_checkpoint(s.iteration);
    if (hooks.stop_after && ++done_now >= hooks.stop_after) return;
  }
}

/// Validator computing HR@10/NDCG@10 on `validation` with `opt`.
template <class T>
Validator<T> metric_validator(std::span<const Transition> validation, const data::HistoryIndex& history, eval::EvalOptions opt) {
  return [validation, &history, opt](networks::PolicyNetwork<T>& policy) {
    auto rep = eval::evaluate(eval::scorer_of(policy), validation, history, policy.num_items(), opt);
    return std::pair<double, double>{rep.hr10 ? *rep.hr10 : *rep.hr10_rand, rep.ndcg10 ? *rep.ndcg10 : *rep.ndcg10_rand};
  };
}

/// End to end: init, K iterations, best policy. With K = 0 the result is the initial policy.
template <class T, class Critic>
CrrState<T, Critic> train_crr(networks::PolicyNetwork<T> init, Critic critic, std::span<const Transition> data,
                              const CrrConfig& cfg, const Validator<T>& validate, const CrrHooks& hooks = {}) {
  auto s = init_state(std::move(init), std::move(critic), cfg);
  run_crr(s, data, cfg, validate, hooks);
  return s;
}

/// pi(a|s) table of a length-1-window policy over `states` states and `actions` actions.
template <class T>
std::vector<std::vector<double>> tabular_policy(networks::PolicyNetwork<T>& policy, std::size_t states, std::size_t actions) {
  std::vector<int> ids(states);
  for (std::size_t s = 0; s < states; ++s) ids[s] = static_cast<int>(s + 1);
  return action_probs(policy.forward(ids, states), actions);
}

}  // namespace crrt::train
