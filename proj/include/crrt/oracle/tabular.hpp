#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "crrt/data/types.hpp"

namespace crrt::oracle {

using Table = std::vector<std::vector<double>>;

/// Finite MDP with explicit transition tensor P[s][a][s'].
struct TabularMdp {
  std::size_t states = 0, actions = 0;
  std::vector<std::vector<std::vector<double>>> P;
  Table r;
  double gamma = 0.9;
  std::vector<double> mu0;  // empty = uniform

  void validate() const {
    if (states == 0 || actions == 0) throw ContractError("mdp: needs at least one state and action");
    if (!(gamma >= 0 && gamma < 1)) throw ContractError("mdp: gamma must lie in [0, 1)");
    if (P.size() != states || r.size() != states) throw ContractError("mdp: table sizes disagree with state count");
    for (std::size_t s = 0; s < states; ++s) {
      if (P[s].size() != actions || r[s].size() != actions) throw ContractError("mdp: table sizes disagree with action count");
      for (std::size_t a = 0; a < actions; ++a) {
        if (P[s][a].size() != states) throw ContractError("mdp: P row has wrong length");
        double sum = 0;
        for (double p : P[s][a]) {
          if (!(p >= 0)) throw ContractError("mdp: negative transition probability");
          sum += p;
        }
        if (std::abs(sum - 1) > 1e-12) throw ContractError("mdp: P[s][a] does not sum to 1");
        if (!std::isfinite(r[s][a])) throw ContractError("mdp: reward not finite");
      }
    }
    if (!mu0.empty() && mu0.size() != states) throw ContractError("mdp: mu0 has wrong length");
  }

  std::vector<double> initial() const { return mu0.empty() ? std::vector<double>(states, 1.0 / double(states)) : mu0; }
};

/// pi[s][a]; rows are distributions over actions.
using TabularPolicy = Table;

inline void validate_policy(const TabularMdp& m, const TabularPolicy& pi) {
  if (pi.size() != m.states) throw ContractError("policy: wrong state count");
  for (const auto& row : pi) {
    if (row.size() != m.actions) throw ContractError("policy: wrong action count");
    double sum = 0;
    for (double p : row) {
      if (!(p >= 0)) throw ContractError("policy: negative probability");
      sum += p;
    }
    if (std::abs(sum - 1) > 1e-12) throw ContractError("policy: row does not sum to 1");
  }
}

/// V^pi from (I - gamma P^pi) V = r^pi.
inline std::vector<double> exact_policy_eval(const TabularMdp& m, const TabularPolicy& pi) {
  m.validate();
  validate_policy(m, pi);
  const auto n = static_cast<Eigen::Index>(m.states);
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (std::size_t s = 0; s < m.states; ++s) {
    for (std::size_t a = 0; a < m.actions; ++a) {
      b(s) += pi[s][a] * m.r[s][a];
      for (std::size_t t = 0; t < m.states; ++t) A(s, t) -= m.gamma * pi[s][a] * m.P[s][a][t];
    }
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible()) throw NumericError("exact_policy_eval", "singular Bellman system");
  Eigen::VectorXd v = lu.solve(b);
  return {v.data(), v.data() + n};
}

/// Q = r + gamma P V^pi.
inline Table q_from_v(const TabularMdp& m, const std::vector<double>& v) {
  Table q(m.states, std::vector<double>(m.actions));
  for (std::size_t s = 0; s < m.states; ++s)
    for (std::size_t a = 0; a < m.actions; ++a) {
      double e = 0;
      for (std::size_t t = 0; t < m.states; ++t) e += m.P[s][a][t] * v[t];
      q[s][a] = m.r[s][a] + m.gamma * e;
    }
  return q;
}

inline Table exact_q(const TabularMdp& m, const TabularPolicy& pi) { return q_from_v(m, exact_policy_eval(m, pi)); }

/// A = Q - V.
inline Table exact_advantage(const TabularMdp& m, const TabularPolicy& pi) {
  const auto v = exact_policy_eval(m, pi);
  Table q = q_from_v(m, v);
  for (std::size_t s = 0; s < m.states; ++s)
    for (auto& x : q[s]) x -= v[s];
  return q;
}

/// max_s |V(s) - (r^pi + gamma P^pi V)(s)|.
inline double bellman_residual(const TabularMdp& m, const TabularPolicy& pi, const std::vector<double>& v) {
  const Table q = q_from_v(m, v);
  double worst = 0;
  for (std::size_t s = 0; s < m.states; ++s) {
    double rhs = 0;
    for (std::size_t a = 0; a < m.actions; ++a) rhs += pi[s][a] * q[s][a];
    worst = std::max(worst, std::abs(v[s] - rhs));
  }
  return worst;
}

/// Expected discounted return from mu0.
inline double policy_return(const TabularMdp& m, const TabularPolicy& pi) {
  const auto v = exact_policy_eval(m, pi);
  const auto mu = m.initial();
  double j = 0;
  for (std::size_t s = 0; s < m.states; ++s) j += mu[s] * v[s];
  return j;
}

/// Greedy deterministic policy from value iteration (ties to the lowest action).
inline TabularPolicy optimal_policy(const TabularMdp& m, double tol = 1e-12, std::size_t max_iter = 100000) {
  m.validate();
  std::vector<double> v(m.states, 0.0);
  for (std::size_t it = 0; it < max_iter; ++it) {
    const Table q = q_from_v(m, v);
    double delta = 0;
    for (std::size_t s = 0; s < m.states; ++s) {
      const double best = *std::max_element(q[s].begin(), q[s].end());
      delta = std::max(delta, std::abs(best - v[s]));
      v[s] = best;
    }
    if (delta < tol) break;
  }
  const Table q = q_from_v(m, v);
  TabularPolicy pi(m.states, std::vector<double>(m.actions, 0.0));
  for (std::size_t s = 0; s < m.states; ++s) pi[s][std::max_element(q[s].begin(), q[s].end()) - q[s].begin()] = 1.0;
  return pi;
}

/// (1 - eps) on `base`'s action distribution plus eps uniform.
inline TabularPolicy epsilon_greedy(const TabularPolicy& base, double eps) {
  TabularPolicy pi = base;
  for (auto& row : pi)
    for (auto& p : row) p = (1 - eps) * p + eps / double(row.size());
  return pi;
}

template <class Rng>
TabularMdp random_mdp(std::size_t states, std::size_t actions, double gamma, Rng& rng) {
  TabularMdp m;
  m.states = states;
  m.actions = actions;
  m.gamma = gamma;
  std::gamma_distribution<double> g(1.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  m.P.assign(states, std::vector<std::vector<double>>(actions, std::vector<double>(states)));
  m.r.assign(states, std::vector<double>(actions));
  for (std::size_t s = 0; s < states; ++s)
    for (std::size_t a = 0; a < actions; ++a) {
      double sum = 0;
      for (auto& p : m.P[s][a]) sum += (p = g(rng));
      for (auto& p : m.P[s][a]) p /= sum;
      // force an exact unit sum on the last entry
      double rest = 0;
      for (std::size_t t = 0; t + 1 < states; ++t) rest += m.P[s][a][t];
      m.P[s][a][states - 1] = std::max(0.0, 1.0 - rest);
      m.r[s][a] = u(rng);
    }
  return m;
}

template <class Rng>
TabularPolicy random_policy(std::size_t states, std::size_t actions, Rng& rng) {
  std::gamma_distribution<double> g(1.0, 1.0);
  TabularPolicy pi(states, std::vector<double>(actions));
  for (auto& row : pi) {
    double sum = 0;
    for (auto& p : row) sum += (p = g(rng));
    for (auto& p : row) p /= sum;
    double rest = 0;
    for (std::size_t a = 0; a + 1 < actions; ++a) rest += row[a];
    row[actions - 1] = std::max(0.0, 1.0 - rest);
  }
  return pi;
}

/// Episodes from mu0 under `behavior`; state s is encoded as the window [s+1]
/// and action a as item a+1. The last step of each episode is terminal.
template <class Rng>
std::vector<Transition> generate_logged_data(const TabularMdp& m, const TabularPolicy& behavior, std::size_t episodes,
                                             std::size_t horizon, Rng& rng) {
  m.validate();
  validate_policy(m, behavior);
  if (horizon == 0) throw ContractError("generate_logged_data: horizon must be >= 1");
  const auto mu = m.initial();
  std::discrete_distribution<std::size_t> start(mu.begin(), mu.end());
  std::vector<std::discrete_distribution<std::size_t>> act, step;
  for (std::size_t s = 0; s < m.states; ++s) {
    act.emplace_back(behavior[s].begin(), behavior[s].end());
    for (std::size_t a = 0; a < m.actions; ++a) step.emplace_back(m.P[s][a].begin(), m.P[s][a].end());
  }
  std::vector<Transition> out;
  out.reserve(episodes * horizon);
  for (std::size_t e = 0; e < episodes; ++e) {
    std::size_t s = start(rng);
    for (std::size_t h = 0; h < horizon; ++h) {
      const std::size_t a = act[s](rng);
      const std::size_t next = step[s * m.actions + a](rng);
      Transition t;
      t.state = StateSequence(std::vector<int>{static_cast<int>(s + 1)});
      t.action = static_cast<int>(a + 1);
      t.reward = m.r[s][a];
      t.next = StateSequence(std::vector<int>{static_cast<int>(next + 1)});
      t.terminal = h + 1 == horizon;
      t.actor = static_cast<int>(e);
      t.timestamp = static_cast<std::int64_t>(h);
      out.push_back(std::move(t));
      s = next;
    }
  }
  return out;
}

inline void to_json(nlohmann::json& j, const TabularMdp& m) {
  j = {{"states", m.states}, {"actions", m.actions}, {"gamma", m.gamma}, {"P", m.P}, {"r", m.r}, {"mu0", m.mu0}};
}

inline void from_json(const nlohmann::json& j, TabularMdp& m) {
  m.states = j.at("states");
  m.actions = j.at("actions");
  m.gamma = j.at("gamma");
  m.P = j.at("P").get<decltype(m.P)>();
  m.r = j.at("r").get<Table>();
  m.mu0 = j.value("mu0", std::vector<double>{});
  m.validate();
}

}  // namespace crrt::oracle
