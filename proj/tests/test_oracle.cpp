#include <gtest/gtest.h>

#include <map>
#include <random>
#include <sstream>

#include "crrt/data/transitions.hpp"
#include "crrt/oracle/synthetic.hpp"
#include "crrt/oracle/tabular.hpp"

using namespace crrt;
using namespace crrt::oracle;

namespace {

TabularMdp single(double r, double gamma) {
  TabularMdp m;
  m.states = m.actions = 1;
  m.P = {{{1.0}}};
  m.r = {{r}};
  m.gamma = gamma;
  return m;
}

}  // namespace

TEST(Tabular, GeometricSeriesAndZeroReward) {
  EXPECT_NEAR(exact_policy_eval(single(1.0, 0.5), {{1.0}})[0], 2.0, 1e-14);
  std::mt19937_64 rng(1);
  auto m = random_mdp(5, 4, 0.9, rng);
  for (auto& row : m.r)
    for (auto& x : row) x = 0;
  for (double v : exact_policy_eval(m, random_policy(5, 4, rng))) EXPECT_EQ(v, 0.0);
}

TEST(Tabular, BellmanIdentitiesOnRandomMdps) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    auto m = random_mdp(5, 4, 0.95, rng);
    auto pi = random_policy(5, 4, rng);
    auto v = exact_policy_eval(m, pi);
    EXPECT_LE(bellman_residual(m, pi, v), 1e-10);
    auto a = exact_advantage(m, pi);
    auto q = exact_q(m, pi);
    for (std::size_t s = 0; s < 5; ++s) {
      double sum = 0;
      for (std::size_t k = 0; k < 4; ++k) {
        sum += pi[s][k] * a[s][k];
        EXPECT_NEAR(a[s][k], q[s][k] - v[s], 1e-12);
      }
      EXPECT_LE(std::abs(sum), 1e-10);
    }
  }
}

TEST(Tabular, OptimalPolicyHasZeroOnPolicyAdvantage) {
  std::mt19937_64 rng(3);
  auto m = random_mdp(5, 4, 0.9, rng);
  auto star = optimal_policy(m);
  auto a = exact_advantage(m, star);
  for (std::size_t s = 0; s < 5; ++s) {
    for (std::size_t k = 0; k < 4; ++k) {
      if (star[s][k] == 1.0) {
        EXPECT_NEAR(a[s][k], 0.0, 1e-10);
      }
      EXPECT_LE(a[s][k], 1e-9);  // no improving action at the optimum
    }
  }
  EXPECT_GE(policy_return(m, star), policy_return(m, epsilon_greedy(star, 0.3)));
}

TEST(Tabular, SymmetricRewardsGiveZeroAdvantage) {
  std::mt19937_64 rng(4);
  auto m = random_mdp(4, 3, 0.8, rng);
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t a = 0; a < 3; ++a) {
      m.r[s][a] = double(s);
      m.P[s][a] = m.P[s][0];
    }
  TabularPolicy uniform(4, std::vector<double>(3, 1.0 / 3));
  for (const auto& row : exact_advantage(m, uniform))
    for (double x : row) EXPECT_NEAR(x, 0.0, 1e-12);
}

TEST(Tabular, MonteCarloAgreesWithSolve) {
  std::mt19937_64 rng(5);
  auto m = random_mdp(5, 3, 0.7, rng);
  auto pi = random_policy(5, 3, rng);
  auto v = exact_policy_eval(m, pi);
  // 10^4-step truncation: gamma^10000 is 0 in double precision
  const std::size_t rollouts = 4000, steps = 10000;
  std::vector<std::discrete_distribution<std::size_t>> act, nxt;
  for (std::size_t s = 0; s < 5; ++s) {
    act.emplace_back(pi[s].begin(), pi[s].end());
    for (std::size_t a = 0; a < 3; ++a) nxt.emplace_back(m.P[s][a].begin(), m.P[s][a].end());
  }
  for (std::size_t s0 : {0u, 3u}) {
    double sum = 0, sq = 0;
    for (std::size_t k = 0; k < rollouts; ++k) {
      std::size_t s = s0;
      double g = 0, disc = 1;
      for (std::size_t h = 0; h < steps && disc > 1e-300; ++h) {
        const std::size_t a = act[s](rng);
        g += disc * m.r[s][a];
        disc *= m.gamma;
        s = nxt[s * 3 + a](rng);
      }
      sum += g;
      sq += g * g;
    }
    const double mean = sum / rollouts;
    const double se = std::sqrt((sq / rollouts - mean * mean) / rollouts);
    EXPECT_NEAR(mean, v[s0], 3 * se + 1e-12);
  }
}

TEST(Tabular, LoggedDataMatchesBehavior) {
  std::mt19937_64 rng(6);
  auto m = random_mdp(5, 4, 0.9, rng);
  auto behavior = epsilon_greedy(optimal_policy(m), 0.3);
  auto data = generate_logged_data(m, behavior, 2000, 50, rng);
  ASSERT_EQ(data.size(), 100000u);
  std::vector<std::vector<double>> count(5, std::vector<double>(4, 0));
  std::vector<double> visits(5, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& t = data[i];
    count[t.state[0] - 1][t.action - 1] += 1;
    visits[t.state[0] - 1] += 1;
    EXPECT_EQ(t.terminal, i % 50 == 49);
    EXPECT_EQ(t.reward, m.r[t.state[0] - 1][t.action - 1]);
    if (!t.terminal) {
      EXPECT_EQ(data[i + 1].state, t.next);
    }
  }
  for (std::size_t s = 0; s < 5; ++s) {
    if (visits[s] < 1e4) continue;
    for (std::size_t a = 0; a < 4; ++a) {
      const double p = behavior[s][a];
      EXPECT_NEAR(count[s][a] / visits[s], p, 5 * std::sqrt(p * (1 - p) / visits[s]) + 1e-12);
    }
  }
  std::mt19937_64 r1(9), r2(9);
  auto d1 = generate_logged_data(m, behavior, 10, 5, r1);
  auto d2 = generate_logged_data(m, behavior, 10, 5, r2);
  for (std::size_t i = 0; i < d1.size(); ++i) EXPECT_EQ(d1[i].action, d2[i].action);
}

TEST(Tabular, JsonRoundTripAndValidation) {
  std::mt19937_64 rng(7);
  auto m = random_mdp(3, 2, 0.5, rng);
  nlohmann::json j = m;
  auto back = j.get<TabularMdp>();
  EXPECT_EQ(back.P, m.P);
  EXPECT_EQ(back.r, m.r);
  j["P"][0][0][0] = 5.0;
  EXPECT_THROW(j.get<TabularMdp>(), ContractError);
  EXPECT_THROW(exact_policy_eval(single(1, 1.0), {{1.0}}), ContractError);
}

namespace {

struct Follow {
  std::size_t total = 0, followed = 0;
};

Follow rule_following(const std::vector<data::InteractionRecord>& rs, const AffineRule& rule) {
  std::map<std::string, int> last;
  Follow f;
  for (const auto& r : rs) {
    const int item = std::stoi(r.item);
    auto it = last.find(r.actor);
    if (it != last.end()) {
      ++f.total;
      f.followed += item == rule(it->second);
    }
    if (r.rating >= 3.5) last[r.actor] = item;
  }
  return f;
}

}  // namespace

TEST(Synthetic, RuleFollowingFrequency) {
  SessionSpec spec;
  spec.rule = {50, 7, 3};
  spec.actors = 500;
  spec.length = 20;
  spec.noise = 0.2;
  std::mt19937_64 rng(8);
  auto rs = generate_synthetic_sessions(spec, rng);
  ASSERT_EQ(rs.size(), 10000u);
  auto f = rule_following(rs, spec.rule);
  // Only records after a positive item can follow the rule; count those.
  const double p = 0.8 + 0.2 / 50.0;
  const double sd = std::sqrt(p * (1 - p) / double(f.total));
  EXPECT_NEAR(double(f.followed) / double(f.total), p, 3 * sd);
}

TEST(Synthetic, NoiselessRuleIsPerfectlyPredictable) {
  SessionSpec spec;
  spec.rule = {40, 3, 1};
  spec.actors = 50;
  spec.length = 10;
  spec.noise = 0.0;
  std::mt19937_64 rng(9);
  auto rs = generate_synthetic_sessions(spec, rng);
  auto f = rule_following(rs, spec.rule);
  EXPECT_EQ(f.followed, f.total);
  EXPECT_EQ(f.total, 50u * 9u);
}

TEST(Synthetic, CsvRoundTripAndDeterminism) {
  for (auto schema : {data::LogSchema::ratings, data::LogSchema::sessions}) {
    SessionSpec spec;
    spec.rule = {30, 7, 2};
    spec.actors = 20;
    spec.length = 6;
    spec.schema = schema;
    std::mt19937_64 r1(10), r2(10);
    auto a = generate_synthetic_sessions(spec, r1);
    std::ostringstream s1, s2;
    write_log(s1, a, schema);
    write_log(s2, generate_synthetic_sessions(spec, r2), schema);
    EXPECT_EQ(s1.str(), s2.str());
    std::istringstream in(s1.str());
    auto back = data::parse_log(in, schema);
    ASSERT_EQ(back.size(), a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(back[i].item, a[i].item);
      EXPECT_EQ(back[i].timestamp, a[i].timestamp);
      if (schema == data::LogSchema::ratings) {
        EXPECT_EQ(back[i].rating, a[i].rating);
      }
    }
  }
}
