#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "crrt/networks/critic.hpp"
#include "crrt/networks/policy.hpp"
#include "crrt/networks/target.hpp"
#include "crrt/nn/gradcheck.hpp"
#include "crrt/nn/optim.hpp"

using namespace crrt;
using namespace crrt::networks;

namespace {

PolicyConfig small_policy(std::size_t items = 12, std::size_t window = 5) {
  PolicyConfig c;
  c.num_items = items;
  c.window = window;
  c.embed_dim = 8;
  c.blocks = 2;
  c.heads = 2;
  c.ffn_mult = 2;
  c.seed = 17;
  return c;
}

CriticConfig small_critic(std::size_t items = 12, std::size_t window = 5) {
  CriticConfig c;
  c.num_items = items;
  c.window = window;
  c.embed_dim = 8;
  c.hidden = 6;
  c.seed = 23;
  return c;
}

std::vector<int> random_ids(std::size_t n, std::size_t items, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, static_cast<int>(items));
  std::vector<int> ids(n);
  for (auto& x : ids) x = d(rng);
  return ids;
}

template <class T>
std::vector<nn::Parameter<T>*> trainable(nn::ParameterStore<T>& store) {
  std::vector<nn::Parameter<T>*> out;
  for (auto* p : store.pointers())
    if (p->trainable) out.push_back(p);
  return out;
}

}  // namespace

TEST(Policy, CausalMaskHidesFuturePositions) {
  PolicyNetwork<double> net(small_policy());
  std::mt19937_64 rng(1);
  const std::size_t l = 5, d = 8;
  for (int trial = 0; trial < 20; ++trial) {
    auto ids = random_ids(l, 12, rng);
    const std::size_t j = 1 + trial % (l - 1);
    auto other = ids;
    other[j] = (other[j] % 12) + 1;
    nn::Graph<double> g1(false), g2(false);
    auto a = net.features(g1, ids, 1).value();
    auto b = net.features(g2, other, 1).value();
    for (std::size_t p = 0; p < j; ++p)
      for (std::size_t c = 0; c < d; ++c) EXPECT_EQ(a.at(p, c), b.at(p, c)) << "position " << p << " changed by " << j;
    bool later_changed = false;
    for (std::size_t c = 0; c < d; ++c) later_changed |= a.at(j, c) != b.at(j, c);
    EXPECT_TRUE(later_changed);
  }
}

TEST(Policy, DistributionContractOnRandomStates) {
  PolicyNetwork<float> net(small_policy(30, 6));
  std::mt19937_64 rng(2);
  auto ids = random_ids(1000 * 6, 30, rng);
  auto z = net.forward(ids, 1000);
  ASSERT_EQ(z.rows(), 1000u);
  ASSERT_EQ(z.cols(), 30u);
  for (std::size_t r = 0; r < 1000; ++r) {
    auto p = nn::softmax<double>(std::vector<double>(z.row(r).begin(), z.row(r).end()));
    double s = 0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Policy, FreshNetworkIsNearUniform) {
  auto cfg = small_policy(50, 8);
  cfg.head_init_std = 1e-3;
  PolicyNetwork<float> net(cfg);
  std::mt19937_64 rng(3);
  for (int k = 0; k < 20; ++k) {
    auto ids = random_ids(8, 50, rng);
    for (float p : net.distribution(StateSequence(ids))) EXPECT_NEAR(p, 1.0 / 50, 0.1 / 50);
  }
}

TEST(Policy, DeterministicAndStateless) {
  PolicyNetwork<float> a(small_policy()), b(small_policy());
  std::mt19937_64 rng(4);
  auto ids = random_ids(5 * 7, 12, rng);
  auto z1 = a.forward(ids, 7);
  auto z2 = b.forward(ids, 7);
  auto z3 = a.forward(ids, 7);
  EXPECT_EQ(z1, z2);
  EXPECT_EQ(z1, z3);
  // batching does not mix windows
  auto single = a.forward(std::span<const int>(ids).subspan(10, 5), 1);
  for (std::size_t c = 0; c < 12; ++c) EXPECT_FLOAT_EQ(single[c], z1.at(2, c));
}

TEST(Policy, PadPrefixIsAnOrdinaryToken) {
  PolicyNetwork<double> net(small_policy());
  auto p1 = net.distribution(StateSequence(std::vector<int>{0, 0, 3, 4, 5}));
  auto p2 = net.distribution(StateSequence(std::vector<int>{0, 2, 3, 4, 5}));
  double s1 = 0, s2 = 0;
  for (std::size_t i = 0; i < p1.size(); ++i) s1 += p1[i], s2 += p2[i];
  EXPECT_NEAR(s1, 1.0, 1e-12);
  EXPECT_NEAR(s2, 1.0, 1e-12);
  EXPECT_NE(p1, p2);
}

TEST(Policy, RejectsBadInputs) {
  PolicyNetwork<float> net(small_policy());
  EXPECT_THROW(net.distribution(StateSequence(std::vector<int>{0, 0, 0, 0, 13})), IndexError);
  EXPECT_THROW(net.distribution(StateSequence(std::vector<int>{1, 2, 3})), ContractError);
  EXPECT_THROW(net.set_dropout(1.0), ConfigError);
  std::mt19937_64 rng(5);
  EXPECT_THROW(net.sample(StateSequence(std::vector<int>{0, 0, 0, 0, 1}), 0, rng), ContractError);
}

TEST(PolicySample, DegenerateUniformAndDeterministic) {
  std::mt19937_64 rng(6);
  std::vector<double> one_hot(10, 0.0);
  one_hot[6] = 1.0;
  for (int a : PolicyNetwork<double>::sample_items<double>(one_hot, 500, rng)) EXPECT_EQ(a, 7);

  const std::size_t I = 20, m = 100000;
  std::vector<double> uniform(I, 1.0 / I);
  auto draws = PolicyNetwork<double>::sample_items<double>(uniform, m, rng);
  std::vector<double> count(I, 0);
  for (int a : draws) {
    ASSERT_GE(a, 1);
    ASSERT_LE(a, static_cast<int>(I));
    count[a - 1] += 1;
  }
  const double p = 1.0 / I, sd = std::sqrt(m * p * (1 - p));
  for (double c : count) EXPECT_NEAR(c, m * p, 5 * sd);

  PolicyNetwork<float> net(small_policy());
  StateSequence s(std::vector<int>{0, 1, 2, 3, 4});
  std::mt19937_64 r1(7), r2(7);
  EXPECT_EQ(net.sample(s, 64, r1), net.sample(s, 64, r2));
}

TEST(Critic, FiniteDeterministicAndValidated) {
  PolicyNetwork<float> pol(small_policy());
  ValueNetwork<float> q(small_critic(), pol.embedding().value);
  std::mt19937_64 rng(8);
  for (int k = 0; k < 50; ++k) {
    StateSequence s(random_ids(5, 12, rng));
    const int a = 1 + k % 12;
    const float v = q.value(s, a);
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_EQ(v, q.value(s, a));
  }
  StateSequence s(std::vector<int>{0, 0, 1, 2, 3});
  EXPECT_THROW(q.value(s, 0), IndexError);
  EXPECT_THROW(q.value(s, 13), IndexError);
  EXPECT_THROW(ValueNetwork<float>(small_critic(13), pol.embedding().value), ContractError);
}

TEST(Critic, EmbeddingFrozenAcrossHundredSteps) {
  PolicyNetwork<float> pol(small_policy());
  ValueNetwork<float> q(small_critic(), pol.embedding().value);
  const auto before = q.parameters()[0].value;
  ASSERT_EQ(q.parameters()[0].name, "embedding");
  ASSERT_FALSE(q.parameters()[0].trainable);
  nn::Adam<float> adam;
  std::mt19937_64 rng(9);
  for (int step = 0; step < 100; ++step) {
    auto ids = random_ids(5 * 16, 12, rng);
    std::vector<int> acts(16);
    for (auto& a : acts) a = 1 + static_cast<int>(rng() % 12);
    nn::Graph<float> g;
    auto loss = nn::mse(q.q(g, ids, 16, acts), std::vector<float>(16, 1.0f));
    g.backward(loss);
    adam.step(q.parameters().pointers(), 1e-2);
  }
  EXPECT_EQ(q.parameters()[0].value, before);
  EXPECT_EQ(pol.embedding().value, before);
}

TEST(Gradients, OneBlockPolicy) {
  auto cfg = small_policy(7, 4);
  cfg.blocks = 1;
  cfg.embed_dim = 6;
  cfg.head_init_std = 0.5;
  PolicyNetwork<double> net(cfg);
  std::mt19937_64 rng(10);
  auto ids = random_ids(4 * 3, 7, rng);
  std::vector<int> targets{0, 3, 6};
  auto params = net.parameters().pointers();
  const double err = nn::finite_diff_check(params, [&](nn::Graph<double>& g) {
    return nn::cross_entropy(net.logits(g, ids, 3), targets);
  });
  EXPECT_LE(err, 1e-4);
}

TEST(Gradients, OneLayerCritic) {
  auto cfg = small_critic(7, 4);
  cfg.lstm_layers = 1;
  cfg.embed_dim = 5;
  std::mt19937_64 rng(11);
  auto emb = nn::init::normal<double>({8, 5}, 0.5, rng);
  ValueNetwork<double> q(cfg, emb);
  auto ids = random_ids(4 * 3, 7, rng);
  std::vector<int> acts{1, 4, 7};
  auto params = trainable(q.parameters());
  const double err = nn::finite_diff_check(params, [&](nn::Graph<double>& g) {
    return nn::mse(q.q(g, ids, 3, acts), std::vector<double>{0.5, -1.0, 2.0});
  });
  EXPECT_LE(err, 1e-4);
}

TEST(SoftUpdate, Examples) {
  nn::ParameterStore<double> online, target;
  online.add("w", nn::Tensor<double>({3}, 1.0));
  target.add("w", nn::Tensor<double>({3}, 0.0));
  soft_update(target, online, 0.01);
  for (double v : target[0].value.values()) EXPECT_DOUBLE_EQ(v, 0.01);
  soft_update(target, online, 1.0);
  EXPECT_EQ(target[0].value, online[0].value);

  nn::ParameterStore<double> wrong;
  wrong.add("w", nn::Tensor<double>({4}, 0.0));
  EXPECT_THROW(soft_update(wrong, online, 0.5), ContractError);
  EXPECT_THROW(soft_update(target, online, 0.0), ContractError);
}

TEST(SoftUpdate, GeometricDecayTowardsFrozenOnline) {
  PolicyNetwork<double> a(small_policy());
  auto cfg = small_policy();
  cfg.seed = 99;
  TargetPair<PolicyNetwork<double>> pair(PolicyNetwork<double>(cfg), 0.05);
  pair.online = a;
  auto gap = [&] {
    double worst = 0;
    for (std::size_t i = 0; i < pair.online.parameters().size(); ++i) {
      const auto& o = pair.online.parameters()[i].value;
      const auto& t = pair.target.parameters()[i].value;
      for (std::size_t k = 0; k < o.size(); ++k) worst = std::max(worst, std::abs(o[k] - t[k]));
    }
    return worst;
  };
  double g0 = gap();
  ASSERT_GT(g0, 0.0);
  for (int n = 1; n <= 50; ++n) {
    pair.update();
    EXPECT_NEAR(gap(), g0 * std::pow(0.95, n), 1e-5 * g0 * std::pow(0.95, n));
  }
}

TEST(Checkpoint, NetworksRoundTripBitIdentical) {
  const auto dir = std::filesystem::temp_directory_path() / "crrt_test_networks";
  std::filesystem::create_directories(dir);
  PolicyNetwork<float> pol(small_policy());
  ValueNetwork<float> q(small_critic(), pol.embedding().value);
  pol.save((dir / "policy.ckpt").string());
  q.to_checkpoint().save((dir / "critic.ckpt").string());
  auto pol2 = PolicyNetwork<float>::load((dir / "policy.ckpt").string());
  auto q2 = ValueNetwork<float>::from_checkpoint(nn::Checkpoint::load((dir / "critic.ckpt").string()));
  std::mt19937_64 rng(12);
  auto ids = random_ids(5 * 4, 12, rng);
  EXPECT_EQ(pol.forward(ids, 4), pol2.forward(ids, 4));
  std::vector<int> acts{1, 5, 9, 12};
  nn::Graph<float> g1(false), g2(false);
  EXPECT_EQ(q.q(g1, ids, 4, acts).value(), q2.q(g2, ids, 4, acts).value());
  EXPECT_FALSE(q2.parameters()[0].trainable);
  EXPECT_THROW(ValueNetwork<float>::from_checkpoint(pol.to_checkpoint()), DataError);
  std::filesystem::remove_all(dir);
}
