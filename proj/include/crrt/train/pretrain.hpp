#pragma once

#include <algorithm>
#include <numeric>
#include <ostream>
#include <random>
#include <vector>

#include "crrt/data/dataset_io.hpp"
#include "crrt/eval/metrics.hpp"
#include "crrt/networks/policy.hpp"
#include "crrt/nn/optim.hpp"

namespace crrt::train {

struct PretrainConfig {
  double lr = 1e-3;
  std::size_t batch = 128;
  std::size_t epochs = 30;
  double dropout = 0.1;
  nn::LrMode lr_mode = nn::LrMode::constant;
  std::size_t val_every = 1;  // epochs between validation passes
  std::uint64_t seed = 0;
  eval::EvalOptions eval;  // validation metric settings (all pool by default)

  PretrainConfig() {
    eval.pool_rand = false;
  }

  void validate() const {
    if (!(lr > 0)) throw ConfigError("pretrain.lr", "must be > 0");
    if (batch == 0) throw ConfigError("pretrain.batch", "must be >= 1");
    if (epochs == 0) throw ConfigError("pretrain.epochs", "must be >= 1");
    if (!(dropout >= 0 && dropout < 1)) throw ConfigError("pretrain.dropout", "must lie in [0, 1)");
    if (val_every == 0) throw ConfigError("pretrain.val_every", "must be >= 1");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double val_hr10 = 0, val_ndcg10 = 0;
  bool evaluated = false;
};

template <class T>
struct PretrainResult {
  networks::PolicyNetwork<T> best;
  std::size_t best_epoch = 0;
  double best_hr10 = -1;
  std::size_t steps = 0;  // optimizer steps taken
  std::vector<EpochRecord> curve;
};

/// Validation HR@10 / NDCG@10 of `policy` on the positive-reward samples.
template <class T>
eval::MetricReport validate_policy(networks::PolicyNetwork<T>& policy, std::span<const Transition> validation,
                                   const data::HistoryIndex& history, const eval::EvalOptions& opt) {
  return eval::evaluate(eval::scorer_of(policy), validation, history, policy.num_items(), opt);
}

/// Stage one: next-item cross-entropy on the positive-reward transitions,
/// validated every `val_every` epochs; keeps the best-HR@10 epoch (earliest on ties).
template <class T>
PretrainResult<T> pretrain(networks::PolicyNetwork<T> policy, std::span<const Transition> train,
                           std::span<const Transition> validation, const data::HistoryIndex& history,
                           const PretrainConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  std::vector<const Transition*> positive;
  for (const auto& t : train)
    if (t.reward > 0) positive.push_back(&t);
  if (positive.empty()) throw DataError("pretrain: no positive-reward training transitions");

  policy.set_dropout(cfg.dropout);
  std::mt19937_64 shuffle_rng(cfg.seed);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  nn::Adam<T> adam;
  auto params = policy.parameters().pointers();
  const std::size_t per_epoch = (positive.size() + cfg.batch - 1) / cfg.batch;
  const nn::LrSchedule schedule{cfg.lr, static_cast<std::int64_t>(per_epoch * cfg.epochs), cfg.lr_mode};

  PretrainResult<T> result;
  result.best = policy;
  std::vector<std::size_t> order(positive.size());
  std::iota(order.begin(), order.end(), 0);
  std::int64_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch);
      std::vector<int> ids, targets;
      for (std::size_t q = b0; q < b1; ++q) {
        const Transition& t = *positive[order[q]];
        ids.insert(ids.end(), t.state.items().begin(), t.state.items().end());
        targets.push_back(t.action - 1);
      }
      nn::Graph<T> g;
      auto z = policy.logits(g, ids, b1 - b0, cfg.dropout > 0 ? &dropout_rng : nullptr);
      auto loss = nn::cross_entropy(z, targets);
      g.backward(loss);
      adam.step(params, schedule.at(step++));
      loss_sum += static_cast<double>(loss.value().item()) * double(b1 - b0);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / double(order.size());
    if (epoch % cfg.val_every == 0 || epoch == cfg.epochs) {
      auto rep = validate_policy(policy, validation, history, cfg.eval);
      rec.evaluated = true;
      rec.val_hr10 = rep.hr10 ? *rep.hr10 : *rep.hr10_rand;
      rec.val_ndcg10 = rep.ndcg10 ? *rep.ndcg10 : *rep.ndcg10_rand;
      if (rec.val_hr10 > result.best_hr10) {
        result.best_hr10 = rec.val_hr10;
        result.best_epoch = epoch;
        result.best = policy;
      }
    }
    if (log) {
      *log << "epoch " << epoch << " loss " << rec.train_loss;
      if (rec.evaluated) *log << " val_hr10 " << rec.val_hr10 << " val_ndcg10 " << rec.val_ndcg10;
      *log << '\n';
    }
    result.curve.push_back(rec);
  }
  result.best.set_dropout(policy.config().dropout);
  result.steps = static_cast<std::size_t>(step);
  return result;
}

/// Value copy of the item embedding table ((I+1) x d).
template <class T>
nn::Tensor<T> export_embeddings(const networks::PolicyNetwork<T>& policy) {
  return policy.embedding().value;
}

inline void write_pretrain_curve(std::ostream& out, std::span<const EpochRecord> curve) {
  out << "epoch,train_loss,val_hr10,val_ndcg10\n";
  for (const auto& r : curve) {
    out << r.epoch << ',' << data::format_number(r.train_loss) << ',';
    if (r.evaluated) out << data::format_number(r.val_hr10) << ',' << data::format_number(r.val_ndcg10);
    else out << ',';
    out << '\n';
  }
}

}  // namespace crrt::train
