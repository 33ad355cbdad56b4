#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "crrt/cli/config.hpp"
#include "crrt/data/dataset_io.hpp"
#include "crrt/oracle/synthetic.hpp"
#include "crrt/oracle/tabular.hpp"
#include "crrt/train/crr.hpp"
#include "crrt/train/pretrain.hpp"
#include "crrt/verify/suites.hpp"

namespace fs = std::filesystem;
using namespace crrt;
using json = nlohmann::json;

namespace {

enum Exit : int { kOk = 0, kFailed = 1, kConfig = 2, kData = 3, kNumeric = 4 };

/// Options every subcommand accepts.
struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "INI run configuration");
    cmd->add_option("--set", overrides, "override a field, section.key=value (repeatable)");
    cmd->add_option("--seed", seed, "run seed (overrides run.seed)");
    cmd->add_option("--threads", threads, "worker cap; 1 is the bitwise-reproducible mode");
  }

  /// File, then --set, then --seed/--threads; validated before any compute.
  cli::RunConfig load() const {
    cli::RunConfig c;
    if (!config.empty()) cli::load_ini(c, config);
    for (const auto& o : overrides) cli::apply_override(c, o);
    if (seed) c.seed = *seed;
    if (threads) c.threads = *threads;
    c.resolve();
    c.validate();
    Eigen::setNbThreads(static_cast<int>(c.threads));
    return c;
  }

  std::vector<std::pair<std::string, fs::path>> config_input() const {
    if (config.empty()) return {};
    return {{"config", config}};
  }
};

void require_exists(const std::string& flag, const fs::path& p) {
  if (!fs::exists(p)) throw ConfigError(flag, "path not found: " + p.string());
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("cannot write", path.string());
}

template <class F>
void write_text(const fs::path& path, F&& body) {
  std::ofstream out(path);
  body(out);
  if (!out) throw DataError("cannot write", path.string());
}

json report_json(const eval::MetricReport& r) { return r; }

// ---------------------------------------------------------------------------

int cmd_ingest(const Common& common, const std::string& in, const std::string& out_arg) {
  auto cfg = common.load();
  require_exists("--in", in);
  const fs::path out = cli::resolve_output(out_arg);
  auto records = data::parse_log(in, cfg.schema);
  auto ds = data::build_dataset(records, cfg.split, cfg.window, cfg.reward, cfg.schema);
  data::write_dataset(ds, out);
  auto inputs = common.config_input();
  inputs.emplace_back("log", in);
  cli::write_manifest(out, "ingest", cfg, inputs,
                      {{"records", records.size()}, {"items", ds.num_items()}, {"train", ds.train.size()},
                       {"validation", ds.validation.size()}, {"test", ds.test.size()}});
  std::cout << "records " << records.size() << " items " << ds.num_items() << " transitions "
            << ds.train.size() + ds.validation.size() + ds.test.size() << " (train " << ds.train.size() << ", validation "
            << ds.validation.size() << ", test " << ds.test.size() << ")\n";
  return kOk;
}

networks::PolicyConfig policy_config(const cli::RunConfig& cfg, const data::Dataset& ds) {
  auto pc = cfg.policy;
  pc.num_items = ds.num_items();
  pc.window = ds.window;
  return pc;
}

int cmd_pretrain(const Common& common, const std::string& data_dir, const std::string& out_arg) {
  auto cfg = common.load();
  require_exists("--data", data_dir);
  const fs::path out = cli::resolve_output(out_arg);
  auto ds = data::read_dataset(data_dir);
  auto history = ds.history();
  networks::PolicyNetwork<float> policy(policy_config(cfg, ds));
  auto res = train::pretrain(std::move(policy), ds.train, ds.validation, history, cfg.pretrain, &std::cerr);
  fs::create_directories(out);
  res.best.save((out / "policy.ckpt").string());
  {
    nn::Checkpoint emb;
    emb.meta["kind"] = "embeddings";
    emb.put("embedding", train::export_embeddings(res.best));
    emb.save((out / "embeddings.ckpt").string());
  }
  write_text(out / "pretrain_curve.csv", [&](std::ostream& o) { train::write_pretrain_curve(o, res.curve); });
  write_json(out / "summary.json",
             {{"best_epoch", res.best_epoch}, {"best_val_hr10", res.best_hr10}, {"optimizer_steps", res.steps}});
  auto inputs = common.config_input();
  inputs.emplace_back("data", data_dir);
  cli::write_manifest(out, "pretrain", cfg, inputs);
  std::cout << "best epoch " << res.best_epoch << " val_hr10 " << res.best_hr10 << '\n';
  return kOk;
}

struct CrrArgs {
  std::string data, init, resume, out;
  bool no_init = false;
};

int cmd_train_crr(const Common& common, const CrrArgs& a) {
  auto cfg = common.load();
  require_exists("--data", a.data);
  if (a.resume.empty() && a.init.empty() == !a.no_init)
    throw ConfigError("--init", "give exactly one of --init <checkpoint> or --no-init (or --resume <state>)");
  if (!a.init.empty()) require_exists("--init", a.init);
  if (!a.resume.empty()) require_exists("--resume", a.resume);
  const fs::path out = cli::resolve_output(a.out);
  auto ds = data::read_dataset(a.data);
  auto history = ds.history();

  nn::Checkpoint resume_ck;
  networks::PolicyNetwork<float> policy;
  if (!a.resume.empty()) {
    resume_ck = nn::Checkpoint::load(a.resume);
    if (resume_ck.meta.value("kind", "") != "crr-state") throw DataError("not a CRR training state", a.resume);
    policy = networks::PolicyNetwork<float>(resume_ck.meta.at("policy_config").get<networks::PolicyConfig>());
  } else if (!a.init.empty()) {
    policy = networks::PolicyNetwork<float>::load(a.init);
  } else {
    policy = networks::PolicyNetwork<float>(policy_config(cfg, ds));
  }
  if (policy.num_items() != ds.num_items() || policy.window() != ds.window)
    throw DataError("policy checkpoint does not match the dataset's catalog size or window");
  // The saved policy keeps the dropout rate it was initialized with.
  const double init_dropout = a.resume.empty() ? policy.config().dropout : resume_ck.meta.at("init_dropout").get<double>();

  auto cc = cfg.critic;
  cc.num_items = ds.num_items();
  cc.window = ds.window;
  cc.embed_dim = policy.config().embed_dim;
  networks::ValueNetwork<float> critic(cc, policy.embedding().value);

  auto state = train::init_state(std::move(policy), std::move(critic), cfg.crr);
  if (!a.resume.empty()) train::load_state(resume_ck, state);

  fs::create_directories(out);
  auto save_all = [&](std::size_t) {
    auto ck = train::save_state(state);
    ck.meta["init_dropout"] = init_dropout;
    ck.save((out / "state.ckpt").string());
    write_text(out / "crr_curve.csv", [&](std::ostream& o) { train::write_crr_curve(o, state.curve); });
  };
  train::CrrHooks hooks;
  hooks.on_checkpoint = save_all;
  hooks.log = &std::cerr;
  train::run_crr(state, ds.train, cfg.crr, train::metric_validator<float>(ds.validation, history, cfg.crr.eval), hooks);
  save_all(state.iteration);

  auto best = state.best;
  best.set_dropout(init_dropout);
  best.save((out / "policy.ckpt").string());
  state.critic.online.to_checkpoint().save((out / "critic.ckpt").string());
  write_json(out / "summary.json", {{"iterations", state.iteration},
                                    {"best_iteration", state.best_iteration},
                                    {"best_val_hr10", std::isfinite(state.best_hr10) ? json(state.best_hr10) : json()},
                                    {"skipped_actor_steps", state.skipped_actor_steps},
                                    {"initialization", !a.resume.empty() ? "resume" : a.no_init ? "random" : "checkpoint"}});
  auto inputs = common.config_input();
  inputs.emplace_back("data", a.data);
  if (!a.init.empty()) inputs.emplace_back("init", a.init);
  if (!a.resume.empty()) inputs.emplace_back("resume", a.resume);
  cli::write_manifest(out, "train-crr", cfg, inputs);
  std::cout << "iterations " << state.iteration << " best iteration " << state.best_iteration;
  if (std::isfinite(state.best_hr10)) std::cout << " val_hr10 " << state.best_hr10;
  std::cout << '\n';
  return kOk;
}

struct EvalArgs {
  std::string checkpoint, data, out, pool, split = "test";
};

int cmd_evaluate(const Common& common, const EvalArgs& a) {
  auto cfg = common.load();
  if (!a.pool.empty()) cli::detail::set_pool(cfg.eval, "--pool", a.pool);
  if (a.split != "test" && a.split != "validation") throw ConfigError("--split", "expected test or validation");
  require_exists("--checkpoint", a.checkpoint);
  require_exists("--data", a.data);
  const fs::path out = cli::resolve_output(a.out);
  auto ds = data::read_dataset(a.data);
  auto history = ds.history();
  auto policy = networks::PolicyNetwork<float>::load(a.checkpoint);
  if (policy.num_items() != ds.num_items() || policy.window() != ds.window)
    throw DataError("policy checkpoint does not match the dataset's catalog size or window");
  const auto& samples = a.split == "test" ? ds.test : ds.validation;
  std::vector<eval::SampleResult> per_sample;
  auto report = eval::evaluate(eval::scorer_of(policy), samples, history, ds.num_items(), cfg.eval, &per_sample);
  fs::create_directories(out);
  json j = report_json(report);
  j["split"] = a.split;
  j["pool"] = cli::detail::pool_name(cfg.eval);
  j["seed"] = cfg.eval.seed;
  write_json(out / "report.json", j);
  write_text(out / "samples.csv", [&](std::ostream& o) { eval::write_samples_csv(o, per_sample); });
  auto inputs = common.config_input();
  inputs.emplace_back("checkpoint", a.checkpoint);
  inputs.emplace_back("data", a.data);
  cli::write_manifest(out, "evaluate", cfg, inputs);
  std::cout << j.dump() << '\n';
  return kOk;
}

struct SynthArgs {
  std::string kind, out, schema = "ratings";
  std::size_t items = 200, actors = 2000, length = 20, mult = 7, shift = 13;
  double noise = 0.2;
  std::size_t states = 5, actions = 4, episodes = 0, horizon = 50;
  double gamma = 0.9, epsilon = 0.3;
};

int cmd_synth(const Common& common, const SynthArgs& a) {
  auto cfg = common.load();
  const fs::path out = cli::resolve_output(a.out);
  std::mt19937_64 rng(cfg.seed);
  json params;
  fs::create_directories(out);
  if (a.kind == "sessions") {
    oracle::SessionSpec spec;
    spec.rule = {a.items, a.mult, a.shift};
    spec.actors = a.actors;
    spec.length = a.length;
    spec.noise = a.noise;
    if (a.schema != "ratings" && a.schema != "sessions") throw ConfigError("--schema", "expected ratings or sessions");
    spec.schema = data::parse_schema(a.schema);
    const auto records = oracle::generate_synthetic_sessions(spec, rng);
    write_text(out / "log.csv", [&](std::ostream& o) { oracle::write_log(o, records, spec.schema); });
    params = {{"kind", "sessions"}, {"items", a.items},   {"mult", a.mult},     {"shift", a.shift},
              {"actors", a.actors}, {"length", a.length}, {"noise", a.noise}, {"schema", a.schema}};
  } else if (a.kind == "tabular") {
    if (!(a.gamma >= 0 && a.gamma < 1)) throw ConfigError("--gamma", "must lie in [0, 1)");
    if (!(a.epsilon >= 0 && a.epsilon <= 1)) throw ConfigError("--epsilon", "must lie in [0, 1]");
    auto mdp = oracle::random_mdp(a.states, a.actions, a.gamma, rng);
    write_json(out / "mdp.json", mdp);
    params = {{"kind", "tabular"}, {"states", a.states}, {"actions", a.actions}, {"gamma", a.gamma}};
    if (a.episodes > 0) {
      // Logged data as a processed dataset: states and actions share ids 1..max(S, A).
      const auto behavior = oracle::epsilon_greedy(oracle::optimal_policy(mdp), a.epsilon);
      data::Dataset ds;
      ds.window = 1;
      for (std::size_t i = 1; i <= std::max(a.states, a.actions); ++i) ds.catalog.intern(std::to_string(i));
      ds.train = oracle::generate_logged_data(mdp, behavior, a.episodes, a.horizon, rng);
      data::write_dataset(ds, out / "data");
      params.update({{"episodes", a.episodes}, {"horizon", a.horizon}, {"epsilon", a.epsilon}});
    }
  } else {
    throw ConfigError("--kind", "expected sessions or tabular");
  }
  cli::write_manifest(out, "synth", cfg, common.config_input(), params);
  std::cout << "wrote " << out.string() << '\n';
  return kOk;
}

int cmd_verify(const Common& common, const std::string& suite) {
  common.load();  // rejects bad flags and config files like every other command
  std::vector<verify::SuiteReport> reports;
  const bool all = suite == "all";
  if (all || suite == "gradients") reports.push_back(verify::gradient_suite());
  if (all || suite == "metrics") reports.push_back(verify::metric_suite());
  if (all || suite == "tabular") reports.push_back(verify::tabular_suite());
  if (all || suite == "transitions") reports.push_back(verify::transition_suite());
  if (reports.empty()) throw ConfigError("--suite", "expected gradients, metrics, tabular, transitions or all");
  bool ok = true;
  for (const auto& r : reports) {
    std::cout << r;
    ok = ok && r.passed();
  }
  std::cout << (ok ? "PASS" : "FAIL") << '\n';
  return ok ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crrt: two-stage offline reinforcement learning for sequential recommendation"};
  app.require_subcommand(1);
  std::vector<std::pair<CLI::App*, std::function<int()>>> commands;
  Common common;

  std::string in, out, data_dir;
  auto* ingest = app.add_subcommand("ingest", "parse, dedupe, split and build transitions");
  common.attach(ingest);
  ingest->add_option("--in", in, "raw interaction log (CSV)")->required();
  ingest->add_option("--out", out, "processed dataset directory")->required();
  commands.emplace_back(ingest, [&] { return cmd_ingest(common, in, out); });

  auto* pretrain = app.add_subcommand("pretrain", "stage one: next-item supervised training");
  common.attach(pretrain);
  pretrain->add_option("--data", data_dir, "processed dataset directory")->required();
  pretrain->add_option("--out", out, "run directory")->required();
  commands.emplace_back(pretrain, [&] { return cmd_pretrain(common, data_dir, out); });

  CrrArgs crr;
  auto* train_crr = app.add_subcommand("train-crr", "stage two: critic regularized regression");
  common.attach(train_crr);
  train_crr->add_option("--data", crr.data, "processed dataset directory")->required();
  auto* init_opt = train_crr->add_option("--init", crr.init, "stage-one policy checkpoint");
  train_crr->add_flag("--no-init", crr.no_init, "random initialization (CRR-only ablation)")->excludes(init_opt);
  train_crr->add_option("--resume", crr.resume, "continue from a saved training state");
  train_crr->add_option("--out", crr.out, "run directory")->required();
  commands.emplace_back(train_crr, [&] { return cmd_train_crr(common, crr); });

  EvalArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "HR@10 / NDCG@10 of a policy checkpoint");
  common.attach(evaluate);
  evaluate->add_option("--checkpoint", ev.checkpoint, "policy checkpoint")->required();
  evaluate->add_option("--data", ev.data, "processed dataset directory")->required();
  evaluate->add_option("--pool", ev.pool, "rand, all or both (default: eval.pool)");
  evaluate->add_option("--split", ev.split, "test or validation");
  evaluate->add_option("--out", ev.out, "report directory")->required();
  commands.emplace_back(evaluate, [&] { return cmd_evaluate(common, ev); });

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "synthetic generators");
  common.attach(synth);
  synth->add_option("--kind", sy.kind, "sessions or tabular")->required();
  synth->add_option("--out", sy.out, "output directory")->required();
  synth->add_option("--items", sy.items, "catalog size (sessions)");
  synth->add_option("--actors", sy.actors, "number of actors (sessions)");
  synth->add_option("--length", sy.length, "records per actor (sessions)");
  synth->add_option("--noise", sy.noise, "probability of a uniform next item (sessions)");
  synth->add_option("--mult", sy.mult, "rule multiplier (sessions)");
  synth->add_option("--shift", sy.shift, "rule offset (sessions)");
  synth->add_option("--schema", sy.schema, "ratings or sessions");
  synth->add_option("--states", sy.states, "states (tabular)");
  synth->add_option("--actions", sy.actions, "actions (tabular)");
  synth->add_option("--gamma", sy.gamma, "discount (tabular)");
  synth->add_option("--episodes", sy.episodes, "logged episodes; 0 writes only the MDP (tabular)");
  synth->add_option("--horizon", sy.horizon, "steps per logged episode (tabular)");
  synth->add_option("--epsilon", sy.epsilon, "exploration around the optimal policy (tabular)");
  commands.emplace_back(synth, [&] { return cmd_synth(common, sy); });

  std::string suite;
  auto* verify_cmd = app.add_subcommand("verify", "run oracle and property suites");
  common.attach(verify_cmd);
  verify_cmd->add_option("--suite", suite, "gradients, metrics, tabular, transitions or all")->required();
  commands.emplace_back(verify_cmd, [&] { return cmd_verify(common, suite); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  try {
    for (auto& [cmd, run] : commands)
      if (cmd->parsed()) return run();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailed;
  }
  return kFailed;
}
