// Acceptance runner: one PASS/FAIL line per criterion, with measured values
// and CPU time. Usage: acceptance [criterion ...]  (no arguments: all).

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <sys/resource.h>
#include <sys/wait.h>

#include "crrt/data/transitions.hpp"
#include "crrt/oracle/synthetic.hpp"
#include "crrt/oracle/tabular.hpp"
#include "crrt/train/crr.hpp"
#include "crrt/train/pretrain.hpp"
#include "crrt/verify/suites.hpp"

namespace fs = std::filesystem;
using namespace crrt;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double cpu_limit;  // seconds
  std::function<Outcome()> run;
};

// CPU time of this process and its finished children (the CLI runs).
double cpu_seconds() {
  double total = 0;
  for (int who : {RUSAGE_SELF, RUSAGE_CHILDREN}) {
    rusage u{};
    getrusage(who, &u);
    total += double(u.ru_utime.tv_sec + u.ru_stime.tv_sec) + 1e-6 * double(u.ru_utime.tv_usec + u.ru_stime.tv_usec);
  }
  return total;
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream o;
  o.precision(precision);
  o << v;
  return o.str();
}

Outcome from_suite(const verify::SuiteReport& r) {
  std::ostringstream o;
  for (const auto& c : r.checks) o << c.name << '=' << fmt(c.value, 3) << (c.pass ? "" : "(FAIL)") << ' ';
  std::cout << r;
  return {r.passed(), o.str()};
}

std::vector<const Transition*> pointers(std::span<const Transition> v) {
  std::vector<const Transition*> out;
  for (const auto& t : v) out.push_back(&t);
  return out;
}

// ---------------------------------------------------------------- criterion 5

Outcome crr_vs_bc_tabular() {
  const std::size_t S = 5, A = 4, seeds = 10;
  std::size_t wins = 0;
  std::ostringstream o;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    std::mt19937_64 rng(seed);
    const auto mdp = oracle::random_mdp(S, A, 0.9, rng);
    const auto behavior = oracle::epsilon_greedy(oracle::optimal_policy(mdp), 0.3);
    const auto logged = oracle::generate_logged_data(mdp, behavior, 400, 50, rng);  // 20k transitions

    networks::PolicyConfig pc;
    pc.num_items = S;  // ids 1..max(S, A)
    pc.window = 1;
    pc.embed_dim = 8;
    pc.blocks = 1;
    pc.heads = 1;
    pc.ffn_mult = 2;
    pc.seed = 100 + seed;
    const networks::PolicyNetwork<float> init(pc);

    train::CrrConfig c;
    c.gamma = 0.9;
    c.filter = {train::FilterKind::exponential, 1.0, 20.0};
    c.m = 4;
    c.m_target = 4;
    c.tau = 0.01;
    c.batch = 128;
    c.iterations = 3000;
    c.lr = 1e-3;
    c.dropout = 0;
    c.cadence = 0;
    c.action_count = A;
    c.seed = 200 + seed;
    auto crr = train::train_crr(init, networks::TabularCritic<float>(S, S), logged, c, {});
    c.filter = {train::FilterKind::constant, 1.0, 20.0};
    auto bc = train::train_crr(init, networks::TabularCritic<float>(S, S), logged, c, {});

    const double r_crr = oracle::policy_return(mdp, train::tabular_policy(crr.best, S, A));
    const double r_bc = oracle::policy_return(mdp, train::tabular_policy(bc.best, S, A));
    const double r_opt = oracle::policy_return(mdp, oracle::optimal_policy(mdp));
    const double r_beh = oracle::policy_return(mdp, behavior);
    wins += r_crr >= r_bc;
    std::cout << "  seed " << seed << "  crr " << fmt(r_crr) << "  f=1 " << fmt(r_bc) << "  behavior " << fmt(r_beh)
              << "  optimal " << fmt(r_opt) << std::endl;
  }
  o << "crr>=f1 in " << wins << "/" << seeds << " seeds (need 8)";
  return {wins >= 8, o.str()};
}

// ---------------------------------------------------------------- criterion 6

Outcome beta_limit() {
  oracle::SessionSpec spec;
  spec.rule = {40, 7, 13};
  spec.actors = 60;
  spec.length = 12;
  std::mt19937_64 rng(6);
  const auto ds = data::build_dataset(oracle::generate_synthetic_sessions(spec, rng), {0.8, 0.1, 0.1}, 8, {},
                                      data::LogSchema::ratings);
  networks::PolicyConfig pc;
  pc.num_items = ds.num_items();
  pc.window = ds.window;
  pc.embed_dim = 8;
  pc.blocks = 1;
  pc.heads = 2;
  pc.seed = 61;
  networks::PolicyNetwork<double> policy(pc);
  networks::CriticConfig cc;
  cc.num_items = ds.num_items();
  cc.window = ds.window;
  cc.embed_dim = 8;
  cc.hidden = 8;
  cc.seed = 62;
  networks::ValueNetwork<double> critic(cc, train::export_embeddings(policy));

  // fixed batch: the first 64 training transitions; critic advantages rescaled
  // to span +-10 so the filters are far from 1 at small beta
  const auto batch = pointers(std::span<const Transition>(ds.train).first(64));
  auto adv = train::estimate_advantage(critic, policy, batch, 4, 0,
                                       [](std::size_t k) { return train::detail::stream(6, 0, 2, k); });
  double max_adv = 0;
  for (double a : adv) max_adv = std::max(max_adv, std::abs(a));
  for (double& a : adv) a *= 10.0 / max_adv;

  auto gradients = [&](const train::FilterSpec& f) {
    std::vector<double> w;
    for (double a : adv) w.push_back(train::filter_weight(a, f));
    train::actor_gradient(policy, batch, w, 0, nullptr);
    std::vector<nn::Tensor<double>> g;
    for (const auto& p : policy.parameters()) g.push_back(p.grad);
    return g;
  };
  auto deviation = [](const auto& a, const auto& b) {
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < a[i].size(); ++j) worst = std::max(worst, std::abs(a[i][j] - b[i][j]));
    return worst;
  };
  const auto g1 = gradients({train::FilterKind::constant, 1.0, 20.0});
  const double limit = deviation(gradients({train::FilterKind::exponential, 1e9, 20.0}), g1);
  const double control = deviation(gradients({train::FilterKind::exponential, 1.0, 20.0}), g1);  // must be visible
  return {limit <= 1e-5 && control > 1e-3, "max |grad(beta=1e9) - grad(f=1)| = " + fmt(limit, 3) +
                                               " (bound 1e-5); control beta=1 deviation " + fmt(control, 3) +
                                               "; batch 64, advantages in [-10, 10]"};
}

// ---------------------------------------------------------------- criterion 7

// Scores the planted-rule successor of the newest state item; the best any
// policy can do on a history-independent first-order rule.
eval::Scorer rule_oracle(const data::Catalog& catalog, const oracle::AffineRule& rule, std::size_t window) {
  return [&catalog, rule, window](std::span<const int> ids, std::size_t batch) {
    nn::Tensor<float> z({batch, catalog.size()});
    for (std::size_t k = 0; k < batch; ++k) {
      const int newest = ids[k * window + window - 1];
      if (newest == 0) continue;
      const std::string next = std::to_string(rule(std::stoi(catalog.raw(newest))));
      if (catalog.contains(next)) z.at(k, static_cast<std::size_t>(catalog.index(next) - 1)) = 1.0f;
    }
    return z;
  };
}

struct PipelineSizes {
  std::size_t length = 20;  // records per actor
  std::size_t embed_dim = 8;
  std::size_t heads = 2;
  std::size_t blocks = 1;
  std::size_t critic_hidden = 16;
  std::size_t epochs = 3;
  std::size_t iterations = 5000;
  std::size_t seeds = 5;
};

Outcome scaled_pipeline(const PipelineSizes& z) {
  std::size_t stage1_ok = 0, kept = 0, ordered = 0;
  for (std::uint64_t seed = 1; seed <= z.seeds; ++seed) {
    const double t0 = cpu_seconds();
    oracle::SessionSpec spec;
    spec.rule = {200, 7, 13};
    spec.actors = 2000;
    spec.length = z.length;
    spec.noise = 0.2;
    std::mt19937_64 rng(seed);
    const auto ds = data::build_dataset(oracle::generate_synthetic_sessions(spec, rng), {0.8, 0.1, 0.1}, 30, {},
                                        data::LogSchema::ratings);
    const auto history = ds.history();

    train::CrrConfig c;  // paper stage-2 settings; gamma 0.6
    c.iterations = z.iterations;
    c.seed = 1000 + seed;
    const auto ceiling = eval::evaluate(rule_oracle(ds.catalog, spec.rule, ds.window), ds.validation, history,
                                        ds.num_items(), c.eval);

    networks::PolicyConfig pc;
    pc.num_items = ds.num_items();
    pc.window = ds.window;
    pc.embed_dim = z.embed_dim;
    pc.blocks = z.blocks;
    pc.heads = z.heads;
    pc.seed = 2000 + seed;
    train::PretrainConfig pre;
    pre.epochs = z.epochs;
    pre.seed = 3000 + seed;
    auto stage1 = train::pretrain(networks::PolicyNetwork<float>(pc), ds.train, ds.validation, history, pre);

    networks::CriticConfig cc;
    cc.num_items = ds.num_items();
    cc.window = ds.window;
    cc.embed_dim = z.embed_dim;
    cc.hidden = z.critic_hidden;
    cc.seed = 4000 + seed;
    const auto validate = train::metric_validator<float>(ds.validation, history, c.eval);
    auto crr = train::train_crr(stage1.best, networks::ValueNetwork<float>(cc, train::export_embeddings(stage1.best)),
                                ds.train, c, validate);

    // CRR-only: random policy and critic, stopped at the combined iteration count
    pc.seed = 5000 + seed;
    networks::PolicyNetwork<float> fresh(pc);
    auto c_only = c;
    c_only.iterations = z.iterations + stage1.steps;
    auto only = train::train_crr(fresh, networks::ValueNetwork<float>(cc, train::export_embeddings(fresh)), ds.train,
                                 c_only, validate);

    const double ceil = *ceiling.hr10;
    const bool s1 = stage1.best_hr10 >= 0.9 * ceil, nc = crr.best_hr10 >= 0.95 * stage1.best_hr10,
               ord = only.best_hr10 < crr.best_hr10;
    stage1_ok += s1;
    kept += nc;
    ordered += ord;
    std::cout << "  seed " << seed << "  ceiling " << fmt(ceil) << "  stage1 " << fmt(stage1.best_hr10) << " ("
              << stage1.steps << " steps)  crr " << fmt(crr.best_hr10) << " @" << crr.best_iteration << "  crr-only "
              << fmt(only.best_hr10) << " @" << only.best_iteration << " of " << c_only.iterations << "  ["
              << (s1 ? "" : "stage1-low ") << (nc ? "" : "collapse ") << (ord ? "ordered" : "not-ordered") << "]  "
              << fmt(cpu_seconds() - t0, 4) << " s" << std::endl;
  }
  std::ostringstream o;
  o << "stage1>=0.9*ceiling " << stage1_ok << "/" << z.seeds << ", crr>=0.95*stage1 " << kept << "/" << z.seeds
    << ", crr-only<crr " << ordered << "/" << z.seeds << " (need 4)";
  return {stage1_ok == z.seeds && kept == z.seeds && ordered >= 4, o.str()};
}

// ---------------------------------------------------------------- criterion 8

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism(const std::string& cli) {
  const fs::path root = fs::temp_directory_path() / "crrt_acceptance_determinism";
  fs::remove_all(root);
  const std::vector<std::string> chain{
      "synth --kind sessions --items 40 --actors 150 --length 12 --seed 3 --out syn",
      "synth --kind tabular --states 5 --actions 4 --episodes 20 --horizon 10 --seed 4 --out tab",
      "ingest --config run.ini --in syn/log.csv --out ds",
      "pretrain --config run.ini --data ds --out pre",
      "train-crr --config run.ini --data ds --init pre/policy.ckpt --out crr",
      "train-crr --config run.ini --data ds --no-init --out only",
      "train-crr --config run.ini --data ds --resume crr/state.ckpt --set crr.iterations=30 --out more",
      "evaluate --config run.ini --checkpoint crr/policy.ckpt --data ds --pool both --out ev",
      "evaluate --config run.ini --checkpoint pre/policy.ckpt --data ds --split validation --out ev_val",
      "verify --suite tabular",
  };
  for (const char* run : {"a", "b"}) {
    const fs::path dir = root / run;
    fs::create_directories(dir);
    std::ofstream(dir / "run.ini") << "[data]\nwindow = 8\n\n[policy]\nembed_dim = 8\nblocks = 1\nheads = 2\n\n"
                                      "[critic]\nhidden = 8\n\n[pretrain]\nepochs = 2\nbatch = 64\n\n"
                                      "[crr]\niterations = 20\ncadence = 10\nbatch = 32\n\n[run]\nseed = 11\nthreads = 1\n";
    for (const auto& cmd : chain) {
      const std::string line = "cd '" + dir.string() + "' && '" + cli + "' " + cmd + " --threads 1 >> stdout.txt 2>> stderr.txt";
      const int status = std::system(line.c_str());
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return {false, "command failed in run " + std::string(run) + ": " + cmd};
    }
  }
  std::size_t files = 0, differing = 0;
  std::string first_diff;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root / "a");
    ++files;
    if (!fs::exists(root / "b" / rel) || slurp(e.path()) != slurp(root / "b" / rel)) {
      ++differing;
      if (first_diff.empty()) first_diff = rel.string();
    }
  }
  std::size_t files_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "b")) files_b += e.is_regular_file();
  fs::remove_all(root);
  std::ostringstream o;
  o << files << " output files (checkpoints, reports, curves, manifests, logs) across " << chain.size()
    << " commands, " << differing << " differ" << (first_diff.empty() ? "" : " (first: " + first_diff + ")");
  return {differing == 0 && files == files_b && files > 0, o.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria runner"};
  std::vector<int> only;
  std::string cli = CRRT_CLI_PATH;
  PipelineSizes sizes;
  app.add_option("criteria", only, "criterion numbers to run (default: all)")->check(CLI::Range(1, 8));
  app.add_option("--cli", cli, "crrt executable");
  app.add_option("--seeds", sizes.seeds, "criterion 7 seeds");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "gradient suite", 120, [] { return from_suite(verify::gradient_suite()); }},
      {2, "metric oracle", 60, [] { return from_suite(verify::metric_suite(1000)); }},
      {3, "transition properties", 60, [] { return from_suite(verify::transition_suite(100000)); }},
      {4, "tabular Bellman oracle", 30, [] { return from_suite(verify::tabular_suite(100)); }},
      {5, "CRR vs f=1 on tabular logged data", 600, crr_vs_bc_tabular},
      {6, "beta-limit equivalence", 10, beta_limit},
      {7, "scaled-down pipeline", 1800, [&] { return scaled_pipeline(sizes); }},
      {8, "determinism", 300, [&] { return determinism(cli); }},
  };

  bool all = true;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const double t0 = cpu_seconds();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double cpu = cpu_seconds() - t0;
    const bool in_time = cpu < c.cpu_limit;
    const bool pass = out.pass && in_time;
    all = all && pass;
    std::cout << "criterion " << c.id << ' ' << (pass ? "PASS" : "FAIL") << "  " << c.name << ": " << out.detail
              << "  cpu " << fmt(cpu, 4) << " s (limit " << c.cpu_limit << " s" << (in_time ? "" : ", EXCEEDED") << ")"
              << std::endl;
  }
  return all ? 0 : 1;
}
