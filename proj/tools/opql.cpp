#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "opql/dataset.hpp"
#include "opql/envs.hpp"
#include "opql/experiment.hpp"
#include "opql/learning.hpp"
#include "opql/rng.hpp"

namespace {

using namespace opql;

Eigen::VectorXd parse_reward_values(const std::string& csv, int expected) {
  std::vector<double> vals;
  std::stringstream ss(csv);
  std::string field;
  while (std::getline(ss, field, ',')) vals.push_back(std::stod(field));
  if (static_cast<int>(vals.size()) != expected)
    throw std::invalid_argument("--reward needs " + std::to_string(expected) +
                                " comma-separated values, got " +
                                std::to_string(vals.size()));
  return Eigen::Map<const Eigen::VectorXd>(vals.data(),
                                           static_cast<int>(vals.size()));
}

RewardFamily family_for(const std::string& name, const Environment& env,
                        std::uint64_t feature_seed) {
  if (name == "goal-cell")
    return RewardFamily::goal_cell(env.grid, env.mdp.num_actions());
  if (name == "rbf-bump")
    return RewardFamily::rbf_bump(env.grid, env.mdp.num_actions());
  if (name == "feature-linear")
    return RewardFamily::feature_linear(
        make_default_feature_map(env.mdp, feature_seed),
        env.mdp.num_actions());
  throw std::invalid_argument("unknown reward family: " + name);
}

int cmd_gen_data(const std::string& env_name, std::optional<double> gamma,
                 double p, int n, std::uint64_t seed, int horizon,
                 const std::string& behavior, const std::string& out) {
  const Environment env = make_env(env_name, gamma);
  std::mt19937_64 rng(seed);
  TransitionDataset ds;
  if (behavior == "final-buffer")
    ds = generate_final_buffer(env.mdp, env.target_policy, n, rng, env.id,
                               horizon);
  else
    ds = generate_dataset(env.mdp, {env.target_policy, p}, n, rng, env.id,
                          horizon);
  ds.meta.seed = seed;
  save_dataset(ds, out);
  std::cout << "wrote " << ds.size() << " transitions to " << out << "\n";
  return 0;
}

int cmd_dump_rewards(const std::string& env_name, std::optional<double> gamma,
                     const std::string& family_name, int train_count,
                     int test_count, std::uint64_t seed,
                     std::uint64_t feature_seed, const std::string& out) {
  const Environment env = make_env(env_name, gamma);
  const RewardFamily family = family_for(family_name, env, feature_seed);
  const RewardSets sets = make_reward_sets(family, train_count, test_count, seed);
  save_reward_set(sets, out);
  std::cout << "wrote " << sets.train.size() << " train + " << sets.test.size()
            << " test rewards to " << out << "\n";
  return 0;
}

int cmd_oracle(const std::string& env_name, std::optional<double> gamma,
               const std::string& reward_csv, const std::string& mode_name,
               const std::string& policy_name) {
  const Environment env = make_env(env_name, gamma);
  const Eigen::VectorXd r =
      parse_reward_values(reward_csv, env.mdp.num_pairs());
  ValueTable q;
  if (mode_name == "optimization") {
    q = exact_q_star(env.mdp, r, 1e-12);
  } else {
    const PolicyTable policy =
        policy_name == "uniform"
            ? PolicyTable::uniform(env.mdp.num_states(), env.mdp.num_actions())
            : env.target_policy;
    q = exact_q_pi(env.mdp, policy, r);
  }
  for (int s = 0; s < env.mdp.num_states(); ++s) {
    std::cout << "s=" << s << ":";
    for (int a = 0; a < env.mdp.num_actions(); ++a)
      std::cout << " " << format_double(q[env.mdp.pair_index(s, a)]);
    std::cout << "\n";
  }
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& env_name,
                 std::optional<double> gamma, const std::string& rewards_path,
                 const std::string& family_name, std::uint64_t feature_seed) {
  const Environment env = make_env(env_name, gamma);
  const RewardFamily family = family_for(family_name, env, feature_seed);
  const RewardSets sets = load_reward_set(family, rewards_path);
  const OperatorModel model = load_model(checkpoint);
  const auto pairs = env.mdp.all_pairs();
  Eigen::VectorXd weights(env.mdp.num_pairs());
  for (int s = 0; s < env.mdp.num_states(); ++s)
    for (int a = 0; a < env.mdp.num_actions(); ++a)
      weights[env.mdp.pair_index(s, a)] =
          env.mdp.initial_dist()[s] / env.mdp.num_actions();
  if (!sets.train.empty())
    std::cout << "train_mse "
              << format_double(mse_eval(model, sets.train, env.mdp,
                                        env.target_policy, pairs, &weights))
              << "\n";
  if (!sets.test.empty())
    std::cout << "test_mse "
              << format_double(mse_eval(model, sets.test, env.mdp,
                                        env.target_policy, pairs, &weights))
              << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"operator Q-learning benchmark toolkit"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate an offline dataset");
  std::string gen_env = "grid5", gen_behavior = "eps-mix", gen_out;
  double gen_p = 0.3;
  int gen_n = 10000, gen_horizon = 200;
  std::uint64_t gen_seed = 1;
  double gen_gamma = -1.0;
  gen->add_option("--env", gen_env, "environment name");
  gen->add_option("--gamma", gen_gamma, "discount override");
  gen->add_option("--p", gen_p, "random-action probability");
  gen->add_option("--n", gen_n, "number of transitions");
  gen->add_option("--seed", gen_seed, "rng seed");
  gen->add_option("--horizon", gen_horizon, "episode truncation");
  gen->add_option("--behavior", gen_behavior, "eps-mix | final-buffer");
  gen->add_option("--out", gen_out, "output path")->required();

  // dump-rewards
  auto* dump = app.add_subcommand("dump-rewards", "write a reward-set file");
  std::string dump_env = "grid5", dump_family = "goal-cell", dump_out;
  int dump_train = 32, dump_test = 16;
  std::uint64_t dump_seed = 2, dump_feature_seed = 3;
  double dump_gamma = -1.0;
  dump->add_option("--env", dump_env, "environment name");
  dump->add_option("--gamma", dump_gamma, "discount override");
  dump->add_option("--family", dump_family,
                   "goal-cell | feature-linear | rbf-bump");
  dump->add_option("--train-count", dump_train, "training rewards");
  dump->add_option("--test-count", dump_test, "testing rewards");
  dump->add_option("--seed", dump_seed, "rng seed");
  dump->add_option("--feature-seed", dump_feature_seed,
                   "feature map freeze seed");
  dump->add_option("--out", dump_out, "output path")->required();

  // train
  auto* train = app.add_subcommand(
      "train", "run the experiment described by a config file");
  std::string train_config;
  train->add_option("--config", train_config, "experiment config (json)")
      ->required();
  // Flag overrides; every flag has a config equivalent.
  std::optional<std::string> ov_env, ov_out_dir, ov_mode, ov_family,
      ov_designs, ov_seeds, ov_dataset_path, ov_sf_basis;
  std::optional<double> ov_gamma, ov_lr, ov_alpha, ov_p;
  std::optional<long> ov_steps;
  std::optional<int> ov_batch, ov_m, ov_K, ov_jobs, ov_n, ov_eval_every;
  std::optional<std::uint64_t> ov_dataset_seed, ov_reward_seed;
  train->add_option("--env", ov_env, "override env");
  train->add_option("--gamma", ov_gamma, "override gamma");
  train->add_option("--out-dir", ov_out_dir, "override out_dir");
  train->add_option("--mode", ov_mode, "override train.mode");
  train->add_option("--steps", ov_steps, "override train.total_steps");
  train->add_option("--batch-size", ov_batch, "override train.batch_size");
  train->add_option("--learning-rate", ov_lr,
                    "override train.learning_rate");
  train->add_option("--alpha", ov_alpha,
                    "override train.target_update_rate");
  train->add_option("--eval-every", ov_eval_every,
                    "override train.eval_every");
  train->add_option("--m", ov_m, "override train.m");
  train->add_option("--K", ov_K, "override train.K");
  train->add_option("--jobs", ov_jobs, "override jobs");
  train->add_option("--designs", ov_designs,
                    "override designs (comma separated)");
  train->add_option("--seeds", ov_seeds, "override seeds (comma separated)");
  train->add_option("--family", ov_family, "override rewards.family");
  train->add_option("--dataset-n", ov_n, "override dataset.n");
  train->add_option("--dataset-p", ov_p, "override dataset.p");
  train->add_option("--dataset-seed", ov_dataset_seed,
                    "override dataset.seed");
  train->add_option("--dataset-path", ov_dataset_path,
                    "override dataset.path");
  train->add_option("--reward-seed", ov_reward_seed, "override rewards.seed");
  train->add_option("--sf-basis", ov_sf_basis, "override sf_basis");

  // evaluate
  auto* eval = app.add_subcommand("evaluate",
                                  "score a checkpoint against a reward set");
  std::string eval_ckpt, eval_env = "grid5", eval_rewards,
              eval_family = "goal-cell";
  double eval_gamma = -1.0;
  std::uint64_t eval_feature_seed = 3;
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval->add_option("--env", eval_env, "environment name");
  eval->add_option("--gamma", eval_gamma, "discount override");
  eval->add_option("--rewards", eval_rewards, "reward-set file")->required();
  eval->add_option("--family", eval_family, "reward family of the file");
  eval->add_option("--feature-seed", eval_feature_seed,
                   "feature map freeze seed");

  // oracle
  auto* oracle = app.add_subcommand("oracle", "print an exact q table");
  std::string oracle_env = "chain2", oracle_reward, oracle_mode = "evaluation",
              oracle_policy = "uniform";
  double oracle_gamma = -1.0;
  oracle->add_option("--env", oracle_env, "environment name");
  oracle->add_option("--gamma", oracle_gamma, "discount override");
  oracle->add_option("--reward", oracle_reward,
                     "comma-separated reward over X")
      ->required();
  oracle->add_option("--mode", oracle_mode, "evaluation | optimization");
  oracle->add_option("--policy", oracle_policy, "uniform | target");

  // report
  auto* report = app.add_subcommand("report",
                                    "recompute aggregate CSVs from run dirs");
  std::string report_dir;
  report->add_option("--runs", report_dir, "experiment output directory")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    auto opt_gamma = [](double g) {
      return g > 0.0 ? std::optional<double>(g) : std::nullopt;
    };
    if (gen->parsed())
      return cmd_gen_data(gen_env, opt_gamma(gen_gamma), gen_p, gen_n,
                          gen_seed, gen_horizon, gen_behavior, gen_out);
    if (dump->parsed())
      return cmd_dump_rewards(dump_env, opt_gamma(dump_gamma), dump_family,
                              dump_train, dump_test, dump_seed,
                              dump_feature_seed, dump_out);
    if (oracle->parsed())
      return cmd_oracle(oracle_env, opt_gamma(oracle_gamma), oracle_reward,
                        oracle_mode, oracle_policy);
    if (eval->parsed())
      return cmd_evaluate(eval_ckpt, eval_env, opt_gamma(eval_gamma),
                          eval_rewards, eval_family, eval_feature_seed);
    if (report->parsed()) {
      const std::string path = report_runs(report_dir);
      std::cout << "wrote " << path << "\n";
      return 0;
    }
    if (train->parsed()) {
      ExperimentConfig cfg = ExperimentConfig::load(train_config);
      auto split_list = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string f;
        while (std::getline(ss, f, ',')) out.push_back(f);
        return out;
      };
      if (ov_env) cfg.env = *ov_env;
      if (ov_gamma) cfg.gamma = *ov_gamma;
      if (ov_out_dir) cfg.out_dir = *ov_out_dir;
      if (ov_mode) cfg.train.mode = mode_from_string(*ov_mode);
      if (ov_steps) cfg.train.total_steps = *ov_steps;
      if (ov_batch) cfg.train.batch_size = *ov_batch;
      if (ov_lr) cfg.train.learning_rate = *ov_lr;
      if (ov_alpha) cfg.train.target_update_rate = *ov_alpha;
      if (ov_eval_every) cfg.train.eval_every = *ov_eval_every;
      if (ov_m) cfg.train.m = *ov_m;
      if (ov_K) cfg.train.K = *ov_K;
      if (ov_jobs) cfg.jobs = *ov_jobs;
      if (ov_designs) cfg.designs = split_list(*ov_designs);
      if (ov_seeds) {
        cfg.seeds.clear();
        for (const auto& s : split_list(*ov_seeds))
          cfg.seeds.push_back(std::stoull(s));
      }
      if (ov_family) cfg.rewards.family = *ov_family;
      if (ov_n) cfg.dataset.n = *ov_n;
      if (ov_p) cfg.dataset.p = *ov_p;
      if (ov_dataset_seed) cfg.dataset.seed = *ov_dataset_seed;
      if (ov_dataset_path) cfg.dataset.path = *ov_dataset_path;
      if (ov_reward_seed) cfg.rewards.seed = *ov_reward_seed;
      if (ov_sf_basis) cfg.sf_basis = *ov_sf_basis;

      const MetricsReport report_out = run_experiment(cfg);
      int ok = 0;
      for (const auto& r : report_out.runs) ok += r.ok ? 1 : 0;
      std::cout << ok << "/" << report_out.runs.size() << " runs succeeded; "
                << "results under " << cfg.resolved_out_dir() << "\n";
      return report_out.exit_code;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
