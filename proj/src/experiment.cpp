#include "opql/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "opql/rng.hpp"

namespace fs = std::filesystem;

namespace opql {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

constexpr int kConfigFormatVersion = 1;

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  for (const auto& item : j.items())
    if (!allowed.contains(item.key()))
      throw std::invalid_argument("config: unknown key '" + item.key() +
                                  "' in " + where);
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw std::invalid_argument("config: seeds is empty");
  if (designs.empty()) throw std::invalid_argument("config: designs is empty");
  if (jobs < 1) throw std::invalid_argument("config: jobs must be >= 1");
  if (horizon < 1) throw std::invalid_argument("config: horizon must be >= 1");
  if (dataset.n < 1) throw std::invalid_argument("config: dataset.n >= 1");
  if (dataset.p < 0.0 || dataset.p > 1.0)
    throw std::invalid_argument("config: dataset.p must lie in [0,1]");
  if (dataset.behavior != "eps-mix" && dataset.behavior != "final-buffer")
    throw std::invalid_argument("config: dataset.behavior must be eps-mix or "
                                "final-buffer");
  if (rewards.train_count < 1 || rewards.test_count < 0)
    throw std::invalid_argument("config: reward counts out of range");
  if (sf_basis != "train-rewards" && sf_basis != "feature-map")
    throw std::invalid_argument(
        "config: sf_basis must be train-rewards or feature-map");
  for (const auto& d : designs)
    if (d != "successor-feature") design_from_string(d);
  if (std::count(designs.begin(), designs.end(), "successor-feature") > 0 &&
      train.mode == Mode::kOptimization)
    throw std::invalid_argument(
        "config: successor-feature runs only in evaluation mode");
  train.validate();
}

std::string ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["format_version"] = kConfigFormatVersion;
  j["env"] = env;
  if (gamma) j["gamma"] = *gamma;
  j["out_dir"] = out_dir;
  j["seeds"] = seeds;
  j["jobs"] = jobs;
  j["horizon"] = horizon;
  j["dataset"] = {{"n", dataset.n},
                  {"p", dataset.p},
                  {"behavior", dataset.behavior},
                  {"seed", dataset.seed},
                  {"path", dataset.path}};
  j["rewards"] = {{"family", rewards.family},
                  {"train_count", rewards.train_count},
                  {"test_count", rewards.test_count},
                  {"seed", rewards.seed},
                  {"feature_seed", rewards.feature_seed}};
  j["designs"] = designs;
  j["sf_basis"] = sf_basis;
  j["sf_ridge"] = sf_ridge;
  j["train"] = {{"mode", to_string(train.mode)},
                {"total_steps", train.total_steps},
                {"batch_size", train.batch_size},
                {"learning_rate", train.learning_rate},
                {"target_update_rate", train.target_update_rate},
                {"eval_every", train.eval_every},
                {"m", train.m},
                {"K", train.K},
                {"hidden", train.hidden},
                {"feature_dim", train.feature_dim},
                {"activation", nn::to_string(train.activation)},
                {"sample_successor_action", train.sample_successor_action},
                {"rewards_per_step", train.rewards_per_step},
                {"maxout_linear_heads", train.maxout_linear_heads},
                {"checkpoint_every", train.checkpoint_every}};
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: not valid json: ") +
                                e.what());
  }
  check_keys(j,
             {"format_version", "env", "gamma", "out_dir", "seeds", "jobs",
              "horizon", "dataset", "rewards", "designs", "train", "sf_basis",
              "sf_ridge"},
             "top level");
  if (j.contains("format_version") &&
      j["format_version"].get<int>() != kConfigFormatVersion)
    throw std::invalid_argument("config: unsupported format_version");
  ExperimentConfig c;
  maybe(j, "env", c.env);
  if (j.contains("gamma")) c.gamma = j["gamma"].get<double>();
  maybe(j, "out_dir", c.out_dir);
  maybe(j, "seeds", c.seeds);
  maybe(j, "jobs", c.jobs);
  maybe(j, "horizon", c.horizon);
  maybe(j, "designs", c.designs);
  maybe(j, "sf_basis", c.sf_basis);
  maybe(j, "sf_ridge", c.sf_ridge);
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    check_keys(d, {"n", "p", "behavior", "seed", "path"}, "dataset");
    maybe(d, "n", c.dataset.n);
    maybe(d, "p", c.dataset.p);
    maybe(d, "behavior", c.dataset.behavior);
    maybe(d, "seed", c.dataset.seed);
    maybe(d, "path", c.dataset.path);
  }
  if (j.contains("rewards")) {
    const auto& r = j["rewards"];
    check_keys(r, {"family", "train_count", "test_count", "seed",
                   "feature_seed"},
               "rewards");
    maybe(r, "family", c.rewards.family);
    maybe(r, "train_count", c.rewards.train_count);
    maybe(r, "test_count", c.rewards.test_count);
    maybe(r, "seed", c.rewards.seed);
    maybe(r, "feature_seed", c.rewards.feature_seed);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    check_keys(t,
               {"mode", "total_steps", "batch_size", "learning_rate",
                "target_update_rate", "eval_every", "m", "K", "hidden",
                "feature_dim", "activation", "sample_successor_action",
                "rewards_per_step", "maxout_linear_heads", "checkpoint_every"},
               "train");
    if (t.contains("mode"))
      c.train.mode = mode_from_string(t["mode"].get<std::string>());
    maybe(t, "total_steps", c.train.total_steps);
    maybe(t, "batch_size", c.train.batch_size);
    maybe(t, "learning_rate", c.train.learning_rate);
    maybe(t, "target_update_rate", c.train.target_update_rate);
    maybe(t, "eval_every", c.train.eval_every);
    maybe(t, "m", c.train.m);
    maybe(t, "K", c.train.K);
    maybe(t, "hidden", c.train.hidden);
    maybe(t, "feature_dim", c.train.feature_dim);
    if (t.contains("activation"))
      c.train.activation =
          nn::activation_from_string(t["activation"].get<std::string>());
    maybe(t, "sample_successor_action", c.train.sample_successor_action);
    maybe(t, "rewards_per_step", c.train.rewards_per_step);
    maybe(t, "maxout_linear_heads", c.train.maxout_linear_heads);
    maybe(t, "checkpoint_every", c.train.checkpoint_every);
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string ExperimentConfig::resolved_out_dir() const {
  fs::path p(out_dir);
  if (p.is_absolute()) return p.string();
  if (const char* root = std::getenv("OPQL_OUT_ROOT"))
    return (fs::path(root) / p).string();
  return p.string();
}

double mse_eval(const OperatorModel& model,
                const std::vector<RewardFn>& rewards, const TabularMdp& mdp,
                const PolicyTable& policy, std::span<const StateAction> pairs,
                const Eigen::VectorXd* weights) {
  if (rewards.empty() || pairs.empty())
    throw std::invalid_argument("mse_eval: empty rewards or pairs");
  const int n = mdp.num_pairs();
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) -
                            mdp.gamma() * p_pi_matrix(mdp, policy);
  const auto lu = a.partialPivLu();
  Eigen::VectorXd w;
  if (weights) {
    w = *weights;
  } else {
    w = Eigen::VectorXd::Constant(static_cast<int>(pairs.size()),
                                  1.0 / static_cast<double>(pairs.size()));
  }
  double acc = 0.0;
  for (const auto& r : rewards) {
    const ValueTable q = lu.solve(tabularize(r, mdp));
    const Eigen::VectorXd pred = eval_pairs(model, reward_vector(model, r),
                                            pairs);
    double per = 0.0;
    for (size_t i = 0; i < pairs.size(); ++i) {
      const double diff = q[mdp.pair_index(pairs[i])] - pred[static_cast<int>(i)];
      per += w[static_cast<int>(i)] * diff * diff;
    }
    acc += per;
  }
  return acc / static_cast<double>(rewards.size());
}

ZeroShotResult zero_shot_return(const OperatorModel& model,
                                const RewardFn& r_test, const TabularMdp& mdp,
                                int horizon, int episodes,
                                std::uint64_t mc_seed) {
  const auto pairs = mdp.all_pairs();
  const Eigen::VectorXd qhat =
      eval_pairs(model, reward_vector(model, r_test), pairs);
  const PolicyTable greedy =
      greedy_policy(qhat, mdp.num_states(), mdp.num_actions());
  const ValueTable q = exact_q_pi(mdp, greedy, tabularize(r_test, mdp));

  ZeroShotResult out;
  for (int s = 0; s < mdp.num_states(); ++s)
    for (int a = 0; a < mdp.num_actions(); ++a)
      out.exact_return += mdp.initial_dist()[s] * greedy.probs(s, a) *
                          q[mdp.pair_index(s, a)];
  std::mt19937_64 rng(derive_seed(mc_seed, "zero-shot-mc"));
  double acc = 0.0;
  for (int e = 0; e < episodes; ++e)
    acc += episodic_return(mdp, greedy, [&](StateAction x) { return r_test(x); },
                           horizon, rng);
  out.mc_return = episodes > 0 ? acc / episodes : 0.0;
  out.episodes = episodes;
  return out;
}

namespace {

void write_metrics_csv(const std::string& path,
                       const std::vector<CurveRow>& curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "step,train_mse,test_mse,bellman_loss\n";
  for (const auto& row : curve)
    out << row.step << "," << format_double(row.train_mse) << ","
        << format_double(row.test_mse) << ","
        << format_double(row.bellman_loss) << "\n";
}

void write_curve_csv(const std::string& path,
                     const std::vector<CurveRow>& curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "step,train_mse,test_mse,bellman_loss,wall_clock_s\n";
  for (const auto& row : curve)
    out << row.step << "," << format_double(row.train_mse) << ","
        << format_double(row.test_mse) << ","
        << format_double(row.bellman_loss) << ","
        << format_double(row.wall_clock_s) << "\n";
}

void write_returns_csv(const std::string& path,
                       const std::vector<ReturnRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "reward_index,exact_return,mc_return,optimal_return,ratio\n";
  for (const auto& r : rows)
    out << r.reward_index << "," << format_double(r.exact_return) << ","
        << format_double(r.mc_return) << "," << format_double(r.optimal_return)
        << "," << format_double(r.ratio) << "\n";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

// Type-7 quantile (linear interpolation), matching between the experiment
// and report paths by construction.
double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double pos = q * (static_cast<double>(v.size()) - 1.0);
  const auto lo = static_cast<size_t>(pos);
  if (lo + 1 >= v.size()) return v.back();
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

void write_aggregate(const std::string& path,
                     std::vector<std::string> design_order,
                     const std::vector<RunOutcome>& runs) {
  // Alphabetical order keeps the emitted file independent of config order,
  // so the report path reproduces it exactly.
  std::sort(design_order.begin(), design_order.end());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "design,step";
  for (const char* metric : {"train_mse", "test_mse", "bellman_loss"})
    out << "," << metric << "_median," << metric << "_q25," << metric
        << "_q75," << metric << "_mean";
  out << "\n";
  for (const auto& design : design_order) {
    std::map<long, std::array<std::vector<double>, 3>> by_step;
    for (const auto& run : runs) {
      if (!run.ok || run.design != design) continue;
      for (const auto& row : run.curve) {
        auto& slot = by_step[row.step];
        slot[0].push_back(row.train_mse);
        slot[1].push_back(row.test_mse);
        slot[2].push_back(row.bellman_loss);
      }
    }
    for (const auto& [step, metrics] : by_step) {
      out << design << "," << step;
      for (const auto& vals : metrics)
        out << "," << format_double(quantile(vals, 0.5)) << ","
            << format_double(quantile(vals, 0.25)) << ","
            << format_double(quantile(vals, 0.75)) << ","
            << format_double(mean(vals));
      out << "\n";
    }
  }
}

void write_returns_aggregate(const std::string& path,
                             std::vector<std::string> design_order,
                             const std::vector<RunOutcome>& runs) {
  std::sort(design_order.begin(), design_order.end());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "design,reward_index,ratio_median,ratio_q25,ratio_q75,ratio_mean,"
         "exact_return_median,exact_return_mean,optimal_return_median\n";
  for (const auto& design : design_order) {
    std::map<int, std::array<std::vector<double>, 3>> by_reward;
    for (const auto& run : runs) {
      if (!run.ok || run.design != design) continue;
      for (const auto& row : run.returns) {
        auto& slot = by_reward[row.reward_index];
        slot[0].push_back(row.ratio);
        slot[1].push_back(row.exact_return);
        slot[2].push_back(row.optimal_return);
      }
    }
    for (const auto& [idx, vals] : by_reward)
      out << design << "," << idx << "," << format_double(quantile(vals[0], 0.5))
          << "," << format_double(quantile(vals[0], 0.25)) << ","
          << format_double(quantile(vals[0], 0.75)) << ","
          << format_double(mean(vals[0])) << ","
          << format_double(quantile(vals[1], 0.5)) << ","
          << format_double(mean(vals[1])) << ","
          << format_double(quantile(vals[2], 0.5)) << "\n";
  }
}

RewardFamily build_family(const ExperimentConfig& cfg,
                          const Environment& env) {
  if (cfg.rewards.family == "goal-cell")
    return RewardFamily::goal_cell(env.grid, env.mdp.num_actions());
  if (cfg.rewards.family == "rbf-bump")
    return RewardFamily::rbf_bump(env.grid, env.mdp.num_actions());
  if (cfg.rewards.family == "feature-linear")
    return RewardFamily::feature_linear(
        make_default_feature_map(env.mdp, cfg.rewards.feature_seed),
        env.mdp.num_actions());
  throw std::invalid_argument("config: unknown reward family '" +
                              cfg.rewards.family + "'");
}

}  // namespace

std::vector<CurveRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path + ": empty metrics file");
  std::vector<CurveRow> rows;
  int lineno = 1;
  const bool has_wall = line.find("wall_clock_s") != std::string::npos;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != (has_wall ? 5u : 4u))
      throw std::runtime_error(path + ": bad column count at line " +
                               std::to_string(lineno));
    CurveRow row;
    row.step = std::stol(fields[0]);
    row.train_mse = std::strtod(fields[1].c_str(), nullptr);
    row.test_mse = std::strtod(fields[2].c_str(), nullptr);
    row.bellman_loss = std::strtod(fields[3].c_str(), nullptr);
    if (has_wall) row.wall_clock_s = std::strtod(fields[4].c_str(), nullptr);
    rows.push_back(row);
  }
  return rows;
}

MetricsReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  const std::string out_root = config.resolved_out_dir();
  fs::create_directories(out_root);

  const Environment env = make_env(config.env, config.gamma);

  TransitionDataset dataset;
  if (!config.dataset.path.empty()) {
    if (!fs::exists(config.dataset.path))
      throw std::invalid_argument("dataset.path: no such file: " +
                                  config.dataset.path);
    dataset = load_dataset(config.dataset.path);
  } else {
    std::mt19937_64 rng(config.dataset.seed);
    if (config.dataset.behavior == "final-buffer")
      dataset = generate_final_buffer(env.mdp, env.target_policy,
                                      config.dataset.n, rng, env.id,
                                      config.horizon);
    else
      dataset = generate_dataset(env.mdp, {env.target_policy, config.dataset.p},
                                 config.dataset.n, rng, env.id, config.horizon);
    dataset.meta.seed = config.dataset.seed;
    save_dataset(dataset, (fs::path(out_root) / "dataset.txt").string());
  }

  const RewardFamily family = build_family(config, env);
  const RewardSets sets = make_reward_sets(family, config.rewards.train_count,
                                           config.rewards.test_count,
                                           config.rewards.seed);
  save_reward_set(sets, (fs::path(out_root) / "rewards.jsonl").string());

  const EvalContext ctx = EvalContext::build(env, sets, config.train.mode);

  {
    std::ofstream cfg_out(fs::path(out_root) / "config.json");
    cfg_out << config.to_json() << "\n";
  }

  // Optimal returns per test reward, shared by every optimization run.
  std::vector<double> optimal_returns;
  if (config.train.mode == Mode::kOptimization) {
    for (const auto& q_star : ctx.test_q) {
      const PolicyTable pi =
          greedy_policy(q_star, env.mdp.num_states(), env.mdp.num_actions());
      double v = 0.0;
      for (int s = 0; s < env.mdp.num_states(); ++s)
        for (int a = 0; a < env.mdp.num_actions(); ++a)
          v += env.mdp.initial_dist()[s] * pi.probs(s, a) *
               q_star[env.mdp.pair_index(s, a)];
      optimal_returns.push_back(v);
    }
  }

  struct Job {
    std::string design;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& design : config.designs)
    for (auto seed : config.seeds) jobs.push_back({design, seed});

  MetricsReport report;
  report.runs.resize(jobs.size());

  auto run_one = [&](size_t ji) {
    const Job& job = jobs[ji];
    RunOutcome& outcome = report.runs[ji];
    outcome.design = job.design;
    outcome.seed = job.seed;
    const fs::path run_dir = fs::path(out_root) / job.design /
                             ("seed" + std::to_string(job.seed));
    try {
      fs::create_directories(run_dir);
      TrainConfig tc = config.train;
      tc.seed = derive_seed(job.seed, job.design);

      std::vector<CurveRow> curve;
      if (job.design == "successor-feature") {
        Eigen::MatrixXd phi =
            config.sf_basis == "train-rewards"
                ? rewards_as_features(ctx.train_rewards, env.mdp)
                : make_default_feature_map(env.mdp,
                                           config.rewards.feature_seed);
        SfTrainResult res =
            sf_fit(env.mdp, dataset, std::move(phi), env.target_policy, tc,
                   &ctx);
        curve = std::move(res.curve);
      } else {
        tc.design = design_from_string(job.design);
        std::mt19937_64 reward_rng(derive_seed(tc.seed, "reward-stream"));
        std::uniform_int_distribution<int> pick(
            0, static_cast<int>(ctx.train_rewards.size()) - 1);
        auto next_reward = [&]() { return ctx.train_rewards[pick(reward_rng)]; };

        CheckpointSink sink;
        if (tc.checkpoint_every > 0)
          sink = [&](long step, const OperatorModel& model) {
            save_model(model, (run_dir / ("checkpoint_" +
                                          std::to_string(step) + ".bin"))
                                  .string());
          };
        TrainResult res = train_operator(tc, env.mdp, dataset, next_reward,
                                         &env.target_policy, &ctx, sink);
        curve = std::move(res.curve);
        save_model(res.model, (run_dir / "model.bin").string());

        if (config.train.mode == Mode::kOptimization) {
          for (size_t ri = 0; ri < ctx.test_rewards.size(); ++ri) {
            const ZeroShotResult z = zero_shot_return(
                res.model, ctx.test_rewards[ri], env.mdp, config.horizon, 512,
                derive_seed(tc.seed, 1000 + ri));
            ReturnRow row;
            row.reward_index = static_cast<int>(ri);
            row.exact_return = z.exact_return;
            row.mc_return = z.mc_return;
            row.optimal_return = optimal_returns[ri];
            row.ratio = row.optimal_return != 0.0
                            ? row.exact_return / row.optimal_return
                            : std::nan("");
            outcome.returns.push_back(row);
          }
          write_returns_csv((run_dir / "returns.csv").string(),
                            outcome.returns);
        }
      }
      write_metrics_csv((run_dir / "metrics.csv").string(), curve);
      write_curve_csv((run_dir / "curve.csv").string(), curve);
      outcome.curve = std::move(curve);
      outcome.ok = true;
    } catch (const std::exception& e) {
      outcome.ok = false;
      outcome.error = e.what();
      std::cerr << "run " << job.design << "/seed" << job.seed
                << " failed: " << e.what() << "\n";
    }
  };

#pragma omp parallel for schedule(dynamic) num_threads(config.jobs) \
    if (config.jobs > 1)
  for (size_t ji = 0; ji < jobs.size(); ++ji) run_one(ji);

  write_aggregate((fs::path(out_root) / "aggregate.csv").string(),
                  config.designs, report.runs);
  if (config.train.mode == Mode::kOptimization)
    write_returns_aggregate(
        (fs::path(out_root) / "returns_aggregate.csv").string(),
        config.designs, report.runs);

  int failed = 0;
  std::ofstream fail_log;
  for (const auto& run : report.runs)
    if (!run.ok) {
      if (!fail_log.is_open())
        fail_log.open(fs::path(out_root) / "failures.txt");
      fail_log << run.design << " seed" << run.seed << ": " << run.error
               << "\n";
      ++failed;
    }
  report.exit_code = failed == 0 ? 0 : 1;
  return report;
}

std::string report_runs(const std::string& runs_dir) {
  if (!fs::is_directory(runs_dir))
    throw std::runtime_error("report: not a directory: " + runs_dir);
  std::vector<std::string> designs;
  std::vector<RunOutcome> runs;
  for (const auto& design_entry : fs::directory_iterator(runs_dir)) {
    if (!design_entry.is_directory()) continue;
    const std::string design = design_entry.path().filename().string();
    bool saw_run = false;
    for (const auto& seed_entry : fs::directory_iterator(design_entry.path())) {
      if (!seed_entry.is_directory()) continue;
      const std::string name = seed_entry.path().filename().string();
      if (name.rfind("seed", 0) != 0) continue;
      const fs::path metrics = seed_entry.path() / "metrics.csv";
      if (!fs::exists(metrics)) continue;
      RunOutcome run;
      run.design = design;
      run.seed = std::stoull(name.substr(4));
      run.curve = read_metrics_csv(metrics.string());
      const fs::path returns = seed_entry.path() / "returns.csv";
      if (fs::exists(returns)) {
        std::ifstream in(returns);
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
          if (line.empty()) continue;
          const auto f = split_csv_line(line);
          if (f.size() != 5)
            throw std::runtime_error(returns.string() + ": bad column count");
          ReturnRow row;
          row.reward_index = std::stoi(f[0]);
          row.exact_return = std::strtod(f[1].c_str(), nullptr);
          row.mc_return = std::strtod(f[2].c_str(), nullptr);
          row.optimal_return = std::strtod(f[3].c_str(), nullptr);
          row.ratio = std::strtod(f[4].c_str(), nullptr);
          run.returns.push_back(row);
        }
      }
      run.ok = true;
      runs.push_back(std::move(run));
      saw_run = true;
    }
    if (saw_run) designs.push_back(design);
  }
  if (runs.empty())
    throw std::runtime_error("report: no runs found under " + runs_dir);
  std::sort(designs.begin(), designs.end());
  std::sort(runs.begin(), runs.end(), [](const RunOutcome& a,
                                         const RunOutcome& b) {
    return std::tie(a.design, a.seed) < std::tie(b.design, b.seed);
  });
  const std::string path = (fs::path(runs_dir) / "aggregate.csv").string();
  write_aggregate(path, designs, runs);
  const bool any_returns =
      std::any_of(runs.begin(), runs.end(),
                  [](const RunOutcome& r) { return !r.returns.empty(); });
  if (any_returns)
    write_returns_aggregate(
        (fs::path(runs_dir) / "returns_aggregate.csv").string(), designs,
        runs);
  return path;
}

}  // namespace opql
