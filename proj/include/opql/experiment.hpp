#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "opql/learning.hpp"

namespace opql {

struct DatasetSpec {
  int n = 10000;
  double p = 0.3;
  std::string behavior = "eps-mix";  // eps-mix | final-buffer
  std::uint64_t seed = 1;
  std::string path;  // load instead of generating when set
};

struct RewardSpec {
  std::string family = "goal-cell";  // goal-cell | feature-linear | rbf-bump
  int train_count = 32;
  int test_count = 16;
  std::uint64_t seed = 2;
  std::uint64_t feature_seed = 3;  // feature-linear map freeze
};

struct ExperimentConfig {
  std::string env = "grid5";
  std::optional<double> gamma;
  std::string out_dir = "runs/exp";
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  int jobs = 1;
  int horizon = 200;
  DatasetSpec dataset;
  RewardSpec rewards;
  std::vector<std::string> designs = {"attention"};
  TrainConfig train;
  std::string sf_basis = "train-rewards";  // train-rewards | feature-map
  double sf_ridge = 1e-6;

  void validate() const;
  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig load(const std::string& path);
  // out_dir resolved against $OPQL_OUT_ROOT when relative.
  std::string resolved_out_dir() const;
};

struct ReturnRow {
  int reward_index = 0;
  double exact_return = 0.0;
  double mc_return = 0.0;
  double optimal_return = 0.0;
  double ratio = 0.0;
};

struct RunOutcome {
  std::string design;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<CurveRow> curve;
  std::vector<ReturnRow> returns;
};

struct MetricsReport {
  std::vector<RunOutcome> runs;
  int exit_code = 0;  // 0 ok, 1 partial failure, 2 config error
};

// Average squared error of the operator against exact_q_pi over the given
// pairs and rewards; uniform pair weights unless provided.
double mse_eval(const OperatorModel& model,
                const std::vector<RewardFn>& rewards, const TabularMdp& mdp,
                const PolicyTable& policy, std::span<const StateAction> pairs,
                const Eigen::VectorXd* weights = nullptr);

struct ZeroShotResult {
  double exact_return = 0.0;
  double mc_return = 0.0;
  int episodes = 0;
};

// Greedy policy read off G[r_test], scored by its exact discounted value from
// the initial distribution, with a seeded Monte-Carlo cross-check.
ZeroShotResult zero_shot_return(const OperatorModel& model,
                                const RewardFn& r_test, const TabularMdp& mdp,
                                int horizon, int episodes = 512,
                                std::uint64_t mc_seed = 0);

MetricsReport run_experiment(const ExperimentConfig& config);

// Recomputes the aggregate CSVs from the per-run files under runs_dir;
// returns the aggregate path. Errors if no run directories exist.
std::string report_runs(const std::string& runs_dir);

// %.17g, round-trips doubles exactly.
std::string format_double(double v);

struct CurveFile {
  std::vector<CurveRow> rows;
};
std::vector<CurveRow> read_metrics_csv(const std::string& path);

}  // namespace opql
