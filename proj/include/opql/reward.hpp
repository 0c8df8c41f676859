#pragma once

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "opql/envs.hpp"
#include "opql/mdp.hpp"

namespace opql {

enum class Split { kTrain, kTest };

std::string to_string(Split split);
Split split_from_string(const std::string& s);

/// An evaluable reward on X. Tabular rewards carry their table; parametric
/// ones carry family id + parameters so they can be dumped and rebuilt.
class RewardFn {
 public:
  RewardFn() = default;
  static RewardFn tabular(Eigen::VectorXd table, int num_actions);
  static RewardFn constant(double c);
  static RewardFn parametric(std::string family_id, Eigen::VectorXd params,
                             std::function<double(StateAction)> eval,
                             double bound);

  double operator()(StateAction x) const { return eval_(x); }
  const std::string& family_id() const { return family_id_; }
  const Eigen::VectorXd& params() const { return params_; }
  double bound() const { return bound_; }
  bool is_tabular() const { return family_id_ == "tabular"; }
  const Eigen::VectorXd& table() const;

 private:
  std::string family_id_ = "constant";
  Eigen::VectorXd params_;
  std::shared_ptr<const Eigen::VectorXd> table_;
  std::function<double(StateAction)> eval_ = [](StateAction) { return 0.0; };
  double bound_ = 0.0;
};

inline double evaluate_reward(const RewardFn& r, StateAction x) {
  return r(x);
}

ValueTable tabularize(const RewardFn& r, const TabularMdp& mdp);

/// Parametric reward family with separately recorded train/test parameter
/// ranges; the test range strictly contains the train range.
class RewardFamily {
 public:
  // r(s,a) = 1 when s equals the goal cell. Train goals come from the
  // (rows-1) x (cols-1) subgrid, test goals from the whole grid.
  static RewardFamily goal_cell(GridGeometry grid, int num_actions);
  // r = phi * w, w ~ Uniform[-hw, hw]^d per split.
  static RewardFamily feature_linear(Eigen::MatrixXd phi, int num_actions,
                                     double train_halfwidth = 1.0,
                                     double test_halfwidth = 1.25);
  // r(s,a) = exp(-manhattan(s, center)^2 / (2 sigma^2)); center split as in
  // goal_cell, actions ignored.
  static RewardFamily rbf_bump(GridGeometry grid, int num_actions,
                               double sigma = 1.5);

  RewardFn make(const Eigen::VectorXd& params) const;
  RewardFn sample(Split split, std::mt19937_64& rng) const;

  const std::string& family_id() const { return family_id_; }
  const Eigen::MatrixXd& feature_map() const { return phi_; }
  std::string describe_range(Split split) const;

 private:
  std::string family_id_;
  GridGeometry grid_;
  int num_actions_ = 0;
  Eigen::MatrixXd phi_;  // feature-linear only, X x d
  double sigma_ = 0.0;   // rbf-bump only
  double train_halfwidth_ = 0.0;
  double test_halfwidth_ = 0.0;
  std::vector<int> train_cells_;
  std::vector<int> test_cells_;
};

// d random Gaussian features plus a constant column, frozen by `seed`.
Eigen::MatrixXd make_default_feature_map(const TabularMdp& mdp,
                                         std::uint64_t seed,
                                         int num_random_features = 8);

struct RewardSampler {
  const RewardFamily* family = nullptr;
  Split split = Split::kTrain;
  std::mt19937_64 rng;

  RewardSampler(const RewardFamily& fam, Split sp, std::uint64_t seed)
      : family(&fam), split(sp), rng(seed) {}
};

RewardFn sample_reward(RewardSampler& sampler);

struct RewardSets {
  std::vector<RewardFn> train;
  std::vector<RewardFn> test;
};

RewardSets make_reward_sets(const RewardFamily& family, int num_train,
                            int num_test, std::uint64_t seed);

// Line-delimited {family_id, params, split} records.
void save_reward_set(const RewardSets& sets, const std::string& path);
RewardSets load_reward_set(const RewardFamily& family, const std::string& path);

}  // namespace opql
