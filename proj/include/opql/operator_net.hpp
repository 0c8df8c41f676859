#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "opql/dataset.hpp"
#include "opql/nn.hpp"
#include "opql/reward.hpp"

namespace opql {

enum class Design { kVanilla, kAttention, kLinear, kMaxout };

std::string to_string(Design d);
Design design_from_string(const std::string& s);

// Reference points at which a reward function is discretized into the
// operator input; frozen once selected.
struct ReferenceSet {
  std::vector<StateAction> points;
  int requested = 0;
  bool clamped = false;  // dataset had fewer distinct pairs than requested

  int size() const { return static_cast<int>(points.size()); }
};

// m distinct (s,a) pairs drawn uniformly without replacement from the
// dataset; clamps to all distinct pairs when the dataset is too small.
ReferenceSet select_reference_points(const TransitionDataset& dataset, int m,
                                     std::mt19937_64& rng);

// One-hot state ++ one-hot action embedding of x.
struct PairFeaturizer {
  int num_states = 0;
  int num_actions = 0;

  int dim() const { return num_states + num_actions; }
  void encode(StateAction x, double* row) const;
  nn::RowMatrix encode_batch(std::span<const StateAction> xs) const;
};

/// The learned operator G_theta mapping reward functions to value functions.
/// attention/linear hold one f/g stream pair, maxout holds K of them,
/// vanilla holds a phi stream over the discretized reward vector and a psi
/// stream over x. fixed_f / fixed_g_table replace the corresponding network
/// with precomputed values (used by the successor-feature operator view).
struct OperatorModel {
  Design design = Design::kAttention;
  Design maxout_head_design = Design::kAttention;
  double gamma = 0.99;
  int K = 1;
  PairFeaturizer feat;
  ReferenceSet refs;

  std::vector<nn::Mlp> f;  // per head: X -> R^p
  std::vector<nn::Mlp> g;  // per head: X -> R^p
  nn::Mlp phi;             // vanilla: R^m -> R^p
  nn::Mlp psi;             // vanilla: X -> R^p

  std::optional<nn::RowMatrix> fixed_f;        // m x p
  std::optional<nn::RowMatrix> fixed_g_table;  // |X| x p

  nn::RowMatrix ref_features;  // cached featurization of refs

  int m() const { return refs.size(); }
  void refresh_ref_features();
};

struct OperatorModelConfig {
  Design design = Design::kAttention;
  int K = 8;
  std::vector<int> hidden = {64, 64};
  int feature_dim = 16;
  nn::Activation activation = nn::Activation::kRelu;
  bool maxout_linear_heads = false;
  // Near-zero final layers put attention close to uniform weights at init.
  double fg_final_scale = 0.01;
};

OperatorModel make_operator_model(const TabularMdp& mdp, ReferenceSet refs,
                                  const OperatorModelConfig& config,
                                  std::mt19937_64& rng);

// r evaluated at the reference points.
Eigen::VectorXd reward_vector(const OperatorModel& model, const RewardFn& r);

// Softmax weights over the reference set (attention design or a maxout head).
Eigen::VectorXd attention_weights(const OperatorModel& model, StateAction x,
                                  int head = 0);
// Unnormalized bilinear weights (linear design).
Eigen::VectorXd linear_weights(const OperatorModel& model, StateAction x);

double apply_operator(const OperatorModel& model, const RewardFn& r,
                      StateAction x);

// Full design dispatch on a batch of featurized inputs; the workhorse behind
// apply_operator, targets and metric evaluation.
Eigen::VectorXd eval_batch(const OperatorModel& model,
                           const Eigen::VectorXd& rvec,
                           const nn::RowMatrix& x_features);
Eigen::VectorXd eval_pairs(const OperatorModel& model,
                           const Eigen::VectorXd& rvec,
                           std::span<const StateAction> xs);

// Predictions for many rewards over one query set; the per-head weight
// matrices are shared across rewards. rvecs is n_rewards x m; the result is
// n_rewards x queries.
nn::RowMatrix eval_many_rewards(const OperatorModel& model,
                                const nn::RowMatrix& rvecs,
                                const nn::RowMatrix& x_features);

// O(b+m) evaluation for the linear design: one pass over the reference set,
// then a dot product per query.
Eigen::VectorXd apply_linear_fast(const OperatorModel& model, const RewardFn& r,
                                  std::span<const StateAction> xs);
// O(b*m) per-query loop kept as the comparison baseline.
Eigen::VectorXd apply_linear_naive(const OperatorModel& model,
                                   const RewardFn& r,
                                   std::span<const StateAction> xs);

int maxout_active_head(const OperatorModel& model, const RewardFn& r,
                       StateAction x);

// Attention weights read as an estimate of the visitation distribution
// restricted to the reference set; diagnostic only.
Eigen::VectorXd implied_visitation(const OperatorModel& model, StateAction x);

// Evaluation of the design formula with externally supplied weights.
double apply_fixed_weights(const Eigen::VectorXd& weights,
                           const Eigen::VectorXd& rvec, double gamma);

void save_model(const OperatorModel& model, const std::string& path);
OperatorModel load_model(const std::string& path);

}  // namespace opql
