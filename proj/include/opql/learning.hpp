#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "opql/dataset.hpp"
#include "opql/envs.hpp"
#include "opql/operator_net.hpp"
#include "opql/reward.hpp"

namespace opql {

enum class Mode { kEvaluation, kOptimization };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct TrainConfig {
  Mode mode = Mode::kEvaluation;
  Design design = Design::kAttention;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double target_update_rate = 0.005;
  long total_steps = 20000;
  int eval_every = 500;
  int m = 128;
  int K = 8;
  std::vector<int> hidden = {64, 64};
  int feature_dim = 16;
  nn::Activation activation = nn::Activation::kRelu;
  std::uint64_t seed = 0;
  // P_pi-hat as literally written: one sampled successor action instead of
  // the exact expectation over pi(.|s').
  bool sample_successor_action = false;
  int rewards_per_step = 1;
  bool maxout_linear_heads = false;
  long checkpoint_every = 0;

  void validate() const;
};

struct CurveRow {
  long step = 0;
  double train_mse = 0.0;
  double test_mse = 0.0;
  double bellman_loss = 0.0;
  double wall_clock_s = 0.0;
};

// Ground truth bundle for periodic metrics: exact q tables per reward and
// the initial-distribution weights over evaluation pairs.
struct EvalContext {
  const TabularMdp* mdp = nullptr;
  PolicyTable policy;
  std::vector<RewardFn> train_rewards;
  std::vector<RewardFn> test_rewards;
  std::vector<ValueTable> train_q;
  std::vector<ValueTable> test_q;
  Eigen::VectorXd pair_weights;  // over X, sums to 1

  static EvalContext build(const Environment& env, const RewardSets& rewards,
                           Mode mode, double q_star_tol = 1e-10);
};

double weighted_mse(const Eigen::VectorXd& pred, const ValueTable& truth,
                    const Eigen::VectorXd& weights);

// y_i = r(x_i) + gamma * E_{a' ~ pi(.|s_i')} G_target[r](s_i', a').
Eigen::VectorXd bellman_target_eval(const OperatorModel& target,
                                    const RewardFn& r,
                                    std::span<const Transition> batch,
                                    const PolicyTable& policy);
// y_i = r(x_i) + gamma * max_a' G_target[r](s_i', a').
Eigen::VectorXd bellman_target_opt(const OperatorModel& target,
                                   const RewardFn& r,
                                   std::span<const Transition> batch);

// theta' <- (1 - alpha) theta' + alpha theta, elementwise over every stream.
void soft_update(OperatorModel& target, const OperatorModel& live,
                 double alpha);

struct OperatorGrads {
  std::vector<nn::Grads> f;  // per head
  std::vector<nn::Grads> g;
  nn::Grads phi;
  nn::Grads psi;

  static OperatorGrads zeros_like(const OperatorModel& model);
  void set_zero();
};

// scale * mean squared residual against fixed targets, plus its gradient
// accumulated into `grads`. Several rewards are handled in one pass: rvecs
// is R x m, targets is R x batch, and the loss is averaged over both; the
// stream forwards and backwards are shared across rewards. The training
// loop and the finite-difference gradient checks share this path. Returns
// the unscaled mean loss.
double operator_loss_and_grads(const OperatorModel& model,
                               const nn::RowMatrix& rvecs,
                               const nn::RowMatrix& x_features,
                               const nn::RowMatrix& targets, double scale,
                               OperatorGrads& grads);
double operator_loss_and_grads(const OperatorModel& model,
                               const Eigen::VectorXd& rvec,
                               const nn::RowMatrix& x_features,
                               const Eigen::VectorXd& y, double scale,
                               OperatorGrads& grads);

struct TrainResult {
  OperatorModel model;
  std::vector<CurveRow> curve;
};

using CheckpointSink =
    std::function<void(long step, const OperatorModel& model)>;

// eval_policy is required in evaluation mode (it defines the Bellman
// targets); optimization mode ignores it. `eval` only enables the periodic
// MSE metrics.
TrainResult train_operator(const TrainConfig& config, const TabularMdp& mdp,
                           const TransitionDataset& dataset,
                           RewardSampler& sampler,
                           const PolicyTable* eval_policy,
                           const EvalContext* eval = nullptr,
                           const CheckpointSink& checkpoint = {});

// Same loop with an arbitrary reward stream, e.g. uniform draws from a
// frozen training set.
TrainResult train_operator(const TrainConfig& config, const TabularMdp& mdp,
                           const TransitionDataset& dataset,
                           const std::function<RewardFn()>& next_reward,
                           const PolicyTable* eval_policy,
                           const EvalContext* eval = nullptr,
                           const CheckpointSink& checkpoint = {});

// ---- successor-feature baseline ----

struct SfModel {
  Eigen::MatrixXd phi;  // X x d basis features
  double gamma = 0.0;
  PairFeaturizer feat;
  nn::Mlp psi_net;
  std::optional<Eigen::MatrixXd> psi_exact;  // X x d, tabular mode

  int d() const { return static_cast<int>(phi.cols()); }
  // psi at every x, from the exact table or the network.
  Eigen::MatrixXd psi_table() const;
};

struct SfTrainResult {
  SfModel model;
  std::vector<CurveRow> curve;
};

// psi = (I - gamma P_pi)^-1 Phi, the exact tabular successor features.
SfModel sf_fit_exact(const TabularMdp& mdp, const PolicyTable& policy,
                     Eigen::MatrixXd phi);

// Fitted iteration on the vector-valued Bellman equation for psi.
SfTrainResult sf_fit(const TabularMdp& mdp, const TransitionDataset& dataset,
                     Eigen::MatrixXd phi, const PolicyTable& policy,
                     const TrainConfig& config,
                     const EvalContext* eval = nullptr);

// Closed-form ridge readout of reward coefficients from dataset points.
// phi rows are indexed by s * num_actions + a. At ridge 0 a singular system
// is reported instead of solved.
Eigen::VectorXd ols_weights(const TransitionDataset& dataset,
                            const Eigen::MatrixXd& phi, int num_actions,
                            const RewardFn& r, double ridge = 1e-6);

// q-hat(x) = w^T psi(x) over all of X.
ValueTable sf_predict(const SfModel& model, const Eigen::VectorXd& w);

// The successor-feature predictor rewritten as a linear-design operator with
// f fixed to (1-gamma)/n * Sigma_phi^-1 phi(x_i) and g = psi.
OperatorModel sf_as_linear_operator(const SfModel& model,
                                    const TransitionDataset& dataset);

// Basis made of the training rewards themselves, the protocol used when
// comparing against operator designs.
Eigen::MatrixXd rewards_as_features(const std::vector<RewardFn>& rewards,
                                    const TabularMdp& mdp);

}  // namespace opql
