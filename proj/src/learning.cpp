#include "opql/learning.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "opql/kernels.hpp"
#include "opql/rng.hpp"

namespace opql {

std::string to_string(Mode m) {
  return m == Mode::kEvaluation ? "evaluation" : "optimization";
}

Mode mode_from_string(const std::string& s) {
  if (s == "evaluation") return Mode::kEvaluation;
  if (s == "optimization") return Mode::kOptimization;
  throw std::invalid_argument("unknown mode: " + s);
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(target_update_rate > 0.0 && target_update_rate <= 1.0))
    throw std::invalid_argument("target_update_rate must lie in (0,1]");
  if (total_steps < 0) throw std::invalid_argument("total_steps must be >= 0");
  if (eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
  if (m < 1) throw std::invalid_argument("m must be >= 1");
  if (K < 1) throw std::invalid_argument("K must be >= 1");
  if (rewards_per_step < 1)
    throw std::invalid_argument("rewards_per_step must be >= 1");
  if (!(learning_rate >= 0.0))
    throw std::invalid_argument("learning_rate must be >= 0");
}

EvalContext EvalContext::build(const Environment& env,
                               const RewardSets& rewards, Mode mode,
                               double q_star_tol) {
  EvalContext ctx;
  ctx.mdp = &env.mdp;
  ctx.policy = env.target_policy;
  ctx.train_rewards = rewards.train;
  ctx.test_rewards = rewards.test;

  const int n = env.mdp.num_pairs();
  ctx.pair_weights.resize(n);
  for (int s = 0; s < env.mdp.num_states(); ++s)
    for (int a = 0; a < env.mdp.num_actions(); ++a)
      ctx.pair_weights[env.mdp.pair_index(s, a)] =
          env.mdp.initial_dist()[s] / env.mdp.num_actions();

  auto solve_all = [&](const std::vector<RewardFn>& rs,
                       std::vector<ValueTable>& out) {
    if (mode == Mode::kEvaluation) {
      const Eigen::MatrixXd a =
          Eigen::MatrixXd::Identity(n, n) -
          env.mdp.gamma() * p_pi_matrix(env.mdp, env.target_policy);
      const auto lu = a.partialPivLu();
      for (const auto& r : rs)
        out.push_back(lu.solve(tabularize(r, env.mdp)));
    } else {
      for (const auto& r : rs)
        out.push_back(exact_q_star(env.mdp, tabularize(r, env.mdp), q_star_tol));
    }
  };
  solve_all(rewards.train, ctx.train_q);
  solve_all(rewards.test, ctx.test_q);
  return ctx;
}

double weighted_mse(const Eigen::VectorXd& pred, const ValueTable& truth,
                    const Eigen::VectorXd& weights) {
  const Eigen::VectorXd e = pred - truth;
  return (weights.array() * e.array().square()).sum();
}

namespace {

std::vector<StateAction> enumerate_pairs(const PairFeaturizer& feat) {
  std::vector<StateAction> out;
  out.reserve(static_cast<size_t>(feat.num_states) * feat.num_actions);
  for (int s = 0; s < feat.num_states; ++s)
    for (int a = 0; a < feat.num_actions; ++a) out.push_back({s, a});
  return out;
}

Eigen::VectorXd state_values_under_policy(const Eigen::VectorXd& q,
                                          const PolicyTable& policy) {
  const int ns = policy.num_states();
  const int na = policy.num_actions();
  Eigen::VectorXd v(ns);
  for (int s = 0; s < ns; ++s) {
    double acc = 0.0;
    for (int a = 0; a < na; ++a) acc += policy.probs(s, a) * q[s * na + a];
    v[s] = acc;
  }
  return v;
}

Eigen::VectorXd state_values_max(const Eigen::VectorXd& q, int ns, int na) {
  Eigen::VectorXd v(ns);
  for (int s = 0; s < ns; ++s) {
    double best = q[s * na];
    for (int a = 1; a < na; ++a) best = std::max(best, q[s * na + a]);
    v[s] = best;
  }
  return v;
}

}  // namespace

Eigen::VectorXd bellman_target_eval(const OperatorModel& target,
                                    const RewardFn& r,
                                    std::span<const Transition> batch,
                                    const PolicyTable& policy) {
  const Eigen::VectorXd rvec = reward_vector(target, r);
  const auto pairs = enumerate_pairs(target.feat);
  const Eigen::VectorXd qhat = eval_pairs(target, rvec, pairs);
  const Eigen::VectorXd v = state_values_under_policy(qhat, policy);
  Eigen::VectorXd y(static_cast<int>(batch.size()));
  for (size_t i = 0; i < batch.size(); ++i)
    y[static_cast<int>(i)] =
        r({batch[i].s, batch[i].a}) + target.gamma * v[batch[i].s_next];
  return y;
}

Eigen::VectorXd bellman_target_opt(const OperatorModel& target,
                                   const RewardFn& r,
                                   std::span<const Transition> batch) {
  const Eigen::VectorXd rvec = reward_vector(target, r);
  const auto pairs = enumerate_pairs(target.feat);
  const Eigen::VectorXd qhat = eval_pairs(target, rvec, pairs);
  const Eigen::VectorXd v =
      state_values_max(qhat, target.feat.num_states, target.feat.num_actions);
  Eigen::VectorXd y(static_cast<int>(batch.size()));
  for (size_t i = 0; i < batch.size(); ++i)
    y[static_cast<int>(i)] =
        r({batch[i].s, batch[i].a}) + target.gamma * v[batch[i].s_next];
  return y;
}

namespace {

void blend(nn::Mlp& dst, const nn::Mlp& src, double alpha) {
  if (dst.sizes != src.sizes)
    throw std::invalid_argument("soft_update: mismatched network shapes");
  for (int l = 0; l < dst.num_layers(); ++l) {
    dst.weights[l] = (1.0 - alpha) * dst.weights[l] + alpha * src.weights[l];
    dst.biases[l] = (1.0 - alpha) * dst.biases[l] + alpha * src.biases[l];
  }
}

}  // namespace

void soft_update(OperatorModel& target, const OperatorModel& live,
                 double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("soft_update: alpha must lie in (0,1]");
  if (target.f.size() != live.f.size() || target.g.size() != live.g.size())
    throw std::invalid_argument("soft_update: mismatched head counts");
  for (size_t k = 0; k < live.f.size(); ++k) blend(target.f[k], live.f[k], alpha);
  for (size_t k = 0; k < live.g.size(); ++k) blend(target.g[k], live.g[k], alpha);
  if (live.design == Design::kVanilla) {
    blend(target.phi, live.phi, alpha);
    blend(target.psi, live.psi, alpha);
  }
}

OperatorGrads OperatorGrads::zeros_like(const OperatorModel& model) {
  OperatorGrads g;
  for (const auto& net : model.f) g.f.push_back(nn::Grads::zeros_like(net));
  for (const auto& net : model.g) g.g.push_back(nn::Grads::zeros_like(net));
  if (model.design == Design::kVanilla) {
    g.phi = nn::Grads::zeros_like(model.phi);
    g.psi = nn::Grads::zeros_like(model.psi);
  }
  return g;
}

void OperatorGrads::set_zero() {
  for (auto& x : f) x.set_zero();
  for (auto& x : g) x.set_zero();
  phi.set_zero();
  psi.set_zero();
}

namespace {

// dG = dL F and dF = dL^T G, then back through both stream networks.
void backprop_head(const OperatorModel& model, int k,
                   const nn::ForwardCache& f_cache,
                   const nn::ForwardCache& g_cache, const nn::RowMatrix& f_out,
                   const nn::RowMatrix& g_out, const nn::RowMatrix& d_logits,
                   OperatorGrads& grads) {
  const int rows = static_cast<int>(g_out.rows());
  const int m = model.m();
  const int p = static_cast<int>(f_out.cols());
  nn::RowMatrix d_g(rows, p);
  kernels::grad_input(d_logits.data(), f_out.data(), rows, p, m, d_g.data());
  nn::RowMatrix d_f = nn::RowMatrix::Zero(m, p);
  kernels::grad_weights(d_logits.data(), g_out.data(), rows, p, m, d_f.data());
  nn::backward(model.g[k], g_cache, d_g, grads.g[k]);
  nn::backward(model.f[k], f_cache, d_f, grads.f[k]);
}

}  // namespace

double operator_loss_and_grads(const OperatorModel& model,
                               const nn::RowMatrix& rvecs,
                               const nn::RowMatrix& x_features,
                               const nn::RowMatrix& targets, double scale,
                               OperatorGrads& grads) {
  const int b = static_cast<int>(x_features.rows());
  const int n_r = static_cast<int>(rvecs.rows());
  if (targets.rows() != n_r || targets.cols() != b)
    throw std::invalid_argument("operator_loss_and_grads: target shape");
  if (rvecs.cols() != model.m())
    throw std::invalid_argument("operator_loss_and_grads: reward length");
  const double inv1mg = 1.0 / (1.0 - model.gamma);
  // d(loss)/d(pred) carries the averaging over rewards and batch.
  const double c_scale = 2.0 * scale / (static_cast<double>(b) * n_r);
  double loss = 0.0;

  switch (model.design) {
    case Design::kAttention:
    case Design::kLinear: {
      nn::ForwardCache f_cache, g_cache;
      const nn::RowMatrix f_out =
          nn::forward(model.f[0], model.ref_features, &f_cache);
      const nn::RowMatrix g_out = nn::forward(model.g[0], x_features, &g_cache);
      const int m = model.m();
      const int p = static_cast<int>(f_out.cols());
      nn::RowMatrix logits(b, m);
      kernels::pair_dot(g_out.data(), b, f_out.data(), m, p, logits.data());
      if (model.design == Design::kAttention)
        kernels::softmax_rows(logits.data(), b, m);

      nn::RowMatrix d_logits = nn::RowMatrix::Zero(b, m);
      Eigen::VectorXd weighted(b);
      for (int r = 0; r < n_r; ++r) {
        kernels::weighted_sum(logits.data(), b, m, rvecs.row(r).data(),
                              weighted.data());
        const Eigen::VectorXd pred = weighted * inv1mg;
        const Eigen::VectorXd e = pred - targets.row(r).transpose();
        loss += e.squaredNorm();
        const Eigen::VectorXd c = (c_scale * inv1mg) * e;
        if (model.design == Design::kAttention) {
          kernels::softmax_weighted_sum_grad_add(
              logits.data(), rvecs.row(r).data(), weighted.data(), c.data(),
              b, m, d_logits.data());
        } else {
          for (int i = 0; i < b; ++i) d_logits.row(i) += c[i] * rvecs.row(r);
        }
      }
      backprop_head(model, 0, f_cache, g_cache, f_out, g_out, d_logits, grads);
      return loss / (static_cast<double>(b) * n_r);
    }
    case Design::kVanilla: {
      nn::ForwardCache phi_cache, psi_cache;
      const nn::RowMatrix phi_out = nn::forward(model.phi, rvecs, &phi_cache);
      const nn::RowMatrix psi_out =
          nn::forward(model.psi, x_features, &psi_cache);
      const nn::RowMatrix pred = phi_out * psi_out.transpose();  // n_r x b
      const nn::RowMatrix e = pred - targets;
      loss = e.squaredNorm();
      const nn::RowMatrix c = c_scale * e;
      nn::RowMatrix d_phi = c * psi_out;                 // n_r x p
      nn::RowMatrix d_psi = c.transpose() * phi_out;     // b x p
      nn::backward(model.psi, psi_cache, d_psi, grads.psi);
      nn::backward(model.phi, phi_cache, d_phi, grads.phi);
      return loss / (static_cast<double>(b) * n_r);
    }
    case Design::kMaxout: {
      const int m = model.m();
      const int K = model.K;
      std::vector<nn::ForwardCache> f_caches(K), g_caches(K);
      std::vector<nn::RowMatrix> f_outs(K), g_outs(K), weights(K);
      const bool attention_heads =
          model.maxout_head_design == Design::kAttention;
      for (int k = 0; k < K; ++k) {
        f_outs[k] = nn::forward(model.f[k], model.ref_features, &f_caches[k]);
        g_outs[k] = nn::forward(model.g[k], x_features, &g_caches[k]);
        nn::RowMatrix logits(b, m);
        kernels::pair_dot(g_outs[k].data(), b, f_outs[k].data(), m,
                          static_cast<int>(f_outs[k].cols()), logits.data());
        if (attention_heads) kernels::softmax_rows(logits.data(), b, m);
        weights[k] = std::move(logits);
      }
      std::vector<nn::RowMatrix> d_logits(K);
      for (int k = 0; k < K; ++k) d_logits[k] = nn::RowMatrix::Zero(b, m);
      std::vector<bool> touched(K, false);
      nn::RowMatrix vals(K, b);
      Eigen::VectorXd ws(b);
      for (int r = 0; r < n_r; ++r) {
        for (int k = 0; k < K; ++k) {
          kernels::weighted_sum(weights[k].data(), b, m, rvecs.row(r).data(),
                                ws.data());
          vals.row(k) = ws.transpose();
        }
        for (int i = 0; i < b; ++i) {
          int best = 0;
          for (int k = 1; k < K; ++k)
            if (vals(k, i) > vals(best, i)) best = k;
          const double pred = vals(best, i) * inv1mg;
          const double e = pred - targets(r, i);
          loss += e * e;
          const double ci = c_scale * inv1mg * e;
          // Subgradient of the max: only the active head sees this example.
          touched[best] = true;
          double* row = d_logits[best].data() +
                        static_cast<std::int64_t>(i) * m;
          const double* wrow = weights[best].data() +
                               static_cast<std::int64_t>(i) * m;
          if (attention_heads) {
            const double yi = vals(best, i);
            for (int j = 0; j < m; ++j)
              row[j] += ci * wrow[j] * (rvecs(r, j) - yi);
          } else {
            for (int j = 0; j < m; ++j) row[j] += ci * rvecs(r, j);
          }
        }
      }
      for (int k = 0; k < K; ++k) {
        if (!touched[k]) continue;
        backprop_head(model, k, f_caches[k], g_caches[k], f_outs[k],
                      g_outs[k], d_logits[k], grads);
      }
      return loss / (static_cast<double>(b) * n_r);
    }
  }
  throw std::logic_error("operator_loss_and_grads: bad design");
}

double operator_loss_and_grads(const OperatorModel& model,
                               const Eigen::VectorXd& rvec,
                               const nn::RowMatrix& x_features,
                               const Eigen::VectorXd& y, double scale,
                               OperatorGrads& grads) {
  nn::RowMatrix rvecs(1, rvec.size());
  rvecs.row(0) = rvec.transpose();
  nn::RowMatrix targets(1, y.size());
  targets.row(0) = y.transpose();
  return operator_loss_and_grads(model, rvecs, x_features, targets, scale,
                                 grads);
}

namespace {

// One training run; owns the live/target models and every optimizer stream.
class OperatorTrainer {
 public:
  OperatorTrainer(const TrainConfig& cfg, const TabularMdp& mdp,
                  const TransitionDataset& dataset,
                  std::function<RewardFn()> next_reward,
                  const PolicyTable* eval_policy, const EvalContext* eval,
                  const CheckpointSink& checkpoint)
      : cfg_(cfg),
        dataset_(dataset),
        next_reward_(std::move(next_reward)),
        eval_(eval),
        checkpoint_(checkpoint),
        rng_batch_(derive_seed(cfg.seed, "batch")),
        rng_init_(derive_seed(cfg.seed, "init")),
        rng_succ_(derive_seed(cfg.seed, "successor")) {
    cfg_.validate();
    if (dataset_.records.empty())
      throw std::invalid_argument("train_operator: empty dataset");
    if (cfg_.mode == Mode::kEvaluation) {
      if (!eval_policy)
        throw std::invalid_argument(
            "train_operator: evaluation mode needs a target policy");
      policy_ = *eval_policy;
    }

    std::mt19937_64 rng_refs(derive_seed(cfg_.seed, "refs"));
    ReferenceSet refs = select_reference_points(dataset_, cfg_.m, rng_refs);
    OperatorModelConfig mc;
    mc.design = cfg_.design;
    mc.K = cfg_.K;
    mc.hidden = cfg_.hidden;
    mc.feature_dim = cfg_.feature_dim;
    mc.activation = cfg_.activation;
    mc.maxout_linear_heads = cfg_.maxout_linear_heads;
    live_ = make_operator_model(mdp, std::move(refs), mc, rng_init_);
    target_ = live_;

    for (auto& net : live_.f) adam_f_.push_back(nn::AdamState::init(net, adam()));
    for (auto& net : live_.g) adam_g_.push_back(nn::AdamState::init(net, adam()));
    if (cfg_.design == Design::kVanilla) {
      adam_phi_ = nn::AdamState::init(live_.phi, adam());
      adam_psi_ = nn::AdamState::init(live_.psi, adam());
    }
    grads_ = OperatorGrads::zeros_like(live_);

    all_pairs_ = enumerate_pairs(live_.feat);
    all_features_ = live_.feat.encode_batch(all_pairs_);
    if (eval_) {
      train_rvecs_ = reward_matrix(eval_->train_rewards);
      test_rvecs_ = reward_matrix(eval_->test_rewards);
    }
  }

  TrainResult run() {
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                           start)
          .count();
    };
    record(0, elapsed());
    for (long t = 1; t <= cfg_.total_steps; ++t) {
      step(t);
      if (t % cfg_.eval_every == 0 || t == cfg_.total_steps)
        record(t, elapsed());
      if (checkpoint_ && cfg_.checkpoint_every > 0 &&
          (t % cfg_.checkpoint_every == 0 || t == cfg_.total_steps))
        checkpoint_(t, live_);
    }
    return {std::move(live_), std::move(curve_)};
  }

 private:
  nn::AdamConfig adam() const {
    nn::AdamConfig c;
    c.learning_rate = cfg_.learning_rate;
    return c;
  }

  nn::RowMatrix reward_matrix(const std::vector<RewardFn>& rewards) const {
    nn::RowMatrix out(static_cast<int>(rewards.size()), live_.m());
    for (size_t i = 0; i < rewards.size(); ++i)
      out.row(static_cast<int>(i)) =
          reward_vector(live_, rewards[i]).transpose();
    return out;
  }

  std::vector<int> sample_batch() {
    std::uniform_int_distribution<int> pick(0, dataset_.size() - 1);
    std::vector<int> idx(cfg_.batch_size);
    for (auto& i : idx) i = pick(rng_batch_);
    return idx;
  }

  // Targets for a block of rewards at once; the target model is evaluated
  // on all of X with the per-head structure shared across rewards.
  nn::RowMatrix compute_targets(const std::vector<RewardFn>& rewards,
                                const nn::RowMatrix& rvecs,
                                const std::vector<int>& idx) {
    const int n_r = static_cast<int>(rewards.size());
    const nn::RowMatrix qhat =
        eval_many_rewards(target_, rvecs, all_features_);  // n_r x X
    const int na = live_.feat.num_actions;
    nn::RowMatrix y(n_r, cfg_.batch_size);
    for (int r = 0; r < n_r; ++r) {
      const Eigen::VectorXd q_r = qhat.row(r).transpose();
      if (cfg_.mode == Mode::kOptimization) {
        const Eigen::VectorXd v =
            state_values_max(q_r, live_.feat.num_states, na);
        for (int i = 0; i < cfg_.batch_size; ++i) {
          const Transition& tr = dataset_.records[idx[i]];
          y(r, i) = rewards[r]({tr.s, tr.a}) + live_.gamma * v[tr.s_next];
        }
      } else if (cfg_.sample_successor_action) {
        for (int i = 0; i < cfg_.batch_size; ++i) {
          const Transition& tr = dataset_.records[idx[i]];
          const int a2 = sample_categorical(
              policy_.probs.row(tr.s_next).transpose(), rng_succ_);
          y(r, i) = rewards[r]({tr.s, tr.a}) +
                    live_.gamma * q_r[tr.s_next * na + a2];
        }
      } else {
        const Eigen::VectorXd v = state_values_under_policy(q_r, policy_);
        for (int i = 0; i < cfg_.batch_size; ++i) {
          const Transition& tr = dataset_.records[idx[i]];
          y(r, i) = rewards[r]({tr.s, tr.a}) + live_.gamma * v[tr.s_next];
        }
      }
    }
    return y;
  }

  void step(long t) {
    const std::vector<int> idx = sample_batch();
    grads_.set_zero();
    batch_pairs_.clear();
    for (int i : idx)
      batch_pairs_.push_back({dataset_.records[i].s, dataset_.records[i].a});
    const nn::RowMatrix xb = live_.feat.encode_batch(batch_pairs_);
    std::vector<RewardFn> rewards;
    rewards.reserve(cfg_.rewards_per_step);
    for (int rep = 0; rep < cfg_.rewards_per_step; ++rep)
      rewards.push_back(next_reward_());
    nn::RowMatrix rvecs(cfg_.rewards_per_step, live_.m());
    for (int r = 0; r < cfg_.rewards_per_step; ++r)
      rvecs.row(r) = reward_vector(live_, rewards[r]).transpose();
    const nn::RowMatrix y = compute_targets(rewards, rvecs, idx);
    const double loss = operator_loss_and_grads(live_, rvecs, xb, y, 1.0,
                                                grads_);
    if (!std::isfinite(loss))
      throw std::runtime_error("train_operator: non-finite loss at step " +
                               std::to_string(t) + " (design " +
                               to_string(cfg_.design) + ")");
    last_loss_ = loss;
    if (cfg_.learning_rate > 0.0) {
      for (size_t k = 0; k < live_.f.size(); ++k)
        nn::adam_step(adam_f_[k], live_.f[k], grads_.f[k]);
      for (size_t k = 0; k < live_.g.size(); ++k)
        nn::adam_step(adam_g_[k], live_.g[k], grads_.g[k]);
      if (cfg_.design == Design::kVanilla) {
        nn::adam_step(adam_phi_, live_.phi, grads_.phi);
        nn::adam_step(adam_psi_, live_.psi, grads_.psi);
      }
    }
    soft_update(target_, live_, cfg_.target_update_rate);
  }

  double mse_over(const nn::RowMatrix& rvecs,
                  const std::vector<ValueTable>& truths) {
    if (rvecs.rows() == 0) return 0.0;
    const nn::RowMatrix preds = eval_many_rewards(live_, rvecs, all_features_);
    double acc = 0.0;
    for (int i = 0; i < preds.rows(); ++i)
      acc += weighted_mse(preds.row(i).transpose(), truths[i],
                          eval_->pair_weights);
    return acc / preds.rows();
  }

  void record(long step, double wall) {
    CurveRow row;
    row.step = step;
    row.bellman_loss = last_loss_;
    row.wall_clock_s = wall;
    if (eval_) {
      row.train_mse = mse_over(train_rvecs_, eval_->train_q);
      row.test_mse = mse_over(test_rvecs_, eval_->test_q);
    } else {
      row.train_mse = std::nan("");
      row.test_mse = std::nan("");
    }
    curve_.push_back(row);
  }

  TrainConfig cfg_;
  const TransitionDataset& dataset_;
  std::function<RewardFn()> next_reward_;
  const EvalContext* eval_;
  CheckpointSink checkpoint_;
  PolicyTable policy_;

  std::mt19937_64 rng_batch_;
  std::mt19937_64 rng_init_;
  std::mt19937_64 rng_succ_;

  OperatorModel live_;
  OperatorModel target_;
  std::vector<nn::AdamState> adam_f_, adam_g_;
  nn::AdamState adam_phi_, adam_psi_;
  OperatorGrads grads_;

  std::vector<StateAction> all_pairs_;
  nn::RowMatrix all_features_;
  nn::RowMatrix train_rvecs_, test_rvecs_;
  std::vector<StateAction> batch_pairs_;

  double last_loss_ = 0.0;
  std::vector<CurveRow> curve_;
};

}  // namespace

TrainResult train_operator(const TrainConfig& config, const TabularMdp& mdp,
                           const TransitionDataset& dataset,
                           const std::function<RewardFn()>& next_reward,
                           const PolicyTable* eval_policy,
                           const EvalContext* eval,
                           const CheckpointSink& checkpoint) {
  OperatorTrainer trainer(config, mdp, dataset, next_reward, eval_policy,
                          eval, checkpoint);
  return trainer.run();
}

TrainResult train_operator(const TrainConfig& config, const TabularMdp& mdp,
                           const TransitionDataset& dataset,
                           RewardSampler& sampler,
                           const PolicyTable* eval_policy,
                           const EvalContext* eval,
                           const CheckpointSink& checkpoint) {
  return train_operator(
      config, mdp, dataset,
      [&sampler]() { return sample_reward(sampler); }, eval_policy, eval,
      checkpoint);
}

// ---- successor features ----

Eigen::MatrixXd SfModel::psi_table() const {
  if (psi_exact) return *psi_exact;
  const auto pairs = enumerate_pairs(feat);
  const nn::RowMatrix features = feat.encode_batch(pairs);
  return nn::forward(psi_net, features);
}

SfModel sf_fit_exact(const TabularMdp& mdp, const PolicyTable& policy,
                     Eigen::MatrixXd phi) {
  if (phi.rows() != mdp.num_pairs())
    throw std::invalid_argument("sf_fit_exact: phi has wrong row count");
  SfModel model;
  model.gamma = mdp.gamma();
  model.feat = {mdp.num_states(), mdp.num_actions()};
  const int n = mdp.num_pairs();
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) -
                            mdp.gamma() * p_pi_matrix(mdp, policy);
  model.psi_exact = a.partialPivLu().solve(phi);
  model.phi = std::move(phi);
  return model;
}

namespace {

// Shared pieces of the OLS readout over a fixed dataset.
struct OlsCache {
  Eigen::MatrixXd phi_ds;    // n x d rows at dataset points
  Eigen::MatrixXd sigma;     // empirical second moment of phi
  Eigen::LDLT<Eigen::MatrixXd> factor;

  OlsCache(const TransitionDataset& dataset, const Eigen::MatrixXd& phi,
           int num_actions, double ridge) {
    const int n = dataset.size();
    const int d = static_cast<int>(phi.cols());
    phi_ds.resize(n, d);
    for (int i = 0; i < n; ++i)
      phi_ds.row(i) =
          phi.row(dataset.records[i].s * num_actions + dataset.records[i].a);
    sigma = phi_ds.transpose() * phi_ds / n;
    factor.compute(sigma + ridge * Eigen::MatrixXd::Identity(d, d));
  }

  Eigen::VectorXd solve(const TransitionDataset& dataset,
                        const RewardFn& r) const {
    const int n = dataset.size();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(phi_ds.cols());
    for (int i = 0; i < n; ++i)
      b += phi_ds.row(i).transpose() *
           r({dataset.records[i].s, dataset.records[i].a});
    b /= n;
    return factor.solve(b);
  }
};

}  // namespace

Eigen::VectorXd ols_weights(const TransitionDataset& dataset,
                            const Eigen::MatrixXd& phi, int num_actions,
                            const RewardFn& r, double ridge) {
  if (ridge < 0.0) throw std::invalid_argument("ols_weights: ridge must be >= 0");
  if (dataset.records.empty())
    throw std::invalid_argument("ols_weights: empty dataset");
  const int n = dataset.size();
  const int d = static_cast<int>(phi.cols());
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < n; ++i) {
    const auto& t = dataset.records[i];
    const Eigen::RowVectorXd row = phi.row(t.s * num_actions + t.a);
    sigma.noalias() += row.transpose() * row;
    b.noalias() += row.transpose() * r({t.s, t.a});
  }
  sigma /= n;
  b /= n;
  if (ridge == 0.0) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sigma);
    if (!lu.isInvertible())
      throw std::runtime_error(
          "ols_weights: Sigma_phi is singular at lambda=0; raise the ridge");
    return lu.solve(b);
  }
  return (sigma + ridge * Eigen::MatrixXd::Identity(d, d)).ldlt().solve(b);
}

ValueTable sf_predict(const SfModel& model, const Eigen::VectorXd& w) {
  if (w.size() != model.d())
    throw std::invalid_argument("sf_predict: coefficient length mismatch");
  return model.psi_table() * w;
}

OperatorModel sf_as_linear_operator(const SfModel& model,
                                    const TransitionDataset& dataset) {
  const int n = dataset.size();
  if (n == 0) throw std::invalid_argument("sf_as_linear_operator: empty dataset");
  const int d = model.d();
  Eigen::MatrixXd phi_ds(n, d);
  for (int i = 0; i < n; ++i)
    phi_ds.row(i) = model.phi.row(dataset.records[i].s * model.feat.num_actions +
                                  dataset.records[i].a);
  const Eigen::MatrixXd sigma = phi_ds.transpose() * phi_ds / n;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(sigma);
  if (!lu.isInvertible())
    throw std::runtime_error(
        "sf_as_linear_operator: singular Sigma_phi; add an l2 ridge");
  const Eigen::MatrixXd sigma_inv = lu.inverse();

  OperatorModel op;
  op.design = Design::kLinear;
  op.gamma = model.gamma;
  op.K = 1;
  op.feat = model.feat;
  op.refs.requested = n;
  for (int i = 0; i < n; ++i)
    op.refs.points.push_back({dataset.records[i].s, dataset.records[i].a});
  op.fixed_f = ((1.0 - model.gamma) / n) * (phi_ds * sigma_inv);
  op.fixed_g_table = model.psi_table();
  op.refresh_ref_features();
  return op;
}

Eigen::MatrixXd rewards_as_features(const std::vector<RewardFn>& rewards,
                                    const TabularMdp& mdp) {
  Eigen::MatrixXd phi(mdp.num_pairs(), static_cast<int>(rewards.size()));
  for (size_t r = 0; r < rewards.size(); ++r)
    phi.col(static_cast<int>(r)) = tabularize(rewards[r], mdp);
  return phi;
}

SfTrainResult sf_fit(const TabularMdp& mdp, const TransitionDataset& dataset,
                     Eigen::MatrixXd phi, const PolicyTable& policy,
                     const TrainConfig& config, const EvalContext* eval) {
  config.validate();
  if (dataset.records.empty())
    throw std::invalid_argument("sf_fit: empty dataset");
  if (phi.rows() != mdp.num_pairs())
    throw std::invalid_argument("sf_fit: phi has wrong row count");

  SfModel model;
  model.gamma = mdp.gamma();
  model.feat = {mdp.num_states(), mdp.num_actions()};
  model.phi = std::move(phi);
  const int d = model.d();

  std::mt19937_64 rng_init(derive_seed(config.seed, "sf-init"));
  std::mt19937_64 rng_batch(derive_seed(config.seed, "sf-batch"));
  std::vector<int> sizes{model.feat.dim()};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(d);
  model.psi_net = nn::Mlp::random(sizes, config.activation, rng_init);
  nn::Mlp target = model.psi_net;

  nn::AdamConfig ac;
  ac.learning_rate = config.learning_rate;
  nn::AdamState adam = nn::AdamState::init(model.psi_net, ac);
  nn::Grads grads = nn::Grads::zeros_like(model.psi_net);

  const auto pairs = enumerate_pairs(model.feat);
  const nn::RowMatrix all_features = model.feat.encode_batch(pairs);
  const OlsCache ols(dataset, model.phi, model.feat.num_actions, 1e-6);

  // Per-reward OLS coefficients are fixed by the dataset, so they are
  // computed once up front.
  std::vector<Eigen::VectorXd> w_train, w_test;
  if (eval) {
    for (const auto& r : eval->train_rewards)
      w_train.push_back(ols.solve(dataset, r));
    for (const auto& r : eval->test_rewards)
      w_test.push_back(ols.solve(dataset, r));
  }

  std::vector<CurveRow> curve;
  double last_loss = 0.0;
  const auto start = std::chrono::steady_clock::now();
  auto record = [&](long step) {
    CurveRow row;
    row.step = step;
    row.bellman_loss = last_loss;
    row.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (eval) {
      const Eigen::MatrixXd psi_all = nn::forward(model.psi_net, all_features);
      auto mse = [&](const std::vector<Eigen::VectorXd>& ws,
                     const std::vector<ValueTable>& truths) {
        if (ws.empty()) return 0.0;
        double acc = 0.0;
        for (size_t i = 0; i < ws.size(); ++i)
          acc += weighted_mse(psi_all * ws[i], truths[i], eval->pair_weights);
        return acc / ws.size();
      };
      row.train_mse = mse(w_train, eval->train_q);
      row.test_mse = mse(w_test, eval->test_q);
    } else {
      row.train_mse = std::nan("");
      row.test_mse = std::nan("");
    }
    curve.push_back(row);
  };

  std::uniform_int_distribution<int> pick(0, dataset.size() - 1);
  std::vector<StateAction> batch_pairs(config.batch_size);
  record(0);
  for (long t = 1; t <= config.total_steps; ++t) {
    const nn::RowMatrix psi_target_all = nn::forward(target, all_features);
    // v(s) = E_{a ~ pi}[psi(s,a)] rows.
    nn::RowMatrix v(mdp.num_states(), d);
    for (int s = 0; s < mdp.num_states(); ++s) {
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(d);
      for (int a = 0; a < mdp.num_actions(); ++a)
        acc += policy.probs(s, a) * psi_target_all.row(mdp.pair_index(s, a));
      v.row(s) = acc;
    }

    std::vector<int> idx(config.batch_size);
    for (auto& i : idx) i = pick(rng_batch);
    for (int i = 0; i < config.batch_size; ++i)
      batch_pairs[i] = {dataset.records[idx[i]].s, dataset.records[idx[i]].a};
    const nn::RowMatrix xb = model.feat.encode_batch(batch_pairs);

    nn::ForwardCache cache;
    const nn::RowMatrix psi_out = nn::forward(model.psi_net, xb, &cache);
    nn::RowMatrix y(config.batch_size, d);
    for (int i = 0; i < config.batch_size; ++i) {
      const Transition& tr = dataset.records[idx[i]];
      y.row(i) = model.phi.row(mdp.pair_index(tr.s, tr.a)) +
                 mdp.gamma() * v.row(tr.s_next);
    }
    const nn::RowMatrix resid = psi_out - y;
    last_loss = resid.squaredNorm() / config.batch_size;
    if (!std::isfinite(last_loss))
      throw std::runtime_error("sf_fit: non-finite loss at step " +
                               std::to_string(t));
    const nn::RowMatrix d_psi = (2.0 / config.batch_size) * resid;
    grads.set_zero();
    nn::backward(model.psi_net, cache, d_psi, grads);
    if (config.learning_rate > 0.0)
      nn::adam_step(adam, model.psi_net, grads);
    for (int l = 0; l < target.num_layers(); ++l) {
      target.weights[l] = (1.0 - config.target_update_rate) * target.weights[l] +
                          config.target_update_rate * model.psi_net.weights[l];
      target.biases[l] = (1.0 - config.target_update_rate) * target.biases[l] +
                         config.target_update_rate * model.psi_net.biases[l];
    }
    if (t % config.eval_every == 0 || t == config.total_steps) record(t);
  }
  return {std::move(model), std::move(curve)};
}

}  // namespace opql
