#pragma once

#include <random>

#include "opql/mdp.hpp"
#include "opql/reward.hpp"

namespace opql::testutil {

inline TabularMdp random_mdp(int num_states, int num_actions, double gamma,
                             std::mt19937_64& rng) {
  std::exponential_distribution<double> expo(1.0);
  Eigen::MatrixXd p(num_states * num_actions, num_states);
  for (int x = 0; x < p.rows(); ++x) {
    double sum = 0.0;
    for (int s = 0; s < num_states; ++s) {
      p(x, s) = expo(rng);
      sum += p(x, s);
    }
    p.row(x) /= sum;
  }
  Eigen::VectorXd init(num_states);
  double sum = 0.0;
  for (int s = 0; s < num_states; ++s) {
    init[s] = expo(rng);
    sum += init[s];
  }
  init /= sum;
  return TabularMdp(num_states, num_actions, std::move(p), std::move(init),
                    gamma);
}

inline PolicyTable random_policy(int num_states, int num_actions,
                                 std::mt19937_64& rng) {
  std::exponential_distribution<double> expo(1.0);
  Eigen::MatrixXd probs(num_states, num_actions);
  for (int s = 0; s < num_states; ++s) {
    double sum = 0.0;
    for (int a = 0; a < num_actions; ++a) {
      probs(s, a) = expo(rng);
      sum += probs(s, a);
    }
    probs.row(s) /= sum;
  }
  return {probs};
}

inline ValueTable random_reward_table(const TabularMdp& mdp, double bound,
                                      std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  ValueTable r(mdp.num_pairs());
  for (int x = 0; x < mdp.num_pairs(); ++x) r[x] = u(rng);
  return r;
}

// Truncated Neumann-series oracle for the visitation distribution,
// independent of the linear-solve implementation.
inline Eigen::VectorXd visitation_series(const TabularMdp& mdp,
                                         const PolicyTable& policy,
                                         StateAction x, int horizon) {
  const Eigen::MatrixXd pt = p_pi_matrix(mdp, policy).transpose();
  Eigen::VectorXd term = Eigen::VectorXd::Zero(mdp.num_pairs());
  term[mdp.pair_index(x)] = 1.0;
  Eigen::VectorXd acc = term;
  double disc = 1.0;
  for (int t = 1; t <= horizon; ++t) {
    term = pt * term;
    disc *= mdp.gamma();
    acc += disc * term;
  }
  return (1.0 - mdp.gamma()) * acc;
}

// Central finite differences of a scalar function of a flat parameter
// vector.
template <typename F>
Eigen::VectorXd finite_difference(const Eigen::VectorXd& at, F&& fn,
                                  double h = 1e-5) {
  Eigen::VectorXd grad(at.size());
  Eigen::VectorXd probe = at;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    probe[i] = at[i] + h;
    const double hi = fn(probe);
    probe[i] = at[i] - h;
    const double lo = fn(probe);
    probe[i] = at[i];
    grad[i] = (hi - lo) / (2.0 * h);
  }
  return grad;
}

}  // namespace opql::testutil
