#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace opql {

struct StateAction {
  int s = 0;
  int a = 0;
  friend bool operator==(const StateAction&, const StateAction&) = default;
};

// Q-like table over X = S x A, indexed by x = s * num_actions + a.
using ValueTable = Eigen::VectorXd;

struct PolicyTable {
  Eigen::MatrixXd probs;  // S x A, rows on the simplex

  static PolicyTable uniform(int num_states, int num_actions);
  static PolicyTable deterministic(const std::vector<int>& actions,
                                   int num_actions);
  void validate() const;
  int num_states() const { return static_cast<int>(probs.rows()); }
  int num_actions() const { return static_cast<int>(probs.cols()); }
};

/// Finite MDP with a dense transition tensor; the ground-truth substrate for
/// every oracle in the project.
class TabularMdp {
 public:
  // transition is (S*A) x S, row (s,a) = p(.|s,a).
  TabularMdp(int num_states, int num_actions, Eigen::MatrixXd transition,
             Eigen::VectorXd initial_dist, double gamma);

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  int num_pairs() const { return num_states_ * num_actions_; }
  double gamma() const { return gamma_; }
  const Eigen::MatrixXd& transition() const { return transition_; }
  const Eigen::VectorXd& initial_dist() const { return initial_dist_; }

  int pair_index(int s, int a) const { return s * num_actions_ + a; }
  int pair_index(StateAction x) const { return pair_index(x.s, x.a); }
  StateAction pair_at(int x) const {
    return {x / num_actions_, x % num_actions_};
  }
  std::vector<StateAction> all_pairs() const;

  std::string to_json() const;
  static TabularMdp from_json(const std::string& text);
  void save(const std::string& path) const;
  static TabularMdp load(const std::string& path);

 private:
  int num_states_;
  int num_actions_;
  double gamma_;
  Eigen::MatrixXd transition_;
  Eigen::VectorXd initial_dist_;
};

// One-step expectation operators (the Bellman backup kernels).
ValueTable apply_p_pi(const TabularMdp& mdp, const PolicyTable& policy,
                      const ValueTable& f);
ValueTable apply_p_max(const TabularMdp& mdp, const ValueTable& f);

// X x X transition matrix of the Markov chain on state-action pairs.
Eigen::MatrixXd p_pi_matrix(const TabularMdp& mdp, const PolicyTable& policy);

/// (I - gamma * P_pi)^-1. Multiplying by any tabular reward gives q_pi.
Eigen::MatrixXd exact_resolvent_matrix(const TabularMdp& mdp,
                                       const PolicyTable& policy);

/// Solves q = r + gamma * P_pi q directly.
ValueTable exact_q_pi(const TabularMdp& mdp, const PolicyTable& policy,
                      const ValueTable& r);

/// Value iteration to sup-norm change < tol * (1 - gamma); throws after
/// 100 / (1 - gamma) iterations without convergence.
ValueTable exact_q_star(const TabularMdp& mdp, const ValueTable& r,
                        double tol);

/// Discounted visitation distribution d_pi(.|x), with the t = 0 term included
/// (p^0 = delta_x) so that q_pi(x) = <d_pi(.|x), r> / (1 - gamma) exactly.
Eigen::VectorXd visitation_distribution(const TabularMdp& mdp,
                                        const PolicyTable& policy,
                                        StateAction x);

// One-hot argmax policy; ties go to the lowest action index.
PolicyTable greedy_policy(const ValueTable& q, int num_states,
                          int num_actions);

// Single Monte-Carlo rollout of the discounted return from initial_dist.
double episodic_return(const TabularMdp& mdp, const PolicyTable& policy,
                       const std::function<double(StateAction)>& reward,
                       int horizon, std::mt19937_64& rng);

}  // namespace opql
