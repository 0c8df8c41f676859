#include "opql/envs.hpp"

#include <cmath>
#include <stdexcept>

namespace opql {

namespace {

constexpr double kDefaultBenchGamma = 0.99;
constexpr double kExploreMix = 0.1;

PolicyTable mixed_greedy_policy(const TabularMdp& mdp, const ValueTable& q,
                                double explore) {
  PolicyTable greedy = greedy_policy(q, mdp.num_states(), mdp.num_actions());
  PolicyTable out = greedy;
  out.probs = (1.0 - explore) * greedy.probs +
              explore * Eigen::MatrixXd::Constant(mdp.num_states(),
                                                  mdp.num_actions(),
                                                  1.0 / mdp.num_actions());
  return out;
}

}  // namespace

Environment make_loop1(double gamma) {
  Eigen::MatrixXd p(1, 1);
  p << 1.0;
  Eigen::VectorXd init(1);
  init << 1.0;
  TabularMdp mdp(1, 1, p, init, gamma);
  return {"loop1", mdp, PolicyTable::uniform(1, 1), {}};
}

Environment make_chain2(double gamma) {
  // 0 -> 1, 1 -> 1, single action.
  Eigen::MatrixXd p(2, 2);
  p << 0.0, 1.0,
       0.0, 1.0;
  Eigen::VectorXd init(2);
  init << 1.0, 0.0;
  TabularMdp mdp(2, 1, p, init, gamma);
  return {"chain2", mdp, PolicyTable::uniform(2, 1), {}};
}

Environment make_bandit2(double gamma) {
  // One state, two self-loop actions.
  Eigen::MatrixXd p(2, 1);
  p << 1.0, 1.0;
  Eigen::VectorXd init(1);
  init << 1.0;
  TabularMdp mdp(1, 2, p, init, gamma);
  return {"bandit2", mdp, PolicyTable::uniform(1, 2), {}};
}

Environment make_grid5(double gamma, double slip) {
  const GridGeometry grid{5, 5};
  const int ns = grid.rows * grid.cols;
  const int na = 4;  // up, down, left, right
  const int dr[4] = {-1, 1, 0, 0};
  const int dc[4] = {0, 0, -1, 1};

  auto move = [&](int s, int a) {
    const int r = grid.row_of(s) + dr[a];
    const int c = grid.col_of(s) + dc[a];
    if (r < 0 || r >= grid.rows || c < 0 || c >= grid.cols) return s;
    return grid.cell(r, c);
  };

  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(ns * na, ns);
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a) {
      const int x = s * na + a;
      // Slip executes one of the other three actions uniformly.
      p(x, move(s, a)) += 1.0 - slip;
      for (int b = 0; b < na; ++b) {
        if (b == a) continue;
        p(x, move(s, b)) += slip / 3.0;
      }
    }
  Eigen::VectorXd init = Eigen::VectorXd::Constant(ns, 1.0 / ns);
  TabularMdp mdp(ns, na, p, init, gamma);

  // Center-goal base reward defines the target policy.
  ValueTable base = ValueTable::Zero(ns * na);
  const int goal = grid.cell(grid.rows / 2, grid.cols / 2);
  for (int a = 0; a < na; ++a) base[goal * na + a] = 1.0;
  const ValueTable q_star = exact_q_star(mdp, base, 1e-12);
  PolicyTable target = mixed_greedy_policy(mdp, q_star, kExploreMix);

  return {slip > 0.0 ? "grid5-slip" : "grid5", mdp, target, grid};
}

Environment make_env(const std::string& name, std::optional<double> gamma) {
  const double dg = gamma.value_or(kDefaultBenchGamma);
  if (name == "loop1") return make_loop1(gamma.value_or(0.5));
  if (name == "chain2") return make_chain2(gamma.value_or(0.5));
  if (name == "bandit2") return make_bandit2(gamma.value_or(0.5));
  if (name == "grid5") return make_grid5(dg, 0.0);
  if (name == "grid5-slip") return make_grid5(dg, 0.1);
  throw std::invalid_argument("unknown environment: " + name);
}

}  // namespace opql
