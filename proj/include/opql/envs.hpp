#pragma once

#include <optional>
#include <string>

#include "opql/mdp.hpp"

namespace opql {

struct GridGeometry {
  int rows = 0;
  int cols = 0;

  bool is_grid() const { return rows > 0 && cols > 0; }
  int cell(int r, int c) const { return r * cols + c; }
  int row_of(int s) const { return s / cols; }
  int col_of(int s) const { return s % cols; }
  int manhattan(int s1, int s2) const {
    return std::abs(row_of(s1) - row_of(s2)) +
           std::abs(col_of(s1) - col_of(s2));
  }
};

// A benchmark environment: the MDP plus the evaluation target policy. For
// grids the target policy mixes the greedy policy of a fixed center-goal
// reward with 10% uniform exploration, standing in for a trained agent.
struct Environment {
  std::string id;
  TabularMdp mdp;
  PolicyTable target_policy;
  GridGeometry grid;
};

Environment make_loop1(double gamma = 0.5);
Environment make_chain2(double gamma = 0.5);
Environment make_bandit2(double gamma = 0.5);
Environment make_grid5(double gamma, double slip = 0.0);

// Registry lookup: loop1 | chain2 | bandit2 | grid5 | grid5-slip.
Environment make_env(const std::string& name,
                     std::optional<double> gamma = std::nullopt);

}  // namespace opql
