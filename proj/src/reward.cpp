#include "opql/reward.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "opql/rng.hpp"

namespace opql {

std::string to_string(Split split) {
  return split == Split::kTrain ? "train" : "test";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw std::invalid_argument("unknown split: " + s);
}

RewardFn RewardFn::tabular(Eigen::VectorXd table, int num_actions) {
  RewardFn r;
  r.family_id_ = "tabular";
  auto shared = std::make_shared<const Eigen::VectorXd>(std::move(table));
  r.table_ = shared;
  r.bound_ = shared->size() > 0 ? shared->cwiseAbs().maxCoeff() : 0.0;
  r.eval_ = [shared, num_actions](StateAction x) {
    return (*shared)[x.s * num_actions + x.a];
  };
  return r;
}

RewardFn RewardFn::constant(double c) {
  RewardFn r;
  r.family_id_ = "constant";
  r.params_ = Eigen::VectorXd::Constant(1, c);
  r.bound_ = std::abs(c);
  r.eval_ = [c](StateAction) { return c; };
  return r;
}

RewardFn RewardFn::parametric(std::string family_id, Eigen::VectorXd params,
                              std::function<double(StateAction)> eval,
                              double bound) {
  RewardFn r;
  r.family_id_ = std::move(family_id);
  r.params_ = std::move(params);
  r.eval_ = std::move(eval);
  r.bound_ = bound;
  return r;
}

const Eigen::VectorXd& RewardFn::table() const {
  if (!table_) throw std::logic_error("RewardFn: not a tabular reward");
  return *table_;
}

ValueTable tabularize(const RewardFn& r, const TabularMdp& mdp) {
  if (r.is_tabular() && r.table().size() == mdp.num_pairs()) return r.table();
  ValueTable out(mdp.num_pairs());
  for (int s = 0; s < mdp.num_states(); ++s)
    for (int a = 0; a < mdp.num_actions(); ++a)
      out[mdp.pair_index(s, a)] = r({s, a});
  return out;
}

namespace {

std::vector<int> subgrid_cells(const GridGeometry& grid, int max_row,
                               int max_col) {
  std::vector<int> cells;
  for (int r = 0; r < max_row; ++r)
    for (int c = 0; c < max_col; ++c) cells.push_back(grid.cell(r, c));
  return cells;
}

}  // namespace

RewardFamily RewardFamily::goal_cell(GridGeometry grid, int num_actions) {
  if (!grid.is_grid())
    throw std::invalid_argument("goal_cell family needs grid geometry");
  RewardFamily f;
  f.family_id_ = "goal-cell";
  f.grid_ = grid;
  f.num_actions_ = num_actions;
  f.train_cells_ = subgrid_cells(grid, grid.rows - 1, grid.cols - 1);
  f.test_cells_ = subgrid_cells(grid, grid.rows, grid.cols);
  return f;
}

RewardFamily RewardFamily::feature_linear(Eigen::MatrixXd phi, int num_actions,
                                          double train_halfwidth,
                                          double test_halfwidth) {
  if (!(test_halfwidth > train_halfwidth))
    throw std::invalid_argument(
        "feature_linear: test range must strictly contain train range");
  RewardFamily f;
  f.family_id_ = "feature-linear";
  f.num_actions_ = num_actions;
  f.phi_ = std::move(phi);
  f.train_halfwidth_ = train_halfwidth;
  f.test_halfwidth_ = test_halfwidth;
  return f;
}

RewardFamily RewardFamily::rbf_bump(GridGeometry grid, int num_actions,
                                    double sigma) {
  if (!grid.is_grid())
    throw std::invalid_argument("rbf_bump family needs grid geometry");
  RewardFamily f;
  f.family_id_ = "rbf-bump";
  f.grid_ = grid;
  f.num_actions_ = num_actions;
  f.sigma_ = sigma;
  f.train_cells_ = subgrid_cells(grid, grid.rows - 1, grid.cols - 1);
  f.test_cells_ = subgrid_cells(grid, grid.rows, grid.cols);
  return f;
}

RewardFn RewardFamily::make(const Eigen::VectorXd& params) const {
  if (family_id_ == "goal-cell") {
    const int goal = static_cast<int>(params[0]);
    return RewardFn::parametric(
        family_id_, params,
        [goal](StateAction x) { return x.s == goal ? 1.0 : 0.0; }, 1.0);
  }
  if (family_id_ == "feature-linear") {
    if (params.size() != phi_.cols())
      throw std::invalid_argument("feature-linear: wrong parameter length");
    const Eigen::VectorXd values = phi_ * params;
    const int na = num_actions_;
    auto shared = std::make_shared<const Eigen::VectorXd>(values);
    const double bound = shared->cwiseAbs().maxCoeff();
    return RewardFn::parametric(
        family_id_, params,
        [shared, na](StateAction x) { return (*shared)[x.s * na + x.a]; },
        bound);
  }
  if (family_id_ == "rbf-bump") {
    const int center = static_cast<int>(params[0]);
    const double inv = 1.0 / (2.0 * sigma_ * sigma_);
    const GridGeometry grid = grid_;
    return RewardFn::parametric(
        family_id_, params,
        [center, inv, grid](StateAction x) {
          const double d = grid.manhattan(x.s, center);
          return std::exp(-d * d * inv);
        },
        1.0);
  }
  throw std::logic_error("RewardFamily: unknown family " + family_id_);
}

RewardFn RewardFamily::sample(Split split, std::mt19937_64& rng) const {
  if (family_id_ == "feature-linear") {
    const double hw =
        split == Split::kTrain ? train_halfwidth_ : test_halfwidth_;
    std::uniform_real_distribution<double> u(-hw, hw);
    Eigen::VectorXd w(phi_.cols());
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = u(rng);
    return make(w);
  }
  const auto& cells = split == Split::kTrain ? train_cells_ : test_cells_;
  std::uniform_int_distribution<int> u(0, static_cast<int>(cells.size()) - 1);
  Eigen::VectorXd p(1);
  p[0] = cells[u(rng)];
  return make(p);
}

std::string RewardFamily::describe_range(Split split) const {
  std::ostringstream os;
  if (family_id_ == "feature-linear") {
    const double hw =
        split == Split::kTrain ? train_halfwidth_ : test_halfwidth_;
    os << "w ~ Uniform[-" << hw << ", " << hw << "]^" << phi_.cols();
  } else {
    const auto& cells = split == Split::kTrain ? train_cells_ : test_cells_;
    os << cells.size() << " candidate cells";
  }
  return os.str();
}

Eigen::MatrixXd make_default_feature_map(const TabularMdp& mdp,
                                         std::uint64_t seed,
                                         int num_random_features) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd phi(mdp.num_pairs(), num_random_features + 1);
  for (int x = 0; x < mdp.num_pairs(); ++x) {
    for (int d = 0; d < num_random_features; ++d) phi(x, d) = gauss(rng);
    phi(x, num_random_features) = 1.0;
  }
  return phi;
}

RewardFn sample_reward(RewardSampler& sampler) {
  return sampler.family->sample(sampler.split, sampler.rng);
}

RewardSets make_reward_sets(const RewardFamily& family, int num_train,
                            int num_test, std::uint64_t seed) {
  RewardSets sets;
  RewardSampler train(family, Split::kTrain, derive_seed(seed, "train"));
  RewardSampler test(family, Split::kTest, derive_seed(seed, "test"));
  for (int i = 0; i < num_train; ++i) sets.train.push_back(sample_reward(train));
  for (int i = 0; i < num_test; ++i) sets.test.push_back(sample_reward(test));
  return sets;
}

namespace {

void write_reward_line(std::ostream& out, const RewardFn& r, Split split) {
  nlohmann::json j;
  j["family_id"] = r.family_id();
  j["params"] = std::vector<double>(r.params().data(),
                                    r.params().data() + r.params().size());
  j["split"] = to_string(split);
  out << j.dump() << "\n";
}

}  // namespace

void save_reward_set(const RewardSets& sets, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  for (const auto& r : sets.train) write_reward_line(out, r, Split::kTrain);
  for (const auto& r : sets.test) write_reward_line(out, r, Split::kTest);
}

RewardSets load_reward_set(const RewardFamily& family,
                           const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  RewardSets sets;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("reward set parse error at line " +
                               std::to_string(lineno) + ": " + e.what());
    }
    if (j.at("family_id").get<std::string>() != family.family_id())
      throw std::runtime_error("reward set family mismatch at line " +
                               std::to_string(lineno));
    const auto raw = j.at("params").get<std::vector<double>>();
    Eigen::VectorXd params = Eigen::Map<const Eigen::VectorXd>(
        raw.data(), static_cast<int>(raw.size()));
    const Split split = split_from_string(j.at("split").get<std::string>());
    (split == Split::kTrain ? sets.train : sets.test)
        .push_back(family.make(params));
  }
  return sets;
}

}  // namespace opql
