#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "opql/envs.hpp"
#include "opql/reward.hpp"
#include "opql/rng.hpp"

using namespace opql;

TEST_CASE("tabular and constant rewards evaluate directly") {
  Eigen::VectorXd table(2);
  table << 1.0, 0.0;
  const RewardFn r = RewardFn::tabular(table, 1);
  CHECK(r({0, 0}) == 1.0);
  CHECK(r({1, 0}) == 0.0);
  CHECK(r.bound() == 1.0);

  const RewardFn c = RewardFn::constant(-2.5);
  CHECK(c({0, 0}) == -2.5);
  CHECK(c({3, 0}) == -2.5);
  CHECK(evaluate_reward(c, {1, 0}) == -2.5);
}

TEST_CASE("goal-cell family definition") {
  const Environment env = make_grid5(0.9);
  const RewardFamily family =
      RewardFamily::goal_cell(env.grid, env.mdp.num_actions());
  Eigen::VectorXd p(1);
  p << 7;
  const RewardFn r = family.make(p);
  for (int a = 0; a < 4; ++a) {
    CHECK(r({7, a}) == 1.0);
    CHECK(r({8, a}) == 0.0);
  }
  CHECK(r.bound() == 1.0);
}

TEST_CASE("goal-cell split ranges: test strictly contains train") {
  const Environment env = make_grid5(0.9);
  const RewardFamily family =
      RewardFamily::goal_cell(env.grid, env.mdp.num_actions());
  std::mt19937_64 rng(3);
  std::set<int> train_goals, test_goals;
  for (int i = 0; i < 400; ++i) {
    train_goals.insert(
        static_cast<int>(family.sample(Split::kTrain, rng).params()[0]));
    test_goals.insert(
        static_cast<int>(family.sample(Split::kTest, rng).params()[0]));
  }
  // train goals live in the 4x4 subgrid
  for (int g : train_goals) {
    CHECK(env.grid.row_of(g) < 4);
    CHECK(env.grid.col_of(g) < 4);
  }
  CHECK(train_goals.size() == 16);
  CHECK(test_goals.size() == 25);
  for (int g : train_goals) CHECK(test_goals.count(g) == 1);
}

TEST_CASE("feature-linear family is exactly phi * w") {
  const Environment env = make_grid5(0.9);
  const Eigen::MatrixXd phi = make_default_feature_map(env.mdp, 99);
  CHECK(phi.cols() == 9);  // 8 gaussian + constant
  CHECK((phi.col(8) - Eigen::VectorXd::Ones(phi.rows())).cwiseAbs()
            .maxCoeff() == 0.0);
  const RewardFamily family =
      RewardFamily::feature_linear(phi, env.mdp.num_actions());

  Eigen::VectorXd w = Eigen::VectorXd::Zero(9);
  const RewardFn zero = family.make(w);
  const ValueTable table = tabularize(zero, env.mdp);
  CHECK(table.cwiseAbs().maxCoeff() == 0.0);

  std::mt19937_64 rng(5);
  const RewardFn r = family.sample(Split::kTrain, rng);
  const ValueTable values = tabularize(r, env.mdp);
  const ValueTable expected = phi * r.params();
  CHECK((values - expected).cwiseAbs().maxCoeff() == 0.0);
  CHECK(values.cwiseAbs().maxCoeff() <= r.bound());
  for (Eigen::Index i = 0; i < r.params().size(); ++i)
    CHECK(std::abs(r.params()[i]) <= 1.0);

  const RewardFn rt = family.sample(Split::kTest, rng);
  for (Eigen::Index i = 0; i < rt.params().size(); ++i)
    CHECK(std::abs(rt.params()[i]) <= 1.25);
}

TEST_CASE("rbf-bump peaks at the center and ignores actions") {
  const Environment env = make_grid5(0.9);
  const RewardFamily family =
      RewardFamily::rbf_bump(env.grid, env.mdp.num_actions());
  Eigen::VectorXd p(1);
  p << 12;  // grid center
  const RewardFn r = family.make(p);
  CHECK(r({12, 0}) == doctest::Approx(1.0));
  CHECK(r({12, 3}) == doctest::Approx(1.0));
  const double sigma = 1.5;
  // one cell away
  CHECK(r({11, 0}) == doctest::Approx(std::exp(-1.0 / (2 * sigma * sigma))));
  // manhattan distance 2
  CHECK(r({10, 1}) == doctest::Approx(std::exp(-4.0 / (2 * sigma * sigma))));
  CHECK(r.bound() == 1.0);
}

TEST_CASE("tabularize is idempotent on tabular rewards") {
  const Environment env = make_chain2(0.5);
  Eigen::VectorXd table(2);
  table << 0.25, -1.0;
  const RewardFn r = RewardFn::tabular(table, 1);
  const ValueTable out = tabularize(r, env.mdp);
  CHECK((out - table).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sampler reproducibility is bitwise") {
  const Environment env = make_grid5(0.9);
  const RewardFamily family =
      RewardFamily::feature_linear(make_default_feature_map(env.mdp, 1),
                                   env.mdp.num_actions());
  RewardSampler a(family, Split::kTrain, 123);
  RewardSampler b(family, Split::kTrain, 123);
  for (int i = 0; i < 20; ++i) {
    const RewardFn ra = sample_reward(a);
    const RewardFn rb = sample_reward(b);
    REQUIRE(ra.params().size() == rb.params().size());
    for (Eigen::Index j = 0; j < ra.params().size(); ++j)
      CHECK(ra.params()[j] == rb.params()[j]);
  }
  RewardSampler c(family, Split::kTrain, 124);
  const RewardFn rc = sample_reward(c);
  RewardSampler d(family, Split::kTrain, 123);
  const RewardFn rd = sample_reward(d);
  CHECK(rc.params() != rd.params());
}

TEST_CASE("reward sets hold 32 train and 16 test rewards by default") {
  const Environment env = make_grid5(0.9);
  const RewardFamily family =
      RewardFamily::goal_cell(env.grid, env.mdp.num_actions());
  const RewardSets sets = make_reward_sets(family, 32, 16, 7);
  CHECK(sets.train.size() == 32);
  CHECK(sets.test.size() == 16);
  for (const auto& r : sets.train) CHECK(r.bound() <= 1.0);
}

TEST_CASE("reward set files round-trip and report parse errors") {
  const Environment env = make_grid5(0.9);
  const RewardFamily family =
      RewardFamily::goal_cell(env.grid, env.mdp.num_actions());
  const RewardSets sets = make_reward_sets(family, 5, 3, 7);
  const std::string path = "/tmp/opql_test_rewards.jsonl";
  save_reward_set(sets, path);
  const RewardSets loaded = load_reward_set(family, path);
  REQUIRE(loaded.train.size() == 5);
  REQUIRE(loaded.test.size() == 3);
  for (size_t i = 0; i < sets.train.size(); ++i)
    CHECK(loaded.train[i].params()[0] == sets.train[i].params()[0]);

  {
    std::ofstream bad(path, std::ios::app);
    bad << "{not json\n";
  }
  CHECK_THROWS_WITH_AS(load_reward_set(family, path),
                       doctest::Contains("line 9"), std::runtime_error);
  std::filesystem::remove(path);
}
