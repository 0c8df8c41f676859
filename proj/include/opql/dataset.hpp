#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "opql/mdp.hpp"

namespace opql {

struct Transition {
  int s = 0;
  int a = 0;
  int s_next = 0;
};

// Offline transitions only; rewards are re-evaluated against whichever reward
// function the training step samples, so none are stored.
struct TransitionDataset {
  std::vector<Transition> records;

  struct Metadata {
    int format_version = 1;
    std::string env_id;
    double gamma = 0.0;
    std::string behavior;  // e.g. "eps-mix" or "final-buffer"
    double p = 0.0;        // random-action probability
    std::uint64_t seed = 0;
    std::string noise_sigma = "n/a";  // no discrete analog
  } meta;

  int size() const { return static_cast<int>(records.size()); }
};

struct BehaviorSpec {
  PolicyTable base;
  double p = 0.0;  // probability of a uniformly random action
};

TransitionDataset generate_dataset(const TabularMdp& mdp,
                                   const BehaviorSpec& behavior, int n,
                                   std::mt19937_64& rng,
                                   const std::string& env_id = "",
                                   int horizon = 200);

// Equal thirds from p = 1.0 / 0.3 / 0.1, approximating a replay buffer that
// drifted toward the target policy over training.
TransitionDataset generate_final_buffer(const TabularMdp& mdp,
                                        const PolicyTable& base, int n,
                                        std::mt19937_64& rng,
                                        const std::string& env_id = "",
                                        int horizon = 200);

void save_dataset(const TransitionDataset& ds, const std::string& path);
TransitionDataset load_dataset(const std::string& path);

}  // namespace opql
