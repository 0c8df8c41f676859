#include "opql/dataset.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "opql/rng.hpp"

namespace opql {

namespace {

constexpr int kDatasetFormatVersion = 1;

void roll_transitions(const TabularMdp& mdp, const BehaviorSpec& behavior,
                      int n, int horizon, std::mt19937_64& rng,
                      std::vector<Transition>& out) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> any_action(0, mdp.num_actions() - 1);
  int collected = 0;
  while (collected < n) {
    int s = sample_categorical(mdp.initial_dist(), rng);
    for (int t = 0; t < horizon && collected < n; ++t) {
      int a;
      if (unit(rng) < behavior.p)
        a = any_action(rng);
      else
        a = sample_categorical(behavior.base.probs.row(s).transpose(), rng);
      const int s_next = sample_categorical(
          mdp.transition().row(mdp.pair_index(s, a)).transpose(), rng);
      out.push_back({s, a, s_next});
      ++collected;
      s = s_next;
    }
  }
}

}  // namespace

TransitionDataset generate_dataset(const TabularMdp& mdp,
                                   const BehaviorSpec& behavior, int n,
                                   std::mt19937_64& rng,
                                   const std::string& env_id, int horizon) {
  if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
  if (behavior.p < 0.0 || behavior.p > 1.0)
    throw std::invalid_argument("generate_dataset: p must lie in [0,1]");
  TransitionDataset ds;
  ds.records.reserve(n);
  roll_transitions(mdp, behavior, n, horizon, rng, ds.records);
  ds.meta.env_id = env_id;
  ds.meta.gamma = mdp.gamma();
  ds.meta.behavior = "eps-mix";
  ds.meta.p = behavior.p;
  return ds;
}

TransitionDataset generate_final_buffer(const TabularMdp& mdp,
                                        const PolicyTable& base, int n,
                                        std::mt19937_64& rng,
                                        const std::string& env_id,
                                        int horizon) {
  if (n < 1) throw std::invalid_argument("generate_final_buffer: n >= 1");
  TransitionDataset ds;
  ds.records.reserve(n);
  const double phases[3] = {1.0, 0.3, 0.1};
  for (int k = 0; k < 3; ++k) {
    const int chunk = k < 2 ? n / 3 : n - 2 * (n / 3);
    if (chunk == 0) continue;
    roll_transitions(mdp, {base, phases[k]}, chunk, horizon, rng, ds.records);
  }
  ds.meta.env_id = env_id;
  ds.meta.gamma = mdp.gamma();
  ds.meta.behavior = "final-buffer";
  ds.meta.p = -1.0;
  return ds;
}

void save_dataset(const TransitionDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  nlohmann::json j;
  j["format_version"] = ds.meta.format_version;
  j["env"] = ds.meta.env_id;
  j["gamma"] = ds.meta.gamma;
  j["behavior"] = ds.meta.behavior;
  j["p"] = ds.meta.p;
  j["n"] = ds.size();
  j["seed"] = ds.meta.seed;
  j["noise_sigma"] = ds.meta.noise_sigma;
  out << j.dump() << "\n";
  for (const auto& t : ds.records)
    out << t.s << " " << t.a << " " << t.s_next << "\n";
}

TransitionDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path + ": missing metadata header (line 1)");
  TransitionDataset ds;
  int expected_n = 0;
  try {
    nlohmann::json j = nlohmann::json::parse(line);
    ds.meta.format_version = j.at("format_version").get<int>();
    if (ds.meta.format_version != kDatasetFormatVersion)
      throw std::runtime_error("unsupported format_version " +
                               std::to_string(ds.meta.format_version));
    ds.meta.env_id = j.at("env").get<std::string>();
    ds.meta.gamma = j.at("gamma").get<double>();
    ds.meta.behavior = j.at("behavior").get<std::string>();
    ds.meta.p = j.at("p").get<double>();
    ds.meta.seed = j.at("seed").get<std::uint64_t>();
    ds.meta.noise_sigma = j.at("noise_sigma").get<std::string>();
    expected_n = j.at("n").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": bad metadata header (line 1): " +
                             e.what());
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    Transition t;
    if (!(ss >> t.s >> t.a >> t.s_next))
      throw std::runtime_error(path + ": parse error at line " +
                               std::to_string(lineno));
    std::string extra;
    if (ss >> extra)
      throw std::runtime_error(path + ": trailing fields at line " +
                               std::to_string(lineno));
    ds.records.push_back(t);
  }
  if (ds.size() != expected_n)
    throw std::runtime_error(path + ": record count " +
                             std::to_string(ds.size()) +
                             " does not match header n=" +
                             std::to_string(expected_n));
  return ds;
}

}  // namespace opql
