#include "opql/mdp.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "opql/rng.hpp"

namespace opql {

namespace {

constexpr double kRowSumTol = 1e-12;
constexpr int kMdpFormatVersion = 1;

void check_distribution(const Eigen::VectorXd& p, const std::string& what) {
  if (p.minCoeff() < 0.0)
    throw std::invalid_argument(what + " has a negative entry");
  if (std::abs(p.sum() - 1.0) > kRowSumTol)
    throw std::invalid_argument(what + " does not sum to 1");
}

}  // namespace

PolicyTable PolicyTable::uniform(int num_states, int num_actions) {
  PolicyTable p;
  p.probs = Eigen::MatrixXd::Constant(num_states, num_actions,
                                      1.0 / num_actions);
  return p;
}

PolicyTable PolicyTable::deterministic(const std::vector<int>& actions,
                                       int num_actions) {
  PolicyTable p;
  p.probs = Eigen::MatrixXd::Zero(static_cast<int>(actions.size()),
                                  num_actions);
  for (size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] < 0 || actions[s] >= num_actions)
      throw std::invalid_argument("action index out of range");
    p.probs(static_cast<int>(s), actions[s]) = 1.0;
  }
  return p;
}

void PolicyTable::validate() const {
  for (int s = 0; s < probs.rows(); ++s)
    check_distribution(probs.row(s).transpose(),
                       "policy row " + std::to_string(s));
}

TabularMdp::TabularMdp(int num_states, int num_actions,
                       Eigen::MatrixXd transition, Eigen::VectorXd initial_dist,
                       double gamma)
    : num_states_(num_states),
      num_actions_(num_actions),
      gamma_(gamma),
      transition_(std::move(transition)),
      initial_dist_(std::move(initial_dist)) {
  if (num_states_ <= 0 || num_actions_ <= 0)
    throw std::invalid_argument("state/action counts must be positive");
  if (transition_.rows() != num_pairs() || transition_.cols() != num_states_)
    throw std::invalid_argument("transition tensor has wrong shape");
  if (initial_dist_.size() != num_states_)
    throw std::invalid_argument("initial_dist has wrong length");
  if (!(gamma_ > 0.0 && gamma_ < 1.0))
    throw std::invalid_argument("gamma must lie strictly in (0,1)");
  for (int x = 0; x < num_pairs(); ++x)
    check_distribution(transition_.row(x).transpose(),
                       "transition row " + std::to_string(x));
  check_distribution(initial_dist_, "initial_dist");
}

std::vector<StateAction> TabularMdp::all_pairs() const {
  std::vector<StateAction> out;
  out.reserve(num_pairs());
  for (int s = 0; s < num_states_; ++s)
    for (int a = 0; a < num_actions_; ++a) out.push_back({s, a});
  return out;
}

std::string TabularMdp::to_json() const {
  nlohmann::json j;
  j["format_version"] = kMdpFormatVersion;
  j["num_states"] = num_states_;
  j["num_actions"] = num_actions_;
  j["gamma"] = gamma_;
  std::vector<double> flat;
  flat.reserve(static_cast<size_t>(num_pairs()) * num_states_);
  for (int x = 0; x < num_pairs(); ++x)
    for (int s = 0; s < num_states_; ++s) flat.push_back(transition_(x, s));
  j["transition"] = flat;
  j["initial_dist"] = std::vector<double>(
      initial_dist_.data(), initial_dist_.data() + initial_dist_.size());
  return j.dump();
}

TabularMdp TabularMdp::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (!j.contains("format_version") ||
      j["format_version"].get<int>() != kMdpFormatVersion)
    throw std::runtime_error("mdp file: unsupported format_version");
  const int ns = j.at("num_states").get<int>();
  const int na = j.at("num_actions").get<int>();
  const double gamma = j.at("gamma").get<double>();
  const auto flat = j.at("transition").get<std::vector<double>>();
  const auto init = j.at("initial_dist").get<std::vector<double>>();
  if (flat.size() != static_cast<size_t>(ns) * na * ns)
    throw std::runtime_error("mdp file: transition length mismatch");
  Eigen::MatrixXd p(ns * na, ns);
  for (int x = 0; x < ns * na; ++x)
    for (int s = 0; s < ns; ++s)
      p(x, s) = flat[static_cast<size_t>(x) * ns + s];
  Eigen::VectorXd d =
      Eigen::Map<const Eigen::VectorXd>(init.data(), static_cast<int>(init.size()));
  return TabularMdp(ns, na, std::move(p), std::move(d), gamma);
}

void TabularMdp::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << to_json() << "\n";
}

TabularMdp TabularMdp::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

ValueTable apply_p_pi(const TabularMdp& mdp, const PolicyTable& policy,
                      const ValueTable& f) {
  if (f.size() != mdp.num_pairs())
    throw std::invalid_argument("apply_p_pi: value table has wrong length");
  if (policy.probs.rows() != mdp.num_states() ||
      policy.probs.cols() != mdp.num_actions())
    throw std::invalid_argument("apply_p_pi: policy has wrong shape");
  // v(s') = sum_a' pi(a'|s') f(s',a'), then one transition step.
  Eigen::VectorXd v(mdp.num_states());
  for (int s = 0; s < mdp.num_states(); ++s) {
    double acc = 0.0;
    for (int a = 0; a < mdp.num_actions(); ++a)
      acc += policy.probs(s, a) * f[mdp.pair_index(s, a)];
    v[s] = acc;
  }
  return mdp.transition() * v;
}

ValueTable apply_p_max(const TabularMdp& mdp, const ValueTable& f) {
  if (f.size() != mdp.num_pairs())
    throw std::invalid_argument("apply_p_max: value table has wrong length");
  Eigen::VectorXd v(mdp.num_states());
  for (int s = 0; s < mdp.num_states(); ++s) {
    double best = f[mdp.pair_index(s, 0)];
    for (int a = 1; a < mdp.num_actions(); ++a)
      best = std::max(best, f[mdp.pair_index(s, a)]);
    v[s] = best;
  }
  return mdp.transition() * v;
}

Eigen::MatrixXd p_pi_matrix(const TabularMdp& mdp, const PolicyTable& policy) {
  const int n = mdp.num_pairs();
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (int x = 0; x < n; ++x)
    for (int s2 = 0; s2 < mdp.num_states(); ++s2) {
      const double ps = mdp.transition()(x, s2);
      if (ps == 0.0) continue;
      for (int a2 = 0; a2 < mdp.num_actions(); ++a2)
        p(x, mdp.pair_index(s2, a2)) = ps * policy.probs(s2, a2);
    }
  return p;
}

Eigen::MatrixXd exact_resolvent_matrix(const TabularMdp& mdp,
                                       const PolicyTable& policy) {
  const int n = mdp.num_pairs();
  const Eigen::MatrixXd a =
      Eigen::MatrixXd::Identity(n, n) - mdp.gamma() * p_pi_matrix(mdp, policy);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible())
    throw std::runtime_error(
        "exact_resolvent_matrix: I - gamma*P_pi reported singular");
  return lu.inverse();
}

ValueTable exact_q_pi(const TabularMdp& mdp, const PolicyTable& policy,
                      const ValueTable& r) {
  if (r.size() != mdp.num_pairs())
    throw std::invalid_argument("exact_q_pi: reward table has wrong length");
  const int n = mdp.num_pairs();
  const Eigen::MatrixXd a =
      Eigen::MatrixXd::Identity(n, n) - mdp.gamma() * p_pi_matrix(mdp, policy);
  return a.partialPivLu().solve(r);
}

ValueTable exact_q_star(const TabularMdp& mdp, const ValueTable& r,
                        double tol) {
  if (r.size() != mdp.num_pairs())
    throw std::invalid_argument("exact_q_star: reward table has wrong length");
  if (!(tol > 0.0)) throw std::invalid_argument("exact_q_star: tol must be > 0");
  const double gamma = mdp.gamma();
  const long cap = static_cast<long>(std::ceil(100.0 / (1.0 - gamma)));
  ValueTable q = ValueTable::Zero(mdp.num_pairs());
  for (long it = 0; it < cap; ++it) {
    ValueTable next = r + gamma * apply_p_max(mdp, q);
    const double change = (next - q).cwiseAbs().maxCoeff();
    q = std::move(next);
    if (change < tol * (1.0 - gamma)) return q;
  }
  throw std::runtime_error("exact_q_star: no convergence within iteration cap");
}

Eigen::VectorXd visitation_distribution(const TabularMdp& mdp,
                                        const PolicyTable& policy,
                                        StateAction x) {
  const int n = mdp.num_pairs();
  const int xi = mdp.pair_index(x);
  if (xi < 0 || xi >= n)
    throw std::invalid_argument("visitation_distribution: index out of range");
  // d(.|x) = (1-gamma) * (I - gamma*P_pi^T)^-1 delta_x.
  const Eigen::MatrixXd a =
      Eigen::MatrixXd::Identity(n, n) -
      mdp.gamma() * p_pi_matrix(mdp, policy).transpose();
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(n);
  delta[xi] = 1.0;
  return (1.0 - mdp.gamma()) * a.partialPivLu().solve(delta);
}

PolicyTable greedy_policy(const ValueTable& q, int num_states,
                          int num_actions) {
  if (q.size() != static_cast<Eigen::Index>(num_states) * num_actions)
    throw std::invalid_argument("greedy_policy: table has wrong length");
  if (!q.allFinite())
    throw std::invalid_argument("greedy_policy: non-finite value table");
  std::vector<int> best(num_states, 0);
  for (int s = 0; s < num_states; ++s) {
    int arg = 0;
    double val = q[s * num_actions];
    for (int a = 1; a < num_actions; ++a) {
      if (q[s * num_actions + a] > val) {
        val = q[s * num_actions + a];
        arg = a;
      }
    }
    best[s] = arg;
  }
  return PolicyTable::deterministic(best, num_actions);
}

double episodic_return(const TabularMdp& mdp, const PolicyTable& policy,
                       const std::function<double(StateAction)>& reward,
                       int horizon, std::mt19937_64& rng) {
  if (horizon < 1) throw std::invalid_argument("episodic_return: horizon < 1");
  int s = sample_categorical(mdp.initial_dist(), rng);
  double ret = 0.0;
  double disc = 1.0;
  for (int t = 0; t < horizon; ++t) {
    const int a = sample_categorical(policy.probs.row(s).transpose(), rng);
    ret += disc * reward({s, a});
    disc *= mdp.gamma();
    s = sample_categorical(mdp.transition().row(mdp.pair_index(s, a)).transpose(),
                           rng);
  }
  return ret;
}

}  // namespace opql
