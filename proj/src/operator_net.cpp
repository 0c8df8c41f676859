#include "opql/operator_net.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <stdexcept>

#include "opql/kernels.hpp"
#include "opql/rng.hpp"

namespace opql {

std::string to_string(Design d) {
  switch (d) {
    case Design::kVanilla: return "vanilla";
    case Design::kAttention: return "attention";
    case Design::kLinear: return "linear";
    case Design::kMaxout: return "maxout";
  }
  return "?";
}

Design design_from_string(const std::string& s) {
  if (s == "vanilla") return Design::kVanilla;
  if (s == "attention") return Design::kAttention;
  if (s == "linear") return Design::kLinear;
  if (s == "maxout") return Design::kMaxout;
  throw std::invalid_argument("unknown design: " + s);
}

ReferenceSet select_reference_points(const TransitionDataset& dataset, int m,
                                     std::mt19937_64& rng) {
  if (dataset.records.empty())
    throw std::invalid_argument("select_reference_points: empty dataset");
  if (m < 1)
    throw std::invalid_argument("select_reference_points: m must be >= 1");
  std::set<std::pair<int, int>> seen;
  std::vector<StateAction> distinct;
  for (const auto& t : dataset.records)
    if (seen.insert({t.s, t.a}).second) distinct.push_back({t.s, t.a});

  ReferenceSet refs;
  refs.requested = m;
  if (m >= static_cast<int>(distinct.size())) {
    refs.points = std::move(distinct);
    refs.clamped = m > refs.size();
    if (refs.clamped)
      std::cerr << "select_reference_points: requested m=" << m << " but only "
                << refs.size() << " distinct pairs exist; using all\n";
    return refs;
  }
  // Partial Fisher-Yates for m draws without replacement.
  std::vector<StateAction>& pool = distinct;
  for (int i = 0; i < m; ++i) {
    std::uniform_int_distribution<int> pick(i, static_cast<int>(pool.size()) - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  refs.points.assign(pool.begin(), pool.begin() + m);
  return refs;
}

void PairFeaturizer::encode(StateAction x, double* row) const {
  std::fill(row, row + dim(), 0.0);
  row[x.s] = 1.0;
  row[num_states + x.a] = 1.0;
}

nn::RowMatrix PairFeaturizer::encode_batch(
    std::span<const StateAction> xs) const {
  nn::RowMatrix out(static_cast<int>(xs.size()), dim());
  for (size_t i = 0; i < xs.size(); ++i)
    encode(xs[i], out.data() + i * static_cast<size_t>(dim()));
  return out;
}

void OperatorModel::refresh_ref_features() {
  ref_features = feat.encode_batch(refs.points);
}

OperatorModel make_operator_model(const TabularMdp& mdp, ReferenceSet refs,
                                  const OperatorModelConfig& config,
                                  std::mt19937_64& rng) {
  if (refs.size() < 1)
    throw std::invalid_argument("make_operator_model: empty reference set");
  OperatorModel model;
  model.design = config.design;
  model.maxout_head_design =
      config.maxout_linear_heads ? Design::kLinear : Design::kAttention;
  model.gamma = mdp.gamma();
  model.K = config.design == Design::kMaxout ? config.K : 1;
  if (model.K < 1) throw std::invalid_argument("make_operator_model: K >= 1");
  model.feat = {mdp.num_states(), mdp.num_actions()};
  model.refs = std::move(refs);
  model.refresh_ref_features();

  auto stream_sizes = [&](int in) {
    std::vector<int> sizes{in};
    sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
    sizes.push_back(config.feature_dim);
    return sizes;
  };
  const auto xs_sizes = stream_sizes(model.feat.dim());

  if (config.design == Design::kVanilla) {
    model.phi = nn::Mlp::random(stream_sizes(model.m()), config.activation, rng);
    model.psi = nn::Mlp::random(xs_sizes, config.activation, rng);
    return model;
  }
  const int heads = config.design == Design::kMaxout ? config.K : 1;
  for (int k = 0; k < heads; ++k) {
    model.f.push_back(nn::Mlp::random(xs_sizes, config.activation, rng,
                                      config.fg_final_scale));
    model.g.push_back(nn::Mlp::random(xs_sizes, config.activation, rng,
                                      config.fg_final_scale));
  }
  return model;
}

Eigen::VectorXd reward_vector(const OperatorModel& model, const RewardFn& r) {
  Eigen::VectorXd v(model.m());
  for (int j = 0; j < model.m(); ++j) v[j] = r(model.refs.points[j]);
  if (!v.allFinite())
    throw std::runtime_error("reward_vector: non-finite reward value");
  return v;
}

namespace {

// Head outputs at the reference set: the f network, or the fixed matrix.
nn::RowMatrix head_f_out(const OperatorModel& model, int head) {
  if (model.fixed_f) return *model.fixed_f;
  return nn::forward(model.f.at(head), model.ref_features);
}

nn::RowMatrix head_g_out(const OperatorModel& model, int head,
                         const nn::RowMatrix& x_features,
                         std::span<const StateAction> xs) {
  if (model.fixed_g_table) {
    nn::RowMatrix out(static_cast<int>(xs.size()), model.fixed_g_table->cols());
    for (size_t i = 0; i < xs.size(); ++i) {
      const int idx = xs[i].s * model.feat.num_actions + xs[i].a;
      out.row(i) = model.fixed_g_table->row(idx);
    }
    return out;
  }
  return nn::forward(model.g.at(head), x_features);
}

Eigen::VectorXd head_values(const OperatorModel& model, int head, Design kind,
                            const Eigen::VectorXd& rvec,
                            const nn::RowMatrix& x_features,
                            std::span<const StateAction> xs) {
  const nn::RowMatrix f_out = head_f_out(model, head);
  const nn::RowMatrix g_out = head_g_out(model, head, x_features, xs);
  const int rows = static_cast<int>(g_out.rows());
  nn::RowMatrix logits(rows, model.m());
  kernels::pair_dot(g_out.data(), rows, f_out.data(), model.m(),
                    static_cast<int>(f_out.cols()), logits.data());
  if (kind == Design::kAttention) {
    if (!logits.allFinite())
      throw std::runtime_error("attention_weights: non-finite logits");
    kernels::softmax_rows(logits.data(), rows, model.m());
  }
  Eigen::VectorXd out(rows);
  kernels::weighted_sum(logits.data(), rows, model.m(), rvec.data(),
                        out.data());
  return out / (1.0 - model.gamma);
}

}  // namespace

Eigen::VectorXd eval_batch(const OperatorModel& model,
                           const Eigen::VectorXd& rvec,
                           const nn::RowMatrix& x_features) {
  return [&]() -> Eigen::VectorXd {
    switch (model.design) {
      case Design::kVanilla: {
        nn::RowMatrix r_in(1, model.m());
        r_in.row(0) = rvec.transpose();
        const nn::RowMatrix phi_out = nn::forward(model.phi, r_in);
        const nn::RowMatrix psi_out = nn::forward(model.psi, x_features);
        return psi_out * phi_out.row(0).transpose();
      }
      case Design::kAttention:
      case Design::kLinear:
        return head_values(model, 0, model.design, rvec, x_features, {});
      case Design::kMaxout: {
        Eigen::VectorXd best = head_values(model, 0, model.maxout_head_design,
                                           rvec, x_features, {});
        for (int k = 1; k < model.K; ++k)
          best = best.cwiseMax(head_values(model, k, model.maxout_head_design,
                                           rvec, x_features, {}));
        return best;
      }
    }
    throw std::logic_error("eval_batch: bad design");
  }();
}

Eigen::VectorXd eval_pairs(const OperatorModel& model,
                           const Eigen::VectorXd& rvec,
                           std::span<const StateAction> xs) {
  if (model.fixed_g_table) {
    // Featurization is bypassed; dispatch with the pair indices instead.
    switch (model.design) {
      case Design::kAttention:
      case Design::kLinear:
        return head_values(model, 0, model.design, rvec, nn::RowMatrix(), xs);
      default:
        throw std::logic_error("fixed_g_table requires attention/linear");
    }
  }
  return eval_batch(model, rvec, model.feat.encode_batch(xs));
}

Eigen::VectorXd attention_weights(const OperatorModel& model, StateAction x,
                                  int head) {
  const Design kind = model.design == Design::kMaxout
                          ? model.maxout_head_design
                          : model.design;
  if (kind != Design::kAttention)
    throw std::logic_error("attention_weights: head is not attention-shaped");
  const StateAction pts[1] = {x};
  const nn::RowMatrix xf = model.feat.encode_batch(pts);
  const nn::RowMatrix f_out = head_f_out(model, head);
  const nn::RowMatrix g_out = head_g_out(model, head, xf, pts);
  nn::RowMatrix logits(1, model.m());
  kernels::pair_dot(g_out.data(), 1, f_out.data(), model.m(),
                    static_cast<int>(f_out.cols()), logits.data());
  if (!logits.allFinite())
    throw std::runtime_error("attention_weights: non-finite logits");
  kernels::softmax_rows(logits.data(), 1, model.m());
  return logits.row(0).transpose();
}

Eigen::VectorXd linear_weights(const OperatorModel& model, StateAction x) {
  if (model.design != Design::kLinear)
    throw std::logic_error("linear_weights: model is not the linear design");
  const StateAction pts[1] = {x};
  const nn::RowMatrix xf = model.feat.encode_batch(pts);
  const nn::RowMatrix f_out = head_f_out(model, 0);
  const nn::RowMatrix g_out = head_g_out(model, 0, xf, pts);
  nn::RowMatrix w(1, model.m());
  kernels::pair_dot(g_out.data(), 1, f_out.data(), model.m(),
                    static_cast<int>(f_out.cols()), w.data());
  return w.row(0).transpose();
}

double apply_operator(const OperatorModel& model, const RewardFn& r,
                      StateAction x) {
  const Eigen::VectorXd rvec = reward_vector(model, r);
  const StateAction pts[1] = {x};
  return eval_pairs(model, rvec, pts)[0];
}

namespace {

nn::RowMatrix head_weight_matrix(const OperatorModel& model, int head,
                                 Design kind,
                                 const nn::RowMatrix& x_features) {
  const nn::RowMatrix f_out = head_f_out(model, head);
  const nn::RowMatrix g_out = head_g_out(model, head, x_features, {});
  const int rows = static_cast<int>(g_out.rows());
  nn::RowMatrix logits(rows, model.m());
  kernels::pair_dot(g_out.data(), rows, f_out.data(), model.m(),
                    static_cast<int>(f_out.cols()), logits.data());
  if (kind == Design::kAttention)
    kernels::softmax_rows(logits.data(), rows, model.m());
  return logits;
}

}  // namespace

nn::RowMatrix eval_many_rewards(const OperatorModel& model,
                                const nn::RowMatrix& rvecs,
                                const nn::RowMatrix& x_features) {
  if (rvecs.cols() != model.m())
    throw std::invalid_argument("eval_many_rewards: reward vector length");
  const double scale = 1.0 / (1.0 - model.gamma);
  switch (model.design) {
    case Design::kVanilla: {
      const nn::RowMatrix phi_out = nn::forward(model.phi, rvecs);
      const nn::RowMatrix psi_out = nn::forward(model.psi, x_features);
      return phi_out * psi_out.transpose();
    }
    case Design::kAttention:
    case Design::kLinear: {
      const nn::RowMatrix w =
          head_weight_matrix(model, 0, model.design, x_features);
      return scale * (rvecs * w.transpose());
    }
    case Design::kMaxout: {
      nn::RowMatrix best;
      for (int k = 0; k < model.K; ++k) {
        const nn::RowMatrix w =
            head_weight_matrix(model, k, model.maxout_head_design, x_features);
        nn::RowMatrix vals = scale * (rvecs * w.transpose());
        best = k == 0 ? std::move(vals) : best.cwiseMax(vals);
      }
      return best;
    }
  }
  throw std::logic_error("eval_many_rewards: bad design");
}

Eigen::VectorXd apply_linear_fast(const OperatorModel& model, const RewardFn& r,
                                  std::span<const StateAction> xs) {
  if (model.design != Design::kLinear)
    throw std::logic_error("apply_linear_fast: linear design only");
  const Eigen::VectorXd rvec = reward_vector(model, r);
  const nn::RowMatrix f_out = head_f_out(model, 0);
  // v = sum_j r(xi_j) f(xi_j) / (1 - gamma), then one dot per query.
  const Eigen::VectorXd v =
      f_out.transpose() * rvec / (1.0 - model.gamma);
  const nn::RowMatrix xf = model.feat.encode_batch(xs);
  const nn::RowMatrix g_out = head_g_out(model, 0, xf, xs);
  return g_out * v;
}

Eigen::VectorXd apply_linear_naive(const OperatorModel& model,
                                   const RewardFn& r,
                                   std::span<const StateAction> xs) {
  if (model.design != Design::kLinear)
    throw std::logic_error("apply_linear_naive: linear design only");
  const Eigen::VectorXd rvec = reward_vector(model, r);
  const nn::RowMatrix f_out = head_f_out(model, 0);
  const nn::RowMatrix xf = model.feat.encode_batch(xs);
  const nn::RowMatrix g_out = head_g_out(model, 0, xf, xs);
  const int p = static_cast<int>(f_out.cols());
  // All b*m weights evaluated one by one.
  Eigen::VectorXd out(static_cast<int>(xs.size()));
  for (Eigen::Index i = 0; i < g_out.rows(); ++i) {
    double acc = 0.0;
    for (int j = 0; j < model.m(); ++j) {
      double w = 0.0;
      for (int k = 0; k < p; ++k) w += f_out(j, k) * g_out(i, k);
      acc += w * rvec[j];
    }
    out[i] = acc / (1.0 - model.gamma);
  }
  return out;
}

int maxout_active_head(const OperatorModel& model, const RewardFn& r,
                       StateAction x) {
  if (model.design != Design::kMaxout)
    throw std::logic_error("maxout_active_head: maxout design only");
  const Eigen::VectorXd rvec = reward_vector(model, r);
  const StateAction pts[1] = {x};
  const nn::RowMatrix xf = model.feat.encode_batch(pts);
  int best = 0;
  double best_val = 0.0;
  for (int k = 0; k < model.K; ++k) {
    const double v =
        head_values(model, k, model.maxout_head_design, rvec, xf, pts)[0];
    if (k == 0 || v > best_val) {
      best = k;
      best_val = v;
    }
  }
  return best;
}

Eigen::VectorXd implied_visitation(const OperatorModel& model, StateAction x) {
  if (model.design != Design::kAttention)
    throw std::logic_error("implied_visitation: attention design only");
  return attention_weights(model, x);
}

double apply_fixed_weights(const Eigen::VectorXd& weights,
                           const Eigen::VectorXd& rvec, double gamma) {
  return weights.dot(rvec) / (1.0 - gamma);
}

namespace {

constexpr char kMagic[8] = {'O', 'P', 'Q', 'L', 'C', 'K', 'P', '1'};

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: unexpected end of stream");
  return v;
}

void write_matrix(std::ostream& out, const nn::RowMatrix& m) {
  write_raw<std::int64_t>(out, m.rows());
  write_raw<std::int64_t>(out, m.cols());
  out.write(reinterpret_cast<const char*>(m.data()),
            m.size() * sizeof(double));
}

nn::RowMatrix read_matrix(std::istream& in) {
  const auto rows = read_raw<std::int64_t>(in);
  const auto cols = read_raw<std::int64_t>(in);
  nn::RowMatrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()), m.size() * sizeof(double));
  if (!in) throw std::runtime_error("checkpoint: unexpected end of stream");
  return m;
}

}  // namespace

void save_model(const OperatorModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_raw<std::uint8_t>(out, static_cast<std::uint8_t>(model.design));
  write_raw<std::uint8_t>(out,
                          static_cast<std::uint8_t>(model.maxout_head_design));
  write_raw<double>(out, model.gamma);
  write_raw<std::int32_t>(out, model.K);
  write_raw<std::int32_t>(out, model.feat.num_states);
  write_raw<std::int32_t>(out, model.feat.num_actions);
  write_raw<std::int32_t>(out, model.m());
  write_raw<std::int32_t>(out, model.refs.requested);
  write_raw<std::uint8_t>(out, model.refs.clamped ? 1 : 0);
  for (const auto& p : model.refs.points) {
    write_raw<std::int32_t>(out, p.s);
    write_raw<std::int32_t>(out, p.a);
  }
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(model.f.size()));
  for (const auto& net : model.f) nn::write_mlp(out, net);
  for (const auto& net : model.g) nn::write_mlp(out, net);
  const bool vanilla = model.design == Design::kVanilla;
  write_raw<std::uint8_t>(out, vanilla ? 1 : 0);
  if (vanilla) {
    nn::write_mlp(out, model.phi);
    nn::write_mlp(out, model.psi);
  }
  write_raw<std::uint8_t>(out, model.fixed_f ? 1 : 0);
  if (model.fixed_f) write_matrix(out, *model.fixed_f);
  write_raw<std::uint8_t>(out, model.fixed_g_table ? 1 : 0);
  if (model.fixed_g_table) write_matrix(out, *model.fixed_g_table);
}

OperatorModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic))
    throw std::runtime_error("checkpoint: bad magic in " + path);
  OperatorModel model;
  model.design = static_cast<Design>(read_raw<std::uint8_t>(in));
  model.maxout_head_design = static_cast<Design>(read_raw<std::uint8_t>(in));
  model.gamma = read_raw<double>(in);
  model.K = read_raw<std::int32_t>(in);
  model.feat.num_states = read_raw<std::int32_t>(in);
  model.feat.num_actions = read_raw<std::int32_t>(in);
  const int m = read_raw<std::int32_t>(in);
  model.refs.requested = read_raw<std::int32_t>(in);
  model.refs.clamped = read_raw<std::uint8_t>(in) != 0;
  for (int j = 0; j < m; ++j) {
    StateAction p;
    p.s = read_raw<std::int32_t>(in);
    p.a = read_raw<std::int32_t>(in);
    model.refs.points.push_back(p);
  }
  const auto heads = read_raw<std::uint32_t>(in);
  for (std::uint32_t k = 0; k < heads; ++k)
    model.f.push_back(nn::read_mlp(in));
  for (std::uint32_t k = 0; k < heads; ++k)
    model.g.push_back(nn::read_mlp(in));
  if (read_raw<std::uint8_t>(in) != 0) {
    model.phi = nn::read_mlp(in);
    model.psi = nn::read_mlp(in);
  }
  if (read_raw<std::uint8_t>(in) != 0) model.fixed_f = read_matrix(in);
  if (read_raw<std::uint8_t>(in) != 0) model.fixed_g_table = read_matrix(in);
  model.refresh_ref_features();
  return model;
}

}  // namespace opql
