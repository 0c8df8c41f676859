#include "opql/nn.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "opql/kernels.hpp"

namespace opql::nn {

std::string to_string(Activation a) {
  return a == Activation::kRelu ? "relu" : "tanh";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw std::invalid_argument("unknown activation: " + s);
}

Mlp Mlp::random(const std::vector<int>& sizes, Activation act,
                std::mt19937_64& rng, double final_scale) {
  if (sizes.size() < 2) throw std::invalid_argument("Mlp needs >= 2 sizes");
  Mlp net;
  net.sizes = sizes;
  net.activation = act;
  const int layers = static_cast<int>(sizes.size()) - 1;
  for (int l = 0; l < layers; ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    RowMatrix w(out, in);
    for (int o = 0; o < out; ++o)
      for (int i = 0; i < in; ++i) w(o, i) = u(rng);
    Eigen::VectorXd b(out);
    for (int o = 0; o < out; ++o) b[o] = u(rng);
    if (l == layers - 1 && final_scale != 1.0) {
      w *= final_scale;
      b *= final_scale;
    }
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  return net;
}

Mlp Mlp::zeros(const std::vector<int>& sizes, Activation act) {
  Mlp net;
  net.sizes = sizes;
  net.activation = act;
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    net.weights.push_back(RowMatrix::Zero(sizes[l + 1], sizes[l]));
    net.biases.push_back(Eigen::VectorXd::Zero(sizes[l + 1]));
  }
  return net;
}

std::int64_t Mlp::param_count() const {
  std::int64_t n = 0;
  for (int l = 0; l < num_layers(); ++l)
    n += weights[l].size() + biases[l].size();
  return n;
}

Eigen::VectorXd Mlp::to_flat() const {
  Eigen::VectorXd flat(param_count());
  std::int64_t at = 0;
  for (int l = 0; l < num_layers(); ++l) {
    std::copy(weights[l].data(), weights[l].data() + weights[l].size(),
              flat.data() + at);
    at += weights[l].size();
    std::copy(biases[l].data(), biases[l].data() + biases[l].size(),
              flat.data() + at);
    at += biases[l].size();
  }
  return flat;
}

void Mlp::from_flat(const Eigen::VectorXd& flat) {
  if (flat.size() != param_count())
    throw std::invalid_argument("from_flat: length mismatch");
  std::int64_t at = 0;
  for (int l = 0; l < num_layers(); ++l) {
    std::copy(flat.data() + at, flat.data() + at + weights[l].size(),
              weights[l].data());
    at += weights[l].size();
    std::copy(flat.data() + at, flat.data() + at + biases[l].size(),
              biases[l].data());
    at += biases[l].size();
  }
}

Grads Grads::zeros_like(const Mlp& net) {
  Grads g;
  for (int l = 0; l < net.num_layers(); ++l) {
    g.weights.push_back(RowMatrix::Zero(net.weights[l].rows(),
                                        net.weights[l].cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
  }
  return g;
}

void Grads::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

void Grads::scale(double s) {
  for (auto& w : weights) w *= s;
  for (auto& b : biases) b *= s;
}

Eigen::VectorXd Grads::to_flat() const {
  std::int64_t n = 0;
  for (size_t l = 0; l < weights.size(); ++l)
    n += weights[l].size() + biases[l].size();
  Eigen::VectorXd flat(n);
  std::int64_t at = 0;
  for (size_t l = 0; l < weights.size(); ++l) {
    std::copy(weights[l].data(), weights[l].data() + weights[l].size(),
              flat.data() + at);
    at += weights[l].size();
    std::copy(biases[l].data(), biases[l].data() + biases[l].size(),
              flat.data() + at);
    at += biases[l].size();
  }
  return flat;
}

namespace {

void apply_activation(Activation act, RowMatrix& z) {
  if (act == Activation::kRelu)
    kernels::relu(z.data(), z.size());
  else
    kernels::tanh_act(z.data(), z.size());
}

void activation_grad(Activation act, const RowMatrix& post,
                     const RowMatrix& d_post, RowMatrix& d_pre) {
  if (act == Activation::kRelu)
    kernels::relu_grad(post.data(), d_post.data(), d_pre.data(), post.size());
  else
    kernels::tanh_grad(post.data(), d_post.data(), d_pre.data(), post.size());
}

}  // namespace

RowMatrix forward(const Mlp& net, const RowMatrix& x, ForwardCache* cache) {
  if (x.cols() != net.input_dim())
    throw std::invalid_argument("forward: input dim mismatch");
  if (cache) {
    cache->layer_inputs.clear();
    cache->layer_inputs.reserve(net.num_layers());
  }
  RowMatrix a = x;
  for (int l = 0; l < net.num_layers(); ++l) {
    if (cache) cache->layer_inputs.push_back(a);
    RowMatrix z(a.rows(), net.sizes[l + 1]);
    kernels::linear_forward(a.data(), static_cast<int>(a.rows()),
                            net.sizes[l], net.weights[l].data(),
                            net.biases[l].data(), net.sizes[l + 1], z.data());
    if (l + 1 < net.num_layers()) apply_activation(net.activation, z);
    a = std::move(z);
  }
  return a;
}

Eigen::VectorXd forward1(const Mlp& net, const Eigen::VectorXd& x) {
  RowMatrix row(1, x.size());
  row.row(0) = x.transpose();
  RowMatrix y = forward(net, row);
  return y.row(0).transpose();
}

void backward(const Mlp& net, const ForwardCache& cache, const RowMatrix& d_y,
              Grads& grads, RowMatrix* d_x) {
  const int layers = net.num_layers();
  if (static_cast<int>(cache.layer_inputs.size()) != layers)
    throw std::invalid_argument("backward: cache does not match net");
  const int rows = static_cast<int>(d_y.rows());

  RowMatrix d = d_y;
  for (int l = layers - 1; l >= 0; --l) {
    if (!d.allFinite()) throw NonFiniteGradient(l);
    const RowMatrix& a = cache.layer_inputs[l];
    kernels::grad_weights(d.data(), a.data(), rows, net.sizes[l],
                          net.sizes[l + 1], grads.weights[l].data());
    kernels::grad_bias(d.data(), rows, net.sizes[l + 1],
                       grads.biases[l].data());
    if (l > 0) {
      RowMatrix d_post(rows, net.sizes[l]);
      kernels::grad_input(d.data(), net.weights[l].data(), rows, net.sizes[l],
                          net.sizes[l + 1], d_post.data());
      RowMatrix d_pre(rows, net.sizes[l]);
      activation_grad(net.activation, a, d_post, d_pre);
      d = std::move(d_pre);
    } else if (d_x) {
      d_x->resize(rows, net.sizes[0]);
      kernels::grad_input(d.data(), net.weights[0].data(), rows, net.sizes[0],
                          net.sizes[1], d_x->data());
    }
  }
}

Grads loss_gradient(const Mlp& net, const RowMatrix& x,
                    const std::function<double(const RowMatrix& y,
                                               RowMatrix& d_y)>& loss,
                    double* loss_value) {
  ForwardCache cache;
  const RowMatrix y = forward(net, x, &cache);
  RowMatrix d_y = RowMatrix::Zero(y.rows(), y.cols());
  const double value = loss(y, d_y);
  if (loss_value) *loss_value = value;
  Grads grads = Grads::zeros_like(net);
  backward(net, cache, d_y, grads);
  return grads;
}

AdamState AdamState::init(const Mlp& net, const AdamConfig& config) {
  AdamState s;
  s.config = config;
  s.first_moment = Grads::zeros_like(net);
  s.second_moment = Grads::zeros_like(net);
  return s;
}

namespace {

void adam_update(double lr_t, double beta1, double beta2, double eps,
                 double* m, double* v, const double* g, double* p,
                 std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    p[i] -= lr_t * m[i] / (std::sqrt(v[i]) + eps);
  }
}

}  // namespace

void adam_step(AdamState& state, Mlp& net, const Grads& grads) {
  state.step += 1;
  const auto& c = state.config;
  // Bias correction folded into the step size.
  const double lr_t = c.learning_rate *
                      std::sqrt(1.0 - std::pow(c.beta2, state.step)) /
                      (1.0 - std::pow(c.beta1, state.step));
  for (int l = 0; l < net.num_layers(); ++l) {
    adam_update(lr_t, c.beta1, c.beta2, c.epsilon,
                state.first_moment.weights[l].data(),
                state.second_moment.weights[l].data(),
                grads.weights[l].data(), net.weights[l].data(),
                net.weights[l].size());
    adam_update(lr_t, c.beta1, c.beta2, c.epsilon,
                state.first_moment.biases[l].data(),
                state.second_moment.biases[l].data(), grads.biases[l].data(),
                net.biases[l].data(), net.biases[l].size());
  }
}

namespace {

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

}  // namespace

void write_mlp(std::ostream& out, const Mlp& net) {
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(net.sizes.size()));
  for (int s : net.sizes) write_raw<std::int32_t>(out, s);
  write_raw<std::uint8_t>(out, net.activation == Activation::kRelu ? 0 : 1);
  for (int l = 0; l < net.num_layers(); ++l) {
    out.write(reinterpret_cast<const char*>(net.weights[l].data()),
              net.weights[l].size() * sizeof(double));
    out.write(reinterpret_cast<const char*>(net.biases[l].data()),
              net.biases[l].size() * sizeof(double));
  }
}

Mlp read_mlp(std::istream& in) {
  const auto n_sizes = read_raw<std::uint32_t>(in);
  if (n_sizes < 2 || n_sizes > 64)
    throw std::runtime_error("checkpoint: bad layer count");
  std::vector<int> sizes(n_sizes);
  for (auto& s : sizes) s = read_raw<std::int32_t>(in);
  const auto act = read_raw<std::uint8_t>(in);
  Mlp net = Mlp::zeros(sizes, act == 0 ? Activation::kRelu : Activation::kTanh);
  for (int l = 0; l < net.num_layers(); ++l) {
    in.read(reinterpret_cast<char*>(net.weights[l].data()),
            net.weights[l].size() * sizeof(double));
    in.read(reinterpret_cast<char*>(net.biases[l].data()),
            net.biases[l].size() * sizeof(double));
    if (!in) throw std::runtime_error("checkpoint: unexpected end of stream");
  }
  return net;
}

}  // namespace opql::nn
