#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace opql::nn {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { kRelu, kTanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct NonFiniteGradient : std::runtime_error {
  int layer;
  explicit NonFiniteGradient(int layer_index)
      : std::runtime_error("non-finite gradient at layer " +
                           std::to_string(layer_index)),
        layer(layer_index) {}
};

/// Dense feed-forward net; hidden layers share one activation, the output
/// layer is linear.
struct Mlp {
  std::vector<int> sizes;  // [in, hidden..., out]
  Activation activation = Activation::kRelu;
  std::vector<RowMatrix> weights;        // sizes[l+1] x sizes[l]
  std::vector<Eigen::VectorXd> biases;

  // Uniform fan-in scaled init; final_scale shrinks the output layer.
  static Mlp random(const std::vector<int>& sizes, Activation act,
                    std::mt19937_64& rng, double final_scale = 1.0);
  static Mlp zeros(const std::vector<int>& sizes, Activation act);

  int input_dim() const { return sizes.front(); }
  int output_dim() const { return sizes.back(); }
  int num_layers() const { return static_cast<int>(weights.size()); }
  std::int64_t param_count() const;

  Eigen::VectorXd to_flat() const;
  void from_flat(const Eigen::VectorXd& flat);
};

struct Grads {
  std::vector<RowMatrix> weights;
  std::vector<Eigen::VectorXd> biases;

  static Grads zeros_like(const Mlp& net);
  void set_zero();
  void scale(double s);
  Eigen::VectorXd to_flat() const;
};

// Layer inputs captured during a forward pass, reused by backward().
struct ForwardCache {
  std::vector<RowMatrix> layer_inputs;  // [A0=X, A1, ..., A_{L-1}]
};

RowMatrix forward(const Mlp& net, const RowMatrix& x,
                  ForwardCache* cache = nullptr);
Eigen::VectorXd forward1(const Mlp& net, const Eigen::VectorXd& x);

// Accumulates parameter gradients for d(loss)/d(output) = d_y; optionally
// returns d(loss)/d(input). Throws NonFiniteGradient naming the layer.
void backward(const Mlp& net, const ForwardCache& cache, const RowMatrix& d_y,
              Grads& grads, RowMatrix* d_x = nullptr);

// Mean-batch loss plumbing: `loss` sees the outputs and must fill d_y with
// the gradient of the mean loss; returns that gradient over the parameters.
Grads loss_gradient(const Mlp& net, const RowMatrix& x,
                    const std::function<double(const RowMatrix& y,
                                               RowMatrix& d_y)>& loss,
                    double* loss_value = nullptr);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  long step = 0;
  AdamConfig config;
  Grads first_moment;
  Grads second_moment;

  static AdamState init(const Mlp& net, const AdamConfig& config = {});
};

void adam_step(AdamState& state, Mlp& net, const Grads& grads);

// Binary checkpoint blocks; round-trips bitwise.
void write_mlp(std::ostream& out, const Mlp& net);
Mlp read_mlp(std::istream& in);

}  // namespace opql::nn
