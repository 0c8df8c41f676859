#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <vector>

#include "opql/kernels.hpp"

using namespace opql;

namespace {

std::vector<double> random_vec(std::int64_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("linear_forward matches a hand computation") {
  // 1 row, 2 inputs, 1 output: z = 2*3 + (-1)*1 + 0.5
  const double x[2] = {3.0, 1.0};
  const double w[2] = {2.0, -1.0};
  const double b[1] = {0.5};
  double z[1];
  kernels::serial::linear_forward(x, 1, 2, w, b, 1, z);
  CHECK(z[0] == doctest::Approx(5.5));
}

TEST_CASE("softmax of zeros is uniform and rows sum to one") {
  std::vector<double> l(3 * 4, 0.0);
  kernels::serial::softmax_rows(l.data(), 3, 4);
  for (double v : l) CHECK(v == doctest::Approx(0.25));

  std::mt19937_64 rng(3);
  auto rows = random_vec(16 * 9, rng);
  kernels::softmax_rows(rows.data(), 16, 9);
  for (int r = 0; r < 16; ++r) {
    double sum = 0.0;
    for (int j = 0; j < 9; ++j) {
      CHECK(rows[r * 9 + j] > 0.0);
      sum += rows[r * 9 + j];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("openmp kernels are bit-identical to the serial reference") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> dim(1, 40);
    const int rows = dim(rng), in = dim(rng), out = dim(rng), p = dim(rng);

    const auto x = random_vec(static_cast<std::int64_t>(rows) * in, rng);
    const auto w = random_vec(static_cast<std::int64_t>(out) * in, rng);
    const auto bias = random_vec(out, rng);

    std::vector<double> z_s(static_cast<size_t>(rows) * out), z_p(z_s.size());
    kernels::serial::linear_forward(x.data(), rows, in, w.data(), bias.data(),
                                    out, z_s.data());
    kernels::linear_forward(x.data(), rows, in, w.data(), bias.data(), out,
                            z_p.data());
    CHECK(z_s == z_p);

    auto act_s = z_s, act_p = z_s;
    kernels::serial::tanh_act(act_s.data(),
                              static_cast<std::int64_t>(act_s.size()));
    kernels::tanh_act(act_p.data(), static_cast<std::int64_t>(act_p.size()));
    CHECK(act_s == act_p);

    auto relu_s = z_s, relu_p = z_s;
    kernels::serial::relu(relu_s.data(),
                          static_cast<std::int64_t>(relu_s.size()));
    kernels::relu(relu_p.data(), static_cast<std::int64_t>(relu_p.size()));
    CHECK(relu_s == relu_p);

    const auto d_z = random_vec(static_cast<std::int64_t>(rows) * out, rng);
    std::vector<double> dw_s(static_cast<size_t>(out) * in, 0.0),
        dw_p(dw_s.size(), 0.0);
    kernels::serial::grad_weights(d_z.data(), x.data(), rows, in, out,
                                  dw_s.data());
    kernels::grad_weights(d_z.data(), x.data(), rows, in, out, dw_p.data());
    CHECK(dw_s == dw_p);

    std::vector<double> db_s(out, 0.0), db_p(out, 0.0);
    kernels::serial::grad_bias(d_z.data(), rows, out, db_s.data());
    kernels::grad_bias(d_z.data(), rows, out, db_p.data());
    CHECK(db_s == db_p);

    std::vector<double> dx_s(static_cast<size_t>(rows) * in), dx_p(dx_s.size());
    kernels::serial::grad_input(d_z.data(), w.data(), rows, in, out,
                                dx_s.data());
    kernels::grad_input(d_z.data(), w.data(), rows, in, out, dx_p.data());
    CHECK(dx_s == dx_p);

    const auto g = random_vec(static_cast<std::int64_t>(rows) * p, rng);
    const auto f = random_vec(static_cast<std::int64_t>(out) * p, rng);
    std::vector<double> l_s(static_cast<size_t>(rows) * out), l_p(l_s.size());
    kernels::serial::pair_dot(g.data(), rows, f.data(), out, p, l_s.data());
    kernels::pair_dot(g.data(), rows, f.data(), out, p, l_p.data());
    CHECK(l_s == l_p);

    auto sm_s = l_s, sm_p = l_s;
    kernels::serial::softmax_rows(sm_s.data(), rows, out);
    kernels::softmax_rows(sm_p.data(), rows, out);
    CHECK(sm_s == sm_p);

    const auto r = random_vec(out, rng);
    std::vector<double> y_s(rows), y_p(rows);
    kernels::serial::weighted_sum(sm_s.data(), rows, out, r.data(),
                                  y_s.data());
    kernels::weighted_sum(sm_s.data(), rows, out, r.data(), y_p.data());
    CHECK(y_s == y_p);

    const auto c = random_vec(rows, rng);
    std::vector<double> dl_s(static_cast<size_t>(rows) * out),
        dl_p(dl_s.size());
    kernels::serial::softmax_weighted_sum_grad(sm_s.data(), r.data(),
                                               y_s.data(), c.data(), rows,
                                               out, dl_s.data());
    kernels::softmax_weighted_sum_grad(sm_s.data(), r.data(), y_s.data(),
                                       c.data(), rows, out, dl_p.data());
    CHECK(dl_s == dl_p);
  }
}

TEST_CASE("softmax_weighted_sum_grad matches finite differences") {
  // d/dl_j of sum_k softmax(l)_k r_k = w_j (r_j - y).
  std::mt19937_64 rng(5);
  const int m = 6;
  auto logits = random_vec(m, rng);
  const auto r = random_vec(m, rng);
  const double h = 1e-6;

  auto value = [&](const std::vector<double>& l) {
    auto w = l;
    kernels::serial::softmax_rows(w.data(), 1, m);
    double y = 0.0;
    for (int j = 0; j < m; ++j) y += w[j] * r[j];
    return y;
  };

  auto w = logits;
  kernels::serial::softmax_rows(w.data(), 1, m);
  double y = 0.0;
  for (int j = 0; j < m; ++j) y += w[j] * r[j];
  const double c = 1.0;
  std::vector<double> grad(m);
  kernels::serial::softmax_weighted_sum_grad(w.data(), r.data(), &y, &c, 1, m,
                                             grad.data());

  for (int j = 0; j < m; ++j) {
    auto hi = logits, lo = logits;
    hi[j] += h;
    lo[j] -= h;
    const double fd = (value(hi) - value(lo)) / (2.0 * h);
    CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-5));
  }
}
