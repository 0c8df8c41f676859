#pragma once

#include <cstdint>

namespace opql::kernels {

// Dense row-major kernels behind the network code. The OpenMP variants
// parallelize over independent output rows only; no floating-point reduction
// ever crosses a thread boundary, so every kernel is bit-identical to its
// serial reference for any thread count. tests/test_kernels.cpp asserts the
// equality; bench/bench_kernels.cpp times the two paths against each other.

namespace serial {

// z[r] = w * x[r] + bias for each row r. x: rows*in, w: out*in, z: rows*out.
void linear_forward(const double* x, int rows, int in, const double* w,
                    const double* bias, int out, double* z);

void relu(double* z, std::int64_t n);
void tanh_act(double* z, std::int64_t n);

// d_pre = d_post ⊙ act'(post); `post` is the activated value.
void relu_grad(const double* post, const double* d_post, double* d_pre,
               std::int64_t n);
void tanh_grad(const double* post, const double* d_post, double* d_pre,
               std::int64_t n);

// d_w += d_z^T x. d_z: rows*out, x: rows*in, d_w: out*in.
void grad_weights(const double* d_z, const double* x, int rows, int in,
                  int out, double* d_w);
// d_b += column sums of d_z.
void grad_bias(const double* d_z, int rows, int out, double* d_b);
// d_x = d_z w. d_z: rows*out, w: out*in, d_x: rows*in.
void grad_input(const double* d_z, const double* w, int rows, int in, int out,
                double* d_x);

// l[i][j] = <g[i], f[j]>. g: rows*p, f: m*p, l: rows*m.
void pair_dot(const double* g, int rows, const double* f, int m, int p,
              double* l);
// In-place row-wise softmax with max-logit subtraction.
void softmax_rows(double* l, int rows, int m);
// y[i] = sum_j w[i][j] r[j].
void weighted_sum(const double* w, int rows, int m, const double* r,
                  double* y);
// Backward of y = softmax(l) · r through the softmax:
// d_l[i][j] = c[i] * w[i][j] * (r[j] - y[i]), with w the softmax output.
void softmax_weighted_sum_grad(const double* w, const double* r,
                               const double* y, const double* c, int rows,
                               int m, double* d_l);
// Accumulating variant (d_l +=) for losses averaged over several rewards.
void softmax_weighted_sum_grad_add(const double* w, const double* r,
                                   const double* y, const double* c, int rows,
                                   int m, double* d_l);

}  // namespace serial

void linear_forward(const double* x, int rows, int in, const double* w,
                    const double* bias, int out, double* z);
void relu(double* z, std::int64_t n);
void tanh_act(double* z, std::int64_t n);
void relu_grad(const double* post, const double* d_post, double* d_pre,
               std::int64_t n);
void tanh_grad(const double* post, const double* d_post, double* d_pre,
               std::int64_t n);
void grad_weights(const double* d_z, const double* x, int rows, int in,
                  int out, double* d_w);
void grad_bias(const double* d_z, int rows, int out, double* d_b);
void grad_input(const double* d_z, const double* w, int rows, int in, int out,
                double* d_x);
void pair_dot(const double* g, int rows, const double* f, int m, int p,
              double* l);
void softmax_rows(double* l, int rows, int m);
void weighted_sum(const double* w, int rows, int m, const double* r,
                  double* y);
void softmax_weighted_sum_grad(const double* w, const double* r,
                               const double* y, const double* c, int rows,
                               int m, double* d_l);
void softmax_weighted_sum_grad_add(const double* w, const double* r,
                                   const double* y, const double* c, int rows,
                                   int m, double* d_l);

bool openmp_enabled();
int max_threads();

}  // namespace opql::kernels
