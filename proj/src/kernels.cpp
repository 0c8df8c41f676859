#include "opql/kernels.hpp"

#include <algorithm>
#include <cmath>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace opql::kernels {

namespace serial {

void linear_forward(const double* x, int rows, int in, const double* w,
                    const double* bias, int out, double* z) {
  for (int r = 0; r < rows; ++r) {
    const double* xr = x + static_cast<std::int64_t>(r) * in;
    double* zr = z + static_cast<std::int64_t>(r) * out;
    for (int o = 0; o < out; ++o) {
      const double* wo = w + static_cast<std::int64_t>(o) * in;
      double acc = bias[o];
      for (int i = 0; i < in; ++i) acc += wo[i] * xr[i];
      zr[o] = acc;
    }
  }
}

void relu(double* z, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) z[i] = z[i] > 0.0 ? z[i] : 0.0;
}

void tanh_act(double* z, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) z[i] = std::tanh(z[i]);
}

void relu_grad(const double* post, const double* d_post, double* d_pre,
               std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i)
    d_pre[i] = post[i] > 0.0 ? d_post[i] : 0.0;
}

void tanh_grad(const double* post, const double* d_post, double* d_pre,
               std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i)
    d_pre[i] = d_post[i] * (1.0 - post[i] * post[i]);
}

void grad_weights(const double* d_z, const double* x, int rows, int in,
                  int out, double* d_w) {
  for (int o = 0; o < out; ++o) {
    double* row = d_w + static_cast<std::int64_t>(o) * in;
    for (int r = 0; r < rows; ++r) {
      const double s = d_z[static_cast<std::int64_t>(r) * out + o];
      if (s == 0.0) continue;
      const double* xr = x + static_cast<std::int64_t>(r) * in;
      for (int i = 0; i < in; ++i) row[i] += s * xr[i];
    }
  }
}

void grad_bias(const double* d_z, int rows, int out, double* d_b) {
  for (int o = 0; o < out; ++o) {
    double acc = 0.0;
    for (int r = 0; r < rows; ++r)
      acc += d_z[static_cast<std::int64_t>(r) * out + o];
    d_b[o] += acc;
  }
}

void grad_input(const double* d_z, const double* w, int rows, int in, int out,
                double* d_x) {
  for (int r = 0; r < rows; ++r) {
    const double* dzr = d_z + static_cast<std::int64_t>(r) * out;
    double* dxr = d_x + static_cast<std::int64_t>(r) * in;
    std::fill(dxr, dxr + in, 0.0);
    for (int o = 0; o < out; ++o) {
      const double s = dzr[o];
      if (s == 0.0) continue;
      const double* wo = w + static_cast<std::int64_t>(o) * in;
      for (int i = 0; i < in; ++i) dxr[i] += s * wo[i];
    }
  }
}

void pair_dot(const double* g, int rows, const double* f, int m, int p,
              double* l) {
  for (int r = 0; r < rows; ++r) {
    const double* gr = g + static_cast<std::int64_t>(r) * p;
    double* lr = l + static_cast<std::int64_t>(r) * m;
    for (int j = 0; j < m; ++j) {
      const double* fj = f + static_cast<std::int64_t>(j) * p;
      double acc = 0.0;
      for (int k = 0; k < p; ++k) acc += gr[k] * fj[k];
      lr[j] = acc;
    }
  }
}

void softmax_rows(double* l, int rows, int m) {
  for (int r = 0; r < rows; ++r) {
    double* lr = l + static_cast<std::int64_t>(r) * m;
    double mx = lr[0];
    for (int j = 1; j < m; ++j) mx = std::max(mx, lr[j]);
    double sum = 0.0;
    for (int j = 0; j < m; ++j) {
      lr[j] = std::exp(lr[j] - mx);
      sum += lr[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < m; ++j) lr[j] *= inv;
  }
}

void weighted_sum(const double* w, int rows, int m, const double* r,
                  double* y) {
  for (int i = 0; i < rows; ++i) {
    const double* wi = w + static_cast<std::int64_t>(i) * m;
    double acc = 0.0;
    for (int j = 0; j < m; ++j) acc += wi[j] * r[j];
    y[i] = acc;
  }
}

void softmax_weighted_sum_grad(const double* w, const double* r,
                               const double* y, const double* c, int rows,
                               int m, double* d_l) {
  for (int i = 0; i < rows; ++i) {
    const double* wi = w + static_cast<std::int64_t>(i) * m;
    double* di = d_l + static_cast<std::int64_t>(i) * m;
    const double ci = c[i];
    const double yi = y[i];
    for (int j = 0; j < m; ++j) di[j] = ci * wi[j] * (r[j] - yi);
  }
}

void softmax_weighted_sum_grad_add(const double* w, const double* r,
                                   const double* y, const double* c, int rows,
                                   int m, double* d_l) {
  for (int i = 0; i < rows; ++i) {
    const double* wi = w + static_cast<std::int64_t>(i) * m;
    double* di = d_l + static_cast<std::int64_t>(i) * m;
    const double ci = c[i];
    const double yi = y[i];
    for (int j = 0; j < m; ++j) di[j] += ci * wi[j] * (r[j] - yi);
  }
}

}  // namespace serial

void linear_forward(const double* x, int rows, int in, const double* w,
                    const double* bias, int out, double* z) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const double* xr = x + static_cast<std::int64_t>(r) * in;
    double* zr = z + static_cast<std::int64_t>(r) * out;
    for (int o = 0; o < out; ++o) {
      const double* wo = w + static_cast<std::int64_t>(o) * in;
      double acc = bias[o];
      for (int i = 0; i < in; ++i) acc += wo[i] * xr[i];
      zr[o] = acc;
    }
  }
}

void relu(double* z, std::int64_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) z[i] = z[i] > 0.0 ? z[i] : 0.0;
}

void tanh_act(double* z, std::int64_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) z[i] = std::tanh(z[i]);
}

void relu_grad(const double* post, const double* d_post, double* d_pre,
               std::int64_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    d_pre[i] = post[i] > 0.0 ? d_post[i] : 0.0;
}

void tanh_grad(const double* post, const double* d_post, double* d_pre,
               std::int64_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    d_pre[i] = d_post[i] * (1.0 - post[i] * post[i]);
}

void grad_weights(const double* d_z, const double* x, int rows, int in,
                  int out, double* d_w) {
// Each thread owns whole rows of d_w; the sum over `rows` stays in index
// order inside one thread, so accumulation is bit-stable.
#pragma omp parallel for schedule(static)
  for (int o = 0; o < out; ++o) {
    double* row = d_w + static_cast<std::int64_t>(o) * in;
    for (int r = 0; r < rows; ++r) {
      const double s = d_z[static_cast<std::int64_t>(r) * out + o];
      if (s == 0.0) continue;
      const double* xr = x + static_cast<std::int64_t>(r) * in;
      for (int i = 0; i < in; ++i) row[i] += s * xr[i];
    }
  }
}

void grad_bias(const double* d_z, int rows, int out, double* d_b) {
#pragma omp parallel for schedule(static)
  for (int o = 0; o < out; ++o) {
    double acc = 0.0;
    for (int r = 0; r < rows; ++r)
      acc += d_z[static_cast<std::int64_t>(r) * out + o];
    d_b[o] += acc;
  }
}

void grad_input(const double* d_z, const double* w, int rows, int in, int out,
                double* d_x) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const double* dzr = d_z + static_cast<std::int64_t>(r) * out;
    double* dxr = d_x + static_cast<std::int64_t>(r) * in;
    std::fill(dxr, dxr + in, 0.0);
    for (int o = 0; o < out; ++o) {
      const double s = dzr[o];
      if (s == 0.0) continue;
      const double* wo = w + static_cast<std::int64_t>(o) * in;
      for (int i = 0; i < in; ++i) dxr[i] += s * wo[i];
    }
  }
}

void pair_dot(const double* g, int rows, const double* f, int m, int p,
              double* l) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const double* gr = g + static_cast<std::int64_t>(r) * p;
    double* lr = l + static_cast<std::int64_t>(r) * m;
    for (int j = 0; j < m; ++j) {
      const double* fj = f + static_cast<std::int64_t>(j) * p;
      double acc = 0.0;
      for (int k = 0; k < p; ++k) acc += gr[k] * fj[k];
      lr[j] = acc;
    }
  }
}

void softmax_rows(double* l, int rows, int m) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    double* lr = l + static_cast<std::int64_t>(r) * m;
    double mx = lr[0];
    for (int j = 1; j < m; ++j) mx = std::max(mx, lr[j]);
    double sum = 0.0;
    for (int j = 0; j < m; ++j) {
      lr[j] = std::exp(lr[j] - mx);
      sum += lr[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < m; ++j) lr[j] *= inv;
  }
}

void weighted_sum(const double* w, int rows, int m, const double* r,
                  double* y) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) {
    const double* wi = w + static_cast<std::int64_t>(i) * m;
    double acc = 0.0;
    for (int j = 0; j < m; ++j) acc += wi[j] * r[j];
    y[i] = acc;
  }
}

void softmax_weighted_sum_grad(const double* w, const double* r,
                               const double* y, const double* c, int rows,
                               int m, double* d_l) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) {
    const double* wi = w + static_cast<std::int64_t>(i) * m;
    double* di = d_l + static_cast<std::int64_t>(i) * m;
    const double ci = c[i];
    const double yi = y[i];
    for (int j = 0; j < m; ++j) di[j] = ci * wi[j] * (r[j] - yi);
  }
}

void softmax_weighted_sum_grad_add(const double* w, const double* r,
                                   const double* y, const double* c, int rows,
                                   int m, double* d_l) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) {
    const double* wi = w + static_cast<std::int64_t>(i) * m;
    double* di = d_l + static_cast<std::int64_t>(i) * m;
    const double ci = c[i];
    const double yi = y[i];
    for (int j = 0; j < m; ++j) di[j] += ci * wi[j] * (r[j] - yi);
  }
}

bool openmp_enabled() {
#if defined(_OPENMP)
  return true;
#else
  return false;
#endif
}

int max_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace opql::kernels
