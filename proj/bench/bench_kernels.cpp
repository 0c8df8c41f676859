// Times the OpenMP kernels against their serial references, and the O(b+m)
// linear-design fast path against the naive O(b*m) loop.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "opql/envs.hpp"
#include "opql/kernels.hpp"
#include "opql/nn.hpp"
#include "opql/operator_net.hpp"

using namespace opql;

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

template <typename F>
double time_best_of(int reps, F&& fn) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const double t0 = now_s();
    fn();
    best = std::min(best, now_s() - t0);
  }
  return best;
}

void fill(std::mt19937_64& rng, double* p, std::int64_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::int64_t i = 0; i < n; ++i) p[i] = u(rng);
}

void bench_kernels(int rows, int in, int out) {
  std::mt19937_64 rng(7);
  std::vector<double> x(static_cast<size_t>(rows) * in),
      w(static_cast<size_t>(out) * in), b(out),
      z(static_cast<size_t>(rows) * out);
  fill(rng, x.data(), static_cast<std::int64_t>(x.size()));
  fill(rng, w.data(), static_cast<std::int64_t>(w.size()));
  fill(rng, b.data(), static_cast<std::int64_t>(b.size()));

  const double ts = time_best_of(5, [&] {
    kernels::serial::linear_forward(x.data(), rows, in, w.data(), b.data(),
                                    out, z.data());
  });
  const double tp = time_best_of(5, [&] {
    kernels::linear_forward(x.data(), rows, in, w.data(), b.data(), out,
                            z.data());
  });
  std::printf("linear_forward %5dx%4d->%4d  serial %8.3f ms  omp %8.3f ms  "
              "speedup %.2fx\n",
              rows, in, out, ts * 1e3, tp * 1e3, ts / tp);

  std::vector<double> l(static_cast<size_t>(rows) * out);
  fill(rng, l.data(), static_cast<std::int64_t>(l.size()));
  const double ss = time_best_of(5, [&] {
    std::copy(l.begin(), l.end(), z.begin());
    kernels::serial::softmax_rows(z.data(), rows, out);
  });
  const double sp = time_best_of(5, [&] {
    std::copy(l.begin(), l.end(), z.begin());
    kernels::softmax_rows(z.data(), rows, out);
  });
  std::printf("softmax_rows   %5dx%4d        serial %8.3f ms  omp %8.3f ms  "
              "speedup %.2fx\n",
              rows, out, ss * 1e3, sp * 1e3, ss / sp);
}

void bench_linear_fast_path(int b, int m) {
  // A synthetic MDP with m distinct pairs; square state/action split keeps
  // the one-hot embedding small.
  const int ns = static_cast<int>(std::ceil(std::sqrt(double(m))));
  const int na = (m + ns - 1) / ns;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(ns * na, ns);
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a) p(s * na + a, (s + a) % ns) = 1.0;
  Eigen::VectorXd init = Eigen::VectorXd::Constant(ns, 1.0 / ns);
  const TabularMdp mdp(ns, na, p, init, 0.9);

  TransitionDataset ds;
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a) ds.records.push_back({s, a, (s + a) % ns});

  std::mt19937_64 rng(11);
  ReferenceSet refs = select_reference_points(ds, m, rng);
  OperatorModelConfig mc;
  mc.design = Design::kLinear;
  mc.hidden = {16, 16};  // keeps the shared forwards from drowning the loop
  mc.feature_dim = 16;
  OperatorModel model = make_operator_model(mdp, std::move(refs), mc, rng);

  std::vector<StateAction> xs;
  std::uniform_int_distribution<int> pick(0, ns - 1);
  for (int i = 0; i < b; ++i) xs.push_back({pick(rng), 0});

  Eigen::VectorXd table(ns * na);
  fill(rng, table.data(), table.size());
  const RewardFn reward = RewardFn::tabular(table, na);

  const double t_fast =
      time_best_of(3, [&] { apply_linear_fast(model, reward, xs); });
  const double t_naive =
      time_best_of(3, [&] { apply_linear_naive(model, reward, xs); });
  const Eigen::VectorXd fast = apply_linear_fast(model, reward, xs);
  const Eigen::VectorXd naive = apply_linear_naive(model, reward, xs);
  std::printf(
      "linear operator b=m=%d: naive %.3f ms, fast %.3f ms, speedup %.1fx, "
      "max|diff| %.3g\n",
      m, t_naive * 1e3, t_fast * 1e3, t_naive / t_fast,
      (fast - naive).cwiseAbs().maxCoeff());
}

}  // namespace

int main(int argc, char** argv) {
  const bool quick = argc > 1 && std::string(argv[1]) == "--quick";
  std::printf("openmp=%s threads=%d\n",
              kernels::openmp_enabled() ? "yes" : "no",
              kernels::max_threads());
  bench_kernels(quick ? 256 : 4096, 64, 64);
  if (!quick) bench_kernels(4096, 128, 64);
  bench_linear_fast_path(quick ? 512 : 4096, quick ? 512 : 4096);
  return 0;
}
