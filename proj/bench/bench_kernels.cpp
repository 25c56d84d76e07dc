// OpenMP kernels against their serial references: time and max abs difference.
//
//   bench_kernels [--reps N] [--threads T]

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include "CLI11.hpp"
#include "styleinv/kernels.hpp"

using namespace styleinv::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.f, 1.f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

double seconds(int reps, const std::function<void()>& f) {
  f();
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
}

double max_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, static_cast<double>(std::abs(a[i] - b[i])));
  return m;
}

void row(const char* kernel, const char* shape, double macs, double ts, double tp, double diff) {
  std::printf("%-10s %-22s %10.3f %10.3f %8.2fx %8.2f %11.2e\n", kernel, shape, ts * 1e3, tp * 1e3, ts / tp,
              macs / tp / 1e9, diff);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel benchmark: OpenMP vs serial reference"};
  int reps = 10;
  int threads = 0;
  app.add_option("--reps", reps)->capture_default_str();
  app.add_option("--threads", threads, "OpenMP threads (default: runtime / STYLEINV_THREADS)");
  CLI11_PARSE(app, argc, argv);
  configure_threads_from_env();
  if (threads > 0) omp_set_num_threads(threads);

  std::printf("threads %d\n", omp_get_max_threads());
  std::printf("%-10s %-22s %10s %10s %9s %8s %11s\n", "kernel", "shape", "serial ms", "omp ms", "speedup",
              "GMAC/s", "max |diff|");

  for (int n : {64, 256, 512}) {
    const auto a = random_vec(static_cast<std::size_t>(n) * n, 1), b = random_vec(static_cast<std::size_t>(n) * n, 2);
    std::vector<float> cs(a.size()), cp(a.size());
    const double ts = seconds(reps, [&] { serial::gemm_nn(n, n, n, a.data(), b.data(), cs.data(), false); });
    const double tp = seconds(reps, [&] { gemm_nn(n, n, n, a.data(), b.data(), cp.data(), false); });
    char shape[32];
    std::snprintf(shape, sizeof shape, "%dx%dx%d", n, n, n);
    row("gemm_nn", shape, double(n) * n * n, ts, tp, max_diff(cs, cp));
  }

  struct Case {
    int n, c, s;
  };
  for (const Case k : {Case{8, 8, 32}, Case{8, 16, 64}, Case{8, 64, 16}, Case{4, 128, 8}}) {
    ConvGeom g;
    g.n = k.n;
    g.cin = g.cout = k.c;
    g.h = g.w = k.s;
    g.kh = g.kw = 3;
    g.ph = g.pw = 1;
    const std::size_t act = static_cast<std::size_t>(k.n) * k.c * k.s * k.s;
    const auto x = random_vec(act, 3), w = random_vec(static_cast<std::size_t>(k.c) * k.c * 9, 4),
               b = random_vec(static_cast<std::size_t>(k.c), 5), gy = random_vec(act, 6);
    std::vector<float> ys(act), yp(act);
    const double macs = double(k.n) * k.c * k.c * 9 * k.s * k.s;
    char shape[32];
    std::snprintf(shape, sizeof shape, "n%d c%d %dx%d 3x3", k.n, k.c, k.s, k.s);
    double ts = seconds(reps, [&] { serial::conv2d_forward(g, x.data(), w.data(), b.data(), ys.data()); });
    double tp = seconds(reps, [&] { conv2d_forward(g, x.data(), w.data(), b.data(), yp.data()); });
    row("conv_fwd", shape, macs, ts, tp, max_diff(ys, yp));

    std::vector<float> gxs(act), gws(w.size()), gbs(b.size()), gxp(act), gwp(w.size()), gbp(b.size());
    auto zero = [](std::vector<float>& v) { std::fill(v.begin(), v.end(), 0.f); };
    ts = seconds(reps, [&] {
      zero(gxs), zero(gws), zero(gbs);
      serial::conv2d_backward(g, x.data(), w.data(), gy.data(), gxs.data(), gws.data(), gbs.data());
    });
    tp = seconds(reps, [&] {
      zero(gxp), zero(gwp), zero(gbp);
      conv2d_backward(g, x.data(), w.data(), gy.data(), gxp.data(), gwp.data(), gbp.data());
    });
    row("conv_bwd", shape, 2 * macs, ts, tp, std::max({max_diff(gxs, gxp), max_diff(gws, gwp), max_diff(gbs, gbp)}));
  }
  return 0;
}
