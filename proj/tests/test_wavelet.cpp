#include <cmath>

#include "doctest.h"
#include "styleinv/ops.hpp"
#include "styleinv/wavelet.hpp"
#include "test_util.hpp"

using namespace styleinv;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

// Per-block oracle written out from the kernel definitions.
void block_oracle(const TensorD& x, TensorD& ll, TensorD& lh, TensorD& hl, TensorD& hh) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  ll = lh = hl = hh = TensorD({n, c, h / 2, w / 2});
  for (int s = 0; s < n; ++s)
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < h / 2; ++i)
        for (int j = 0; j < w / 2; ++j) {
          const double a = x.at(s, ch, 2 * i, 2 * j), b = x.at(s, ch, 2 * i, 2 * j + 1);
          const double cc = x.at(s, ch, 2 * i + 1, 2 * j), d = x.at(s, ch, 2 * i + 1, 2 * j + 1);
          ll.at(s, ch, i, j) = 0.5 * (a + b + cc + d);
          lh.at(s, ch, i, j) = 0.5 * (-a - b + cc + d);
          hl.at(s, ch, i, j) = 0.5 * (-a + b - cc + d);
          hh.at(s, ch, i, j) = 0.5 * (a - b - cc + d);
        }
}

double energy(const TensorD& t) {
  double e = 0;
  for (double v : t.span()) e += v * v;
  return e;
}

}  // namespace

TEST_CASE("haar_pool of a constant image") {
  auto b = haar_pool(TensorD({1, 2, 4, 6}, 0.3));
  for (double v : b.ll.span()) CHECK(v == doctest::Approx(0.6));
  for (const auto* t : {&b.lh, &b.hl, &b.hh})
    for (double v : t->span()) CHECK(v == 0.0);
}

TEST_CASE("haar_pool / haar_unpool hand block") {
  auto b = haar_pool(TensorD({1, 1, 2, 2}, {1, 2, 3, 4}));
  CHECK(b.ll[0] == 5.0);
  CHECK(b.lh[0] == 2.0);
  CHECK(b.hl[0] == 1.0);
  CHECK(b.hh[0] == 0.0);
  WaveletBands<double> hand{TensorD({1, 1, 1, 1}, {5}), TensorD({1, 1, 1, 1}, {2}), TensorD({1, 1, 1, 1}, {1}),
                            TensorD({1, 1, 1, 1}, {0})};
  CHECK(haar_unpool(hand) == TensorD({1, 1, 2, 2}, {1, 2, 3, 4}));
  WaveletBands<double> zeros{TensorD({1, 2, 3, 3}), TensorD({1, 2, 3, 3}), TensorD({1, 2, 3, 3}), TensorD({1, 2, 3, 3})};
  const auto rec = haar_unpool(zeros);
  for (double v : rec.span()) CHECK(v == 0.0);
}

TEST_CASE("haar_pool matches the per-block oracle") {
  auto x = random_tensor<double>({2, 3, 16, 16}, 7);
  TensorD ll, lh, hl, hh;
  block_oracle(x, ll, lh, hl, hh);
  auto b = haar_pool(x.cast<float>());
  CHECK(max_abs_diff(b.ll.cast<double>(), ll) < 1e-6);
  CHECK(max_abs_diff(b.lh.cast<double>(), lh) < 1e-6);
  CHECK(max_abs_diff(b.hl.cast<double>(), hl) < 1e-6);
  CHECK(max_abs_diff(b.hh.cast<double>(), hh) < 1e-6);
}

TEST_CASE("perfect reconstruction, energy conservation, linearity") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto x = random_tensor<double>({1, 8, 32, 32}, seed);
    auto xf = x.cast<float>();
    CHECK(max_abs_diff(haar_unpool(haar_pool(xf)), xf) < 1e-6);
    CHECK(max_abs_diff(haar_unpool(haar_pool(x)), x) < 1e-12);

    auto b = haar_pool(x);
    const double e = energy(b.ll) + energy(b.lh) + energy(b.hl) + energy(b.hh);
    CHECK(std::abs(e - energy(x)) / energy(x) < 1e-4);

    auto y = random_tensor<double>({1, 8, 32, 32}, seed + 100);
    TensorD comb(x.shape());
    for (std::size_t i = 0; i < comb.numel(); ++i) comb[i] = 2.5 * x[i] - 0.7 * y[i];
    auto bc = haar_pool(comb);
    auto by = haar_pool(y);
    for (std::size_t i = 0; i < bc.ll.numel(); ++i) {
      CHECK(std::abs(bc.ll[i] - (2.5 * b.ll[i] - 0.7 * by.ll[i])) < 1e-6);
      CHECK(std::abs(bc.hh[i] - (2.5 * b.hh[i] - 0.7 * by.hh[i])) < 1e-6);
    }
  }
}

TEST_CASE("haar errors") {
  CHECK_THROWS_AS(haar_pool(TensorD({1, 1, 3, 4})), ShapeError);
  CHECK_THROWS_AS(haar_pool(TensorD({1, 1, 4, 5})), ShapeError);
  WaveletBands<double> bad{TensorD({1, 1, 2, 2}), TensorD({1, 1, 2, 2}), TensorD({1, 1, 2, 3}), TensorD({1, 1, 2, 2})};
  CHECK_THROWS_AS(haar_unpool(bad), ShapeError);
  CHECK_THROWS_AS(haar_multilevel(TensorD({1, 1, 6, 8}), 2), ShapeError);
}

TEST_CASE("haar_multilevel") {
  auto x = random_tensor<double>({2, 2, 16, 16}, 3);
  auto one = haar_multilevel(x, 1);
  REQUIRE(one.size() == 1);
  auto direct = haar_pool(x);
  CHECK(one[0].ll == direct.ll);
  CHECK(one[0].hh == direct.hh);

  auto c = haar_multilevel(TensorD({1, 1, 8, 8}, 0.25), 2);
  for (double v : c.back().ll.span()) CHECK(v == doctest::Approx(1.0));
  for (const auto& lvl : c)
    for (const auto* t : {&lvl.lh, &lvl.hl, &lvl.hh})
      for (double v : t->span()) CHECK(v == 0.0);

  auto xf = random_tensor<float>({1, 3, 32, 32}, 4);
  CHECK(max_abs_diff(haar_multilevel_inverse(haar_multilevel(xf, 3)), xf) < 1e-5);
}

TEST_CASE("haar graph ops match tensor ops and pass finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::vector<TensorD> in = {random_tensor<double>({1, 2, 4, 4}, seed), random_tensor<double>({1, 2, 2, 2}, seed + 1),
                               random_tensor<double>({1, 2, 4, 4}, seed + 2)};
    auto fn = [](Graph<double>&, const std::vector<Var<double>>& v) {
      auto b = haar_pool(v[0]);
      auto rec = haar_unpool(mul(b[0], v[1]), b[1], square(b[2]), b[3]);
      return sum(mul(rec, v[2]));
    };
    CHECK(testutil::gradient_check(fn, in) < 1e-4);
  }
  Graph<double> g;
  auto x = random_tensor<double>({1, 2, 8, 8}, 9);
  auto b = haar_pool(g.constant(x));
  auto ref = haar_pool(x);
  CHECK(b[0].value() == ref.ll);
  CHECK(b[3].value() == ref.hh);
  CHECK(max_abs_diff(haar_unpool(b[0], b[1], b[2], b[3]).value(), x) < 1e-12);
}
