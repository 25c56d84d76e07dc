#include "styleinv/wavelet.hpp"

namespace styleinv {

namespace {

// Sign of each kernel tap, indexed [band][dy*2+dx]; scale 1/2 applied separately.
constexpr int kSigns[4][4] = {
    {1, 1, 1, 1},    // LL
    {-1, -1, 1, 1},  // LH
    {-1, 1, -1, 1},  // HL
    {1, -1, -1, 1},  // HH
};

template <typename T>
void check_even(const Shape& s, const char* what) {
  if (s.size() != 4) throw ShapeError(std::string(what) + ": expected NCHW, got " + shape_str(s));
  if (s[2] % 2 != 0 || s[3] % 2 != 0)
    throw ShapeError(std::string(what) + ": odd spatial extent in " + shape_str(s));
}

// One band of the analysis transform.
template <typename T>
void analyse(const T* x, int planes, int h, int w, int band, T* out) {
  const int ho = h / 2, wo = w / 2;
  const auto& sg = kSigns[band];
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx) {
        const T* r0 = x + (static_cast<std::size_t>(p) * h + 2 * y) * w + 2 * xx;
        const T* r1 = r0 + w;
        out[(static_cast<std::size_t>(p) * ho + y) * wo + xx] =
            T(0.5) * (sg[0] * r0[0] + sg[1] * r0[1] + sg[2] * r1[0] + sg[3] * r1[1]);
      }
}

// Adjoint of one analysis band (accumulating); also the synthesis for that band.
template <typename T>
void synthesise_add(const T* band_data, int planes, int h, int w, int band, T* out) {
  const int ho = h / 2, wo = w / 2;
  const auto& sg = kSigns[band];
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx) {
        const T v = T(0.5) * band_data[(static_cast<std::size_t>(p) * ho + y) * wo + xx];
        T* r0 = out + (static_cast<std::size_t>(p) * h + 2 * y) * w + 2 * xx;
        T* r1 = r0 + w;
        r0[0] += sg[0] * v;
        r0[1] += sg[1] * v;
        r1[0] += sg[2] * v;
        r1[1] += sg[3] * v;
      }
}

}  // namespace

template <typename T>
WaveletBands<T> haar_pool(const Tensor<T>& x) {
  check_even<T>(x.shape(), "haar_pool");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  WaveletBands<T> b;
  Tensor<T>* outs[4] = {&b.ll, &b.lh, &b.hl, &b.hh};
  for (int k = 0; k < 4; ++k) {
    *outs[k] = Tensor<T>({n, c, h / 2, w / 2});
    analyse(x.data(), n * c, h, w, k, outs[k]->data());
  }
  return b;
}

template <typename T>
Tensor<T> haar_unpool(const WaveletBands<T>& b) {
  const Shape& s = b.ll.shape();
  if (s.size() != 4 || b.lh.shape() != s || b.hl.shape() != s || b.hh.shape() != s)
    throw ShapeError("haar_unpool: band shapes differ (" + shape_str(b.ll.shape()) + ", " +
                     shape_str(b.lh.shape()) + ", " + shape_str(b.hl.shape()) + ", " +
                     shape_str(b.hh.shape()) + ")");
  const int n = s[0], c = s[1], h = s[2] * 2, w = s[3] * 2;
  Tensor<T> out({n, c, h, w});
  const Tensor<T>* ins[4] = {&b.ll, &b.lh, &b.hl, &b.hh};
  for (int k = 0; k < 4; ++k) synthesise_add(ins[k]->data(), n * c, h, w, k, out.data());
  return out;
}

template <typename T>
std::vector<WaveletBands<T>> haar_multilevel(const Tensor<T>& x, int levels) {
  if (levels < 1) throw ShapeError("haar_multilevel: levels must be >= 1");
  if (x.rank() != 4) throw ShapeError("haar_multilevel: expected NCHW, got " + shape_str(x.shape()));
  const int div = 1 << levels;
  if (x.dim(2) % div != 0 || x.dim(3) % div != 0)
    throw ShapeError("haar_multilevel: extents " + shape_str(x.shape()) + " not divisible by " +
                     std::to_string(div));
  std::vector<WaveletBands<T>> pyramid;
  pyramid.push_back(haar_pool(x));
  for (int l = 1; l < levels; ++l) pyramid.push_back(haar_pool(pyramid.back().ll));
  return pyramid;
}

template <typename T>
Tensor<T> haar_multilevel_inverse(const std::vector<WaveletBands<T>>& pyramid) {
  if (pyramid.empty()) throw ShapeError("haar_multilevel_inverse: empty pyramid");
  Tensor<T> ll = pyramid.back().ll;
  for (auto it = pyramid.rbegin(); it != pyramid.rend(); ++it)
    ll = haar_unpool(WaveletBands<T>{ll, it->lh, it->hl, it->hh});
  return ll;
}

template <typename T>
std::array<Var<T>, 4> haar_pool(Var<T> x) {
  check_even<T>(x.shape(), "haar_pool");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  static const char* names[4] = {"haar_ll", "haar_lh", "haar_hl", "haar_hh"};
  std::array<Var<T>, 4> out;
  for (int k = 0; k < 4; ++k) {
    Tensor<T> band({n, c, h / 2, w / 2});
    analyse(x.value().data(), n * c, h, w, k, band.data());
    out[static_cast<std::size_t>(k)] = x.graph->record(
        names[k], {x}, std::move(band),
        [n, c, h, w, k](const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
          synthesise_add(g.data(), n * c, h, w, k, gin[0]->data());
        });
  }
  return out;
}

template <typename T>
Var<T> haar_unpool(Var<T> ll, Var<T> lh, Var<T> hl, Var<T> hh) {
  WaveletBands<T> b{ll.value(), lh.value(), hl.value(), hh.value()};
  Tensor<T> out = haar_unpool(b);
  const int n = out.dim(0), c = out.dim(1), h = out.dim(2), w = out.dim(3);
  return ll.graph->record("haar_unpool", {ll, lh, hl, hh}, std::move(out),
                          [n, c, h, w](const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
                            // Synthesis is orthogonal, so its adjoint is the analysis.
                            const int ho = h / 2, wo = w / 2;
                            Tensor<T> tmp({n, c, ho, wo});
                            for (int k = 0; k < 4; ++k) {
                              if (!gin[k]) continue;
                              analyse(g.data(), n * c, h, w, k, tmp.data());
                              *gin[k] += tmp;
                            }
                          });
}

#define STYLEINV_INSTANTIATE(T)                                                    \
  template WaveletBands<T> haar_pool<T>(const Tensor<T>&);                         \
  template Tensor<T> haar_unpool<T>(const WaveletBands<T>&);                       \
  template std::vector<WaveletBands<T>> haar_multilevel<T>(const Tensor<T>&, int); \
  template Tensor<T> haar_multilevel_inverse<T>(const std::vector<WaveletBands<T>>&); \
  template std::array<Var<T>, 4> haar_pool<T>(Var<T>);                             \
  template Var<T> haar_unpool<T>(Var<T>, Var<T>, Var<T>, Var<T>);

STYLEINV_INSTANTIATE(float)
STYLEINV_INSTANTIATE(double)

#undef STYLEINV_INSTANTIATE

}  // namespace styleinv
