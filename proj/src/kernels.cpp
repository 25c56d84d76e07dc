#include "styleinv/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <string>
#include <utility>
#include <vector>

namespace styleinv::kernels {

template <typename T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  constexpr int R = 4;
  const int blocks = (m + R - 1) / R;
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < blocks; ++blk) {
    const int i0 = blk * R;
    const int rows = std::min(R, m - i0);
    T* crow[R];
    const T* arow[R];
    for (int r = 0; r < R; ++r) {
      const int i = i0 + std::min(r, rows - 1);
      crow[r] = c + static_cast<std::size_t>(i) * n;
      arow[r] = a + static_cast<std::size_t>(i) * k;
    }
    for (int r = 0; r < rows; ++r)
      if (!accumulate) std::fill(crow[r], crow[r] + n, T(0));
    if (rows == R) {
      T* __restrict c0 = crow[0];
      T* __restrict c1 = crow[1];
      T* __restrict c2 = crow[2];
      T* __restrict c3 = crow[3];
      for (int p = 0; p < k; ++p) {
        const T a0 = arow[0][p], a1 = arow[1][p], a2 = arow[2][p], a3 = arow[3][p];
        const T* __restrict brow = b + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) {
          const T bv = brow[j];
          c0[j] += a0 * bv;
          c1[j] += a1 * bv;
          c2[j] += a2 * bv;
          c3[j] += a3 * bv;
        }
      }
    } else {
      for (int r = 0; r < rows; ++r)
        for (int p = 0; p < k; ++p) {
          const T av = arow[r][p];
          const T* brow = b + static_cast<std::size_t>(p) * n;
          T* cr = crow[r];
          for (int j = 0; j < n; ++j) cr[j] += av * brow[j];
        }
    }
  }
}

template <typename T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) std::fill(crow, crow + n, T(0));
    for (int p = 0; p < k; ++p) {
      const T av = a[static_cast<std::size_t>(p) * m + i];
      const T* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  // Transposing b lets the row kernel run contiguous over the output columns.
  std::vector<T> bt(static_cast<std::size_t>(k) * n);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < k; ++p)
    for (int j = 0; j < n; ++j)
      bt[static_cast<std::size_t>(p) * n + j] = b[static_cast<std::size_t>(j) * k + p];
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

namespace {
// Output columns [lo, hi) whose input column ox*stride - pad + kx lies inside [0, w).
std::pair<int, int> valid_cols(int wo, int w, int stride, int pad, int kx) {
  const int off = pad - kx;
  int lo = off > 0 ? (off + stride - 1) / stride : 0;
  int hi = (w - 1 + off) >= 0 ? (w - 1 + off) / stride + 1 : 0;
  lo = std::min(lo, wo);
  hi = std::clamp(hi, lo, wo);
  return {lo, hi};
}
}  // namespace

template <typename T>
void im2col(const ConvGeom& g, const T* plane, T* col) {
  const int ho = g.out_h(), wo = g.out_w();
  const int rows = g.patch();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int kx = r % g.kw;
    const int ky = (r / g.kw) % g.kh;
    const int ci = r / (g.kw * g.kh);
    const T* src = plane + static_cast<std::size_t>(ci) * g.h * g.w;
    T* dst = col + static_cast<std::size_t>(r) * ho * wo;
    for (int oy = 0; oy < ho; ++oy) {
      const int iy = oy * g.sh - g.ph + ky;
      T* drow = dst + static_cast<std::size_t>(oy) * wo;
      if (iy < 0 || iy >= g.h) {
        std::fill(drow, drow + wo, T(0));
        continue;
      }
      const T* srow = src + static_cast<std::size_t>(iy) * g.w;
      const auto [lo, hi] = valid_cols(wo, g.w, g.sw, g.pw, kx);
      std::fill(drow, drow + lo, T(0));
      if (g.sw == 1)
        std::copy(srow + lo - g.pw + kx, srow + hi - g.pw + kx, drow + lo);
      else
        for (int ox = lo; ox < hi; ++ox) drow[ox] = srow[ox * g.sw - g.pw + kx];
      std::fill(drow + hi, drow + wo, T(0));
    }
  }
}

template <typename T>
void col2im(const ConvGeom& g, const T* col, T* plane) {
  const int ho = g.out_h(), wo = g.out_w();
  // Parallel over input channels so no two threads write the same plane.
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < g.cin; ++ci) {
    T* dst = plane + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.kh; ++ky)
      for (int kx = 0; kx < g.kw; ++kx) {
        const int r = (ci * g.kh + ky) * g.kw + kx;
        const T* src = col + static_cast<std::size_t>(r) * ho * wo;
        const auto [lo, hi] = valid_cols(wo, g.w, g.sw, g.pw, kx);
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.sh - g.ph + ky;
          if (iy < 0 || iy >= g.h) continue;
          T* drow = dst + static_cast<std::size_t>(iy) * g.w;
          const T* srow = src + static_cast<std::size_t>(oy) * wo;
          if (g.sw == 1) {
            T* d = drow - g.pw + kx;
            for (int ox = lo; ox < hi; ++ox) d[ox] += srow[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) drow[ox * g.sw - g.pw + kx] += srow[ox];
          }
        }
      }
  }
}

namespace {
bool is_pointwise(const ConvGeom& g) {
  return g.kh == 1 && g.kw == 1 && g.sh == 1 && g.sw == 1 && g.ph == 0 && g.pw == 0;
}
}  // namespace

template <typename T>
void conv2d_forward(const ConvGeom& g, const T* x, const T* weight, const T* bias, T* y) {
  const int ho = g.out_h(), wo = g.out_w();
  const std::size_t in_plane = static_cast<std::size_t>(g.cin) * g.h * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.cout) * ho * wo;
  const int hw = ho * wo;
  std::vector<T> col;
  if (!is_pointwise(g)) col.resize(static_cast<std::size_t>(g.patch()) * hw);
  for (int n = 0; n < g.n; ++n) {
    const T* src = x + n * in_plane;
    T* dst = y + n * out_plane;
    if (!is_pointwise(g)) {
      im2col(g, src, col.data());
      src = col.data();
    }
    gemm_nn(g.cout, hw, g.patch(), weight, src, dst, false);
    if (bias) {
#pragma omp parallel for schedule(static)
      for (int co = 0; co < g.cout; ++co) {
        T* row = dst + static_cast<std::size_t>(co) * hw;
        for (int j = 0; j < hw; ++j) row[j] += bias[co];
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeom& g, const T* x, const T* weight, const T* gy, T* gx,
                     T* gweight, T* gbias) {
  const int ho = g.out_h(), wo = g.out_w();
  const int hw = ho * wo;
  const std::size_t in_plane = static_cast<std::size_t>(g.cin) * g.h * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.cout) * hw;
  const bool pointwise = is_pointwise(g);
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(g.patch()) * hw);
  std::vector<T> gcol(static_cast<std::size_t>(g.patch()) * hw);
  for (int n = 0; n < g.n; ++n) {
    const T* gyn = gy + n * out_plane;
    if (gbias) {
#pragma omp parallel for schedule(static)
      for (int co = 0; co < g.cout; ++co) {
        const T* row = gyn + static_cast<std::size_t>(co) * hw;
        T s = 0;
        for (int j = 0; j < hw; ++j) s += row[j];
        gbias[co] += s;
      }
    }
    if (gweight) {
      const T* src = x + n * in_plane;
      if (!pointwise) {
        im2col(g, src, col.data());
        src = col.data();
      }
      gemm_nt(g.cout, g.patch(), hw, gyn, src, gweight, true);
    }
    if (gx) {
      T* gxn = gx + n * in_plane;
      if (pointwise) {
        gemm_tn(g.patch(), hw, g.cout, weight, gyn, gxn, true);
      } else {
        gemm_tn(g.patch(), hw, g.cout, weight, gyn, gcol.data(), false);
        col2im(g, gcol.data(), gxn);
      }
    }
  }
}

namespace serial {

template <typename T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T s = accumulate ? c[static_cast<std::size_t>(i) * n + j] : T(0);
      for (int p = 0; p < k; ++p)
        s += a[static_cast<std::size_t>(i) * k + p] * b[static_cast<std::size_t>(p) * n + j];
      c[static_cast<std::size_t>(i) * n + j] = s;
    }
}

template <typename T>
void conv2d_forward(const ConvGeom& g, const T* x, const T* weight, const T* bias, T* y) {
  const int ho = g.out_h(), wo = g.out_w();
  for (int n = 0; n < g.n; ++n)
    for (int co = 0; co < g.cout; ++co)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          T s = bias ? bias[co] : T(0);
          for (int ci = 0; ci < g.cin; ++ci)
            for (int ky = 0; ky < g.kh; ++ky)
              for (int kx = 0; kx < g.kw; ++kx) {
                const int iy = oy * g.sh - g.ph + ky;
                const int ix = ox * g.sw - g.pw + kx;
                if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) continue;
                s += weight[((static_cast<std::size_t>(co) * g.cin + ci) * g.kh + ky) * g.kw + kx] *
                     x[((static_cast<std::size_t>(n) * g.cin + ci) * g.h + iy) * g.w + ix];
              }
          y[((static_cast<std::size_t>(n) * g.cout + co) * ho + oy) * wo + ox] = s;
        }
}

template <typename T>
void conv2d_backward(const ConvGeom& g, const T* x, const T* weight, const T* gy, T* gx,
                     T* gweight, T* gbias) {
  const int ho = g.out_h(), wo = g.out_w();
  for (int n = 0; n < g.n; ++n)
    for (int co = 0; co < g.cout; ++co)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          const T go = gy[((static_cast<std::size_t>(n) * g.cout + co) * ho + oy) * wo + ox];
          if (gbias) gbias[co] += go;
          for (int ci = 0; ci < g.cin; ++ci)
            for (int ky = 0; ky < g.kh; ++ky)
              for (int kx = 0; kx < g.kw; ++kx) {
                const int iy = oy * g.sh - g.ph + ky;
                const int ix = ox * g.sw - g.pw + kx;
                if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) continue;
                const std::size_t wi =
                    ((static_cast<std::size_t>(co) * g.cin + ci) * g.kh + ky) * g.kw + kx;
                const std::size_t xi =
                    ((static_cast<std::size_t>(n) * g.cin + ci) * g.h + iy) * g.w + ix;
                if (gweight) gweight[wi] += go * x[xi];
                if (gx) gx[xi] += go * weight[wi];
              }
        }
}

}  // namespace serial

int configure_threads_from_env() {
  if (const char* env = std::getenv("STYLEINV_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
  return omp_get_max_threads();
}

#define STYLEINV_INSTANTIATE(T)                                                              \
  template void gemm_nn<T>(int, int, int, const T*, const T*, T*, bool);                   \
  template void gemm_tn<T>(int, int, int, const T*, const T*, T*, bool);                   \
  template void gemm_nt<T>(int, int, int, const T*, const T*, T*, bool);                   \
  template void im2col<T>(const ConvGeom&, const T*, T*);                                  \
  template void col2im<T>(const ConvGeom&, const T*, T*);                                  \
  template void conv2d_forward<T>(const ConvGeom&, const T*, const T*, const T*, T*);      \
  template void conv2d_backward<T>(const ConvGeom&, const T*, const T*, const T*, T*, T*,  \
                                   T*);                                                    \
  template void serial::gemm_nn<T>(int, int, int, const T*, const T*, T*, bool);           \
  template void serial::conv2d_forward<T>(const ConvGeom&, const T*, const T*, const T*,   \
                                          T*);                                             \
  template void serial::conv2d_backward<T>(const ConvGeom&, const T*, const T*, const T*,  \
                                           T*, T*, T*);

STYLEINV_INSTANTIATE(float)
STYLEINV_INSTANTIATE(double)

#undef STYLEINV_INSTANTIATE

}  // namespace styleinv::kernels
