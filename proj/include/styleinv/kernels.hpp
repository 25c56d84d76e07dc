#pragma once

// Numeric kernels behind the differentiable layers. The top-level namespace
// holds the OpenMP versions used by the library; kernels::serial holds the
// straightforward loop implementations they are tested and benchmarked against.

#include <cstddef>

#include "styleinv/tensor.hpp"

namespace styleinv::kernels {

struct ConvGeom {
  int n = 0, cin = 0, h = 0, w = 0;
  int cout = 0, kh = 1, kw = 1;
  int sh = 1, sw = 1, ph = 0, pw = 0;

  int out_h() const { return (h + 2 * ph - kh) / sh + 1; }
  int out_w() const { return (w + 2 * pw - kw) / sw + 1; }
  int patch() const { return cin * kh * kw; }
};

/// C[MxN] (+)= A[MxK] * B[KxN]
template <typename T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);
/// C[MxN] (+)= A[KxM]^T * B[KxN]
template <typename T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);
/// C[MxN] (+)= A[MxK] * B[NxK]^T
template <typename T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);

template <typename T>
void im2col(const ConvGeom& g, const T* plane, T* col);
template <typename T>
void col2im(const ConvGeom& g, const T* col, T* plane);

/// y = conv(x, weight) + bias, NCHW / OIHW.
template <typename T>
void conv2d_forward(const ConvGeom& g, const T* x, const T* weight, const T* bias, T* y);

/// Accumulates into gx, gweight, gbias when non-null.
template <typename T>
void conv2d_backward(const ConvGeom& g, const T* x, const T* weight, const T* gy, T* gx,
                     T* gweight, T* gbias);

namespace serial {

template <typename T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);

/// Direct 6-loop convolution.
template <typename T>
void conv2d_forward(const ConvGeom& g, const T* x, const T* weight, const T* bias, T* y);

template <typename T>
void conv2d_backward(const ConvGeom& g, const T* x, const T* weight, const T* gy, T* gx,
                     T* gweight, T* gbias);

}  // namespace serial

/// Applies STYLEINV_THREADS (if set) to the OpenMP runtime. Returns the thread cap in effect.
int configure_threads_from_env();

}  // namespace styleinv::kernels
