#pragma once

// Orthonormal 2x2 Haar analysis/synthesis, applied depthwise with stride 2.
//
//   LL = 1/2 [[ 1, 1], [ 1, 1]]    LH = 1/2 [[-1,-1], [ 1, 1]]
//   HL = 1/2 [[-1, 1], [-1, 1]]    HH = 1/2 [[ 1,-1], [-1, 1]]
//
// LH responds to vertical change, HL to horizontal change.

#include <array>
#include <vector>

#include "styleinv/graph.hpp"

namespace styleinv {

template <typename T>
struct WaveletBands {
  Tensor<T> ll, lh, hl, hh;
};

template <typename T>
WaveletBands<T> haar_pool(const Tensor<T>& x);

template <typename T>
Tensor<T> haar_unpool(const WaveletBands<T>& bands);

/// Level k pools the LL of level k-1. Every level keeps all four bands; the
/// deepest low-pass is pyramid.back().ll.
template <typename T>
std::vector<WaveletBands<T>> haar_multilevel(const Tensor<T>& x, int levels);

/// Inverse of haar_multilevel (uses only the deepest LL plus all detail bands).
template <typename T>
Tensor<T> haar_multilevel_inverse(const std::vector<WaveletBands<T>>& pyramid);

/// Differentiable variants. Returns {LL, LH, HL, HH}.
template <typename T>
std::array<Var<T>, 4> haar_pool(Var<T> x);

template <typename T>
Var<T> haar_unpool(Var<T> ll, Var<T> lh, Var<T> hl, Var<T> hh);

}  // namespace styleinv
