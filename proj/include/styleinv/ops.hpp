#pragma once

// Differentiable elementwise, reduction and matrix operations.

#include <map>
#include <string>
#include <vector>

#include "styleinv/graph.hpp"

namespace styleinv {

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T s);
template <typename T> Var<T> square(Var<T> a);
template <typename T> Var<T> sum(Var<T> a);
template <typename T> Var<T> mean(Var<T> a);
/// (M,K) x (K,N) -> (M,N)
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
template <typename T> Var<T> relu(Var<T> a);
/// Values outside [lo, hi] are clamped; their gradient is zero.
template <typename T> Var<T> clamp(Var<T> a, T lo, T hi);
/// Mean squared difference, a scalar.
template <typename T> Var<T> mse(Var<T> a, Var<T> b);
template <typename T> Var<T> reshape(Var<T> a, Shape s);

enum class OpKind {
  add,
  sub,
  mul,
  scale,
  square,
  sum,
  mean,
  matmul,
  relu,
  softmax,
  max_pool2x2,
  avg_pool,
  upsample_nearest,
  conv2d,
  instance_norm,
  adain,
  concat_channels,
};

using Attrs = std::map<std::string, double>;

OpKind op_kind_from_string(const std::string& name);

/// Uniform entry point over the single-output operations. Attributes:
/// scale: "factor"; avg_pool / upsample_nearest: "factor"; conv2d: "stride",
/// "pad" (inputs x, weight[, bias]); instance_norm: "eps" (inputs x, gamma, beta);
/// adain: "eps" (inputs content, style).
template <typename T>
Var<T> forward_op(OpKind kind, const std::vector<Var<T>>& inputs, const Attrs& attrs = {});

}  // namespace styleinv
