#include "styleinv/ops.hpp"

#include <algorithm>
#include <cmath>

#include "styleinv/kernels.hpp"
#include "styleinv/layers.hpp"

namespace styleinv {

namespace {

template <typename T>
void require_same(const Var<T>& a, const Var<T>& b, const char* kind) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(kind) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

template <typename T>
using GradSpan = std::span<Tensor<T>* const>;

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same(a, b, "add");
  Tensor<T> out = a.value();
  out += b.value();
  return a.graph->record("add", {a, b}, std::move(out), [](const Tensor<T>& g, GradSpan<T> gin) {
    if (gin[0]) *gin[0] += g;
    if (gin[1]) *gin[1] += g;
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same(a, b, "sub");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
  return a.graph->record("sub", {a, b}, std::move(out), [](const Tensor<T>& g, GradSpan<T> gin) {
    if (gin[0]) *gin[0] += g;
    if (gin[1])
      for (std::size_t i = 0; i < g.numel(); ++i) (*gin[1])[i] -= g[i];
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same(a, b, "mul");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  const Graph<T>* gr = a.graph;
  const int ia = a.id, ib = b.id;
  return a.graph->record("mul", {a, b}, std::move(out),
                         [gr, ia, ib](const Tensor<T>& g, GradSpan<T> gin) {
                           const auto& av = gr->node(ia).value;
                           const auto& bv = gr->node(ib).value;
                           if (gin[0])
                             for (std::size_t i = 0; i < g.numel(); ++i) (*gin[0])[i] += g[i] * bv[i];
                           if (gin[1])
                             for (std::size_t i = 0; i < g.numel(); ++i) (*gin[1])[i] += g[i] * av[i];
                         });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.span()) v *= s;
  return a.graph->record("scale", {a}, std::move(out), [s](const Tensor<T>& g, GradSpan<T> gin) {
    for (std::size_t i = 0; i < g.numel(); ++i) (*gin[0])[i] += s * g[i];
  });
}

template <typename T>
Var<T> square(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.span()) v *= v;
  const Graph<T>* gr = a.graph;
  const int ia = a.id;
  return a.graph->record("square", {a}, std::move(out), [gr, ia](const Tensor<T>& g, GradSpan<T> gin) {
    const auto& av = gr->node(ia).value;
    for (std::size_t i = 0; i < g.numel(); ++i) (*gin[0])[i] += T(2) * av[i] * g[i];
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  T s = 0;
  for (T v : a.value().span()) s += v;
  return a.graph->record("sum", {a}, Tensor<T>::scalar(s), [](const Tensor<T>& g, GradSpan<T> gin) {
    const T gv = g[0];
    for (auto& v : gin[0]->span()) v += gv;
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  const auto n = static_cast<T>(a.value().numel());
  return scale(sum(a), T(1) / n);
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: cannot multiply " + shape_str(a.shape()) + " by " +
                     shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out({m, n});
  kernels::gemm_nn(m, n, k, a.value().data(), b.value().data(), out.data(), false);
  const Graph<T>* gr = a.graph;
  const int ia = a.id, ib = b.id;
  return a.graph->record("matmul", {a, b}, std::move(out),
                         [gr, ia, ib, m, n, k](const Tensor<T>& g, GradSpan<T> gin) {
                           const auto& av = gr->node(ia).value;
                           const auto& bv = gr->node(ib).value;
                           // dA = G * B^T, dB = A^T * G
                           if (gin[0]) kernels::gemm_nt(m, k, n, g.data(), bv.data(), gin[0]->data(), true);
                           if (gin[1]) kernels::gemm_tn(k, n, m, av.data(), g.data(), gin[1]->data(), true);
                         });
}

template <typename T>
Var<T> relu(Var<T> a) {
  Tensor<T> out = a.value();
  T* d = out.data();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(out.numel());
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) d[i] = d[i] > T(0) ? d[i] : T(0);
  const Graph<T>* gr = a.graph;
  const int ia = a.id;
  return a.graph->record("relu", {a}, std::move(out), [gr, ia](const Tensor<T>& g, GradSpan<T> gin) {
    const auto& av = gr->node(ia).value;
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (av[i] > T(0)) (*gin[0])[i] += g[i];
  });
}

template <typename T>
Var<T> clamp(Var<T> a, T lo, T hi) {
  Tensor<T> out = a.value();
  for (auto& v : out.span()) v = std::clamp(v, lo, hi);
  const Graph<T>* gr = a.graph;
  const int ia = a.id;
  return a.graph->record("clamp", {a}, std::move(out),
                         [gr, ia, lo, hi](const Tensor<T>& g, GradSpan<T> gin) {
                           const auto& av = gr->node(ia).value;
                           for (std::size_t i = 0; i < g.numel(); ++i)
                             if (av[i] >= lo && av[i] <= hi) (*gin[0])[i] += g[i];
                         });
}

template <typename T>
Var<T> mse(Var<T> a, Var<T> b) {
  return mean(square(sub(a, b)));
}

template <typename T>
Var<T> reshape(Var<T> a, Shape s) {
  Tensor<T> out = a.value().reshaped(std::move(s));
  return a.graph->record("reshape", {a}, std::move(out), [](const Tensor<T>& g, GradSpan<T> gin) {
    for (std::size_t i = 0; i < g.numel(); ++i) (*gin[0])[i] += g[i];
  });
}

OpKind op_kind_from_string(const std::string& name) {
  static const std::map<std::string, OpKind> table = {
      {"add", OpKind::add},
      {"sub", OpKind::sub},
      {"mul", OpKind::mul},
      {"scale", OpKind::scale},
      {"square", OpKind::square},
      {"sum", OpKind::sum},
      {"mean", OpKind::mean},
      {"matmul", OpKind::matmul},
      {"relu", OpKind::relu},
      {"softmax", OpKind::softmax},
      {"max_pool2x2", OpKind::max_pool2x2},
      {"avg_pool", OpKind::avg_pool},
      {"upsample_nearest", OpKind::upsample_nearest},
      {"conv2d", OpKind::conv2d},
      {"instance_norm", OpKind::instance_norm},
      {"adain", OpKind::adain},
      {"concat_channels", OpKind::concat_channels},
  };
  auto it = table.find(name);
  if (it == table.end()) throw Error("unknown operation kind '" + name + "'");
  return it->second;
}

namespace {

double attr(const Attrs& attrs, const char* key, double fallback) {
  auto it = attrs.find(key);
  return it == attrs.end() ? fallback : it->second;
}

template <typename T>
void arity(const std::vector<Var<T>>& in, std::size_t lo, std::size_t hi, const char* kind) {
  if (in.size() < lo || in.size() > hi)
    throw ShapeError(std::string(kind) + ": expected " + std::to_string(lo) + ".." +
                     std::to_string(hi) + " inputs, got " + std::to_string(in.size()));
}

}  // namespace

template <typename T>
Var<T> forward_op(OpKind kind, const std::vector<Var<T>>& in, const Attrs& attrs) {
  switch (kind) {
    case OpKind::add: arity(in, 2, 2, "add"); return add(in[0], in[1]);
    case OpKind::sub: arity(in, 2, 2, "sub"); return sub(in[0], in[1]);
    case OpKind::mul: arity(in, 2, 2, "mul"); return mul(in[0], in[1]);
    case OpKind::scale:
      arity(in, 1, 1, "scale");
      return scale(in[0], static_cast<T>(attr(attrs, "factor", 1.0)));
    case OpKind::square: arity(in, 1, 1, "square"); return square(in[0]);
    case OpKind::sum: arity(in, 1, 1, "sum"); return sum(in[0]);
    case OpKind::mean: arity(in, 1, 1, "mean"); return mean(in[0]);
    case OpKind::matmul: arity(in, 2, 2, "matmul"); return matmul(in[0], in[1]);
    case OpKind::relu: arity(in, 1, 1, "relu"); return relu(in[0]);
    case OpKind::softmax: arity(in, 1, 1, "softmax"); return softmax_channels(in[0]);
    case OpKind::max_pool2x2: arity(in, 1, 1, "max_pool2x2"); return max_pool2x2(in[0]);
    case OpKind::avg_pool:
      arity(in, 1, 1, "avg_pool");
      return avg_pool(in[0], static_cast<int>(attr(attrs, "factor", 2)));
    case OpKind::upsample_nearest:
      arity(in, 1, 1, "upsample_nearest");
      return upsample_nearest(in[0], static_cast<int>(attr(attrs, "factor", 2)));
    case OpKind::conv2d: {
      arity(in, 2, 3, "conv2d");
      Var<T> bias = in.size() == 3 ? in[2] : Var<T>{in[0].graph, -1};
      return conv2d(in[0], in[1], bias, static_cast<int>(attr(attrs, "stride", 1)),
                    static_cast<int>(attr(attrs, "pad", 0)));
    }
    case OpKind::instance_norm:
      arity(in, 3, 3, "instance_norm");
      return instance_norm(in[0], in[1], in[2], attr(attrs, "eps", kNormEps));
    case OpKind::adain:
      arity(in, 2, 2, "adain");
      return adain(in[0], in[1], attr(attrs, "eps", kNormEps));
    case OpKind::concat_channels: return concat_channels(in);
  }
  throw Error("forward_op: unhandled kind");
}

#define STYLEINV_INSTANTIATE(T)                                              \
  template Var<T> add<T>(Var<T>, Var<T>);                                    \
  template Var<T> sub<T>(Var<T>, Var<T>);                                    \
  template Var<T> mul<T>(Var<T>, Var<T>);                                    \
  template Var<T> scale<T>(Var<T>, T);                                       \
  template Var<T> square<T>(Var<T>);                                         \
  template Var<T> sum<T>(Var<T>);                                            \
  template Var<T> mean<T>(Var<T>);                                           \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                 \
  template Var<T> relu<T>(Var<T>);                                           \
  template Var<T> clamp<T>(Var<T>, T, T);                                    \
  template Var<T> mse<T>(Var<T>, Var<T>);                                    \
  template Var<T> reshape<T>(Var<T>, Shape);                                 \
  template Var<T> forward_op<T>(OpKind, const std::vector<Var<T>>&, const Attrs&);

STYLEINV_INSTANTIATE(float)
STYLEINV_INSTANTIATE(double)

#undef STYLEINV_INSTANTIATE

}  // namespace styleinv
