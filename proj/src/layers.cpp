#include "styleinv/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "styleinv/kernels.hpp"

namespace styleinv {

namespace {

template <typename T>
using GradSpan = std::span<Tensor<T>* const>;

template <typename T>
void require_rank4(const Var<T>& x, const char* kind) {
  if (x.value().rank() != 4)
    throw ShapeError(std::string(kind) + ": expected NCHW input, got " + shape_str(x.shape()));
}

template <typename T>
void require_channels(const Var<T>& p, int c, const char* kind, const char* what) {
  if (p.value().numel() != static_cast<std::size_t>(c))
    throw ShapeError(std::string(kind) + ": " + what + " has " + std::to_string(p.value().numel()) +
                     " entries for " + std::to_string(c) + " channels");
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, int stride, int pad) {
  require_rank4(x, "conv2d");
  const auto& ws = weight.shape();
  if (ws.size() != 4) throw ShapeError("conv2d: weight must be OIHW, got " + shape_str(ws));
  if (x.dim(1) != ws[1])
    throw ShapeError("conv2d: input has " + std::to_string(x.dim(1)) + " channels, weight expects " +
                     std::to_string(ws[1]));
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: invalid stride/padding");
  kernels::ConvGeom g;
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = ws[0];
  g.kh = ws[2];
  g.kw = ws[3];
  g.sh = g.sw = stride;
  g.ph = g.pw = pad;
  if (g.h + 2 * pad - g.kh < 0 || g.w + 2 * pad - g.kw < 0)
    throw ShapeError("conv2d: non-positive output extent for input " + shape_str(x.shape()) +
                     " and kernel " + shape_str(ws));
  const bool has_bias = bias.id >= 0;
  if (has_bias) require_channels(bias, g.cout, "conv2d", "bias");

  Tensor<T> out({g.n, g.cout, g.out_h(), g.out_w()});
  kernels::conv2d_forward(g, x.value().data(), weight.value().data(),
                          has_bias ? bias.value().data() : nullptr, out.data());
  const Graph<T>* gr = x.graph;
  const int ix = x.id, iw = weight.id;
  auto fn = [gr, ix, iw, g](const Tensor<T>& gy, GradSpan<T> gin) {
    kernels::conv2d_backward(g, gr->node(ix).value.data(), gr->node(iw).value.data(), gy.data(),
                             gin[0] ? gin[0]->data() : nullptr, gin[1] ? gin[1]->data() : nullptr,
                             gin.size() > 2 && gin[2] ? gin[2]->data() : nullptr);
  };
  if (has_bias) return x.graph->record("conv2d", {x, weight, bias}, std::move(out), fn);
  return x.graph->record("conv2d", {x, weight}, std::move(out), fn);
}

template <typename T>
Var<T> upsample_nearest(Var<T> x, int factor) {
  require_rank4(x, "upsample_nearest");
  if (factor < 1) throw ShapeError("upsample_nearest: factor must be >= 1");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int ho = h * factor, wo = w * factor;
  Tensor<T> out({n, c, ho, wo});
  const T* src = x.value().data();
  T* dst = out.data();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < n * c; ++p)
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx)
        dst[(static_cast<std::size_t>(p) * ho + y) * wo + xx] =
            src[(static_cast<std::size_t>(p) * h + y / factor) * w + xx / factor];
  return x.graph->record("upsample_nearest", {x}, std::move(out),
                         [n, c, h, w, factor](const Tensor<T>& g, GradSpan<T> gin) {
                           const int ho = h * factor, wo = w * factor;
                           T* gx = gin[0]->data();
#pragma omp parallel for schedule(static)
                           for (int p = 0; p < n * c; ++p)
                             for (int y = 0; y < ho; ++y)
                               for (int xx = 0; xx < wo; ++xx)
                                 gx[(static_cast<std::size_t>(p) * h + y / factor) * w + xx / factor] +=
                                     g[(static_cast<std::size_t>(p) * ho + y) * wo + xx];
                         });
}

namespace {

// Source taps for output index o of a 2x half-pixel bilinear upsample along an axis of length n.
inline void bilinear_taps(int o, int n, int& i0, int& i1, double& w1) {
  const int i = o / 2;
  if (o % 2 == 0) {
    i0 = i;
    i1 = std::max(i - 1, 0);
  } else {
    i0 = i;
    i1 = std::min(i + 1, n - 1);
  }
  w1 = 0.25;
}

}  // namespace

template <typename T>
Var<T> upsample_bilinear2x(Var<T> x) {
  require_rank4(x, "upsample_bilinear2x");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int ho = 2 * h, wo = 2 * w;
  Tensor<T> out({n, c, ho, wo});
  const T* src = x.value().data();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < n * c; ++p)
    for (int y = 0; y < ho; ++y) {
      int y0, y1;
      double wy;
      bilinear_taps(y, h, y0, y1, wy);
      for (int xx = 0; xx < wo; ++xx) {
        int x0, x1;
        double wx;
        bilinear_taps(xx, w, x0, x1, wx);
        const T* pl = src + static_cast<std::size_t>(p) * h * w;
        const double v = (1 - wy) * ((1 - wx) * pl[y0 * w + x0] + wx * pl[y0 * w + x1]) +
                         wy * ((1 - wx) * pl[y1 * w + x0] + wx * pl[y1 * w + x1]);
        out[(static_cast<std::size_t>(p) * ho + y) * wo + xx] = static_cast<T>(v);
      }
    }
  return x.graph->record("upsample_bilinear2x", {x}, std::move(out),
                         [n, c, h, w](const Tensor<T>& g, GradSpan<T> gin) {
                           const int ho = 2 * h, wo = 2 * w;
                           T* gx = gin[0]->data();
#pragma omp parallel for schedule(static)
                           for (int p = 0; p < n * c; ++p) {
                             T* pl = gx + static_cast<std::size_t>(p) * h * w;
                             for (int y = 0; y < ho; ++y) {
                               int y0, y1;
                               double wy;
                               bilinear_taps(y, h, y0, y1, wy);
                               for (int xx = 0; xx < wo; ++xx) {
                                 int x0, x1;
                                 double wx;
                                 bilinear_taps(xx, w, x0, x1, wx);
                                 const double gv = g[(static_cast<std::size_t>(p) * ho + y) * wo + xx];
                                 pl[y0 * w + x0] += static_cast<T>((1 - wy) * (1 - wx) * gv);
                                 pl[y0 * w + x1] += static_cast<T>((1 - wy) * wx * gv);
                                 pl[y1 * w + x0] += static_cast<T>(wy * (1 - wx) * gv);
                                 pl[y1 * w + x1] += static_cast<T>(wy * wx * gv);
                               }
                             }
                           }
                         });
}

template <typename T>
Var<T> avg_pool(Var<T> x, int factor) {
  require_rank4(x, "avg_pool");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (factor < 1 || h % factor != 0 || w % factor != 0)
    throw ShapeError("avg_pool: extents " + shape_str(x.shape()) + " not divisible by " +
                     std::to_string(factor));
  const int ho = h / factor, wo = w / factor;
  const T inv = T(1) / static_cast<T>(factor * factor);
  Tensor<T> out({n, c, ho, wo});
  const T* src = x.value().data();
  T* dst = out.data();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < n * c; ++p)
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx) {
        T s = 0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx)
            s += src[(static_cast<std::size_t>(p) * h + y * factor + dy) * w + xx * factor + dx];
        dst[(static_cast<std::size_t>(p) * ho + y) * wo + xx] = s * inv;
      }
  return x.graph->record("avg_pool", {x}, std::move(out),
                         [n, c, h, w, factor, inv](const Tensor<T>& g, GradSpan<T> gin) {
                           const int ho = h / factor, wo = w / factor;
                           T* gx = gin[0]->data();
#pragma omp parallel for schedule(static)
                           for (int p = 0; p < n * c; ++p)
                             for (int y = 0; y < h; ++y)
                               for (int xx = 0; xx < w; ++xx)
                                 gx[(static_cast<std::size_t>(p) * h + y) * w + xx] +=
                                     inv * g[(static_cast<std::size_t>(p) * ho + y / factor) * wo + xx / factor];
                         });
}

template <typename T>
Var<T> max_pool2x2(Var<T> x) {
  require_rank4(x, "max_pool2x2");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0)
    throw ShapeError("max_pool2x2: odd extents in " + shape_str(x.shape()));
  const int ho = h / 2, wo = w / 2;
  Tensor<T> out({n, c, ho, wo});
  // Flat index of the winning input per output element; first maximum wins.
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
  const T* src = x.value().data();
  T* dst = out.data();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < n * c; ++p)
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx) {
        std::size_t best = (static_cast<std::size_t>(p) * h + 2 * y) * w + 2 * xx;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (static_cast<std::size_t>(p) * h + 2 * y + dy) * w + 2 * xx + dx;
            if (src[idx] > src[best]) best = idx;
          }
        const std::size_t o = (static_cast<std::size_t>(p) * ho + y) * wo + xx;
        dst[o] = src[best];
        (*argmax)[o] = best;
      }
  return x.graph->record("max_pool2x2", {x}, std::move(out),
                         [argmax](const Tensor<T>& g, GradSpan<T> gin) {
                           for (std::size_t o = 0; o < g.numel(); ++o) (*gin[0])[(*argmax)[o]] += g[o];
                         });
}

template <typename T>
Var<T> softmax_channels(Var<T> x) {
  require_rank4(x, "softmax");
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out(x.shape());
  const T* src = x.value().data();
  T* dst = out.data();
#pragma omp parallel for schedule(static)
  for (int b = 0; b < n; ++b)
    for (int i = 0; i < hw; ++i) {
      const std::size_t base = static_cast<std::size_t>(b) * c * hw + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (int k = 0; k < c; ++k) mx = std::max(mx, src[base + static_cast<std::size_t>(k) * hw]);
      T s = 0;
      for (int k = 0; k < c; ++k) {
        const T e = std::exp(src[base + static_cast<std::size_t>(k) * hw] - mx);
        dst[base + static_cast<std::size_t>(k) * hw] = e;
        s += e;
      }
      for (int k = 0; k < c; ++k) dst[base + static_cast<std::size_t>(k) * hw] /= s;
    }
  Graph<T>* gr = x.graph;
  const int self = static_cast<int>(gr->size());
  return gr->record("softmax", {x}, std::move(out), [gr, self, n, c, hw](const Tensor<T>& g, GradSpan<T> gin) {
    const auto& p = gr->node(self).value;
    T* gx = gin[0]->data();
#pragma omp parallel for schedule(static)
    for (int b = 0; b < n; ++b)
      for (int i = 0; i < hw; ++i) {
        const std::size_t base = static_cast<std::size_t>(b) * c * hw + i;
        T dot = 0;
        for (int k = 0; k < c; ++k) dot += g[base + static_cast<std::size_t>(k) * hw] * p[base + static_cast<std::size_t>(k) * hw];
        for (int k = 0; k < c; ++k) {
          const std::size_t j = base + static_cast<std::size_t>(k) * hw;
          gx[j] += p[j] * (g[j] - dot);
        }
      }
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  for (const auto& v : xs) require_rank4(v, "concat_channels");
  const int n = xs[0].dim(0), h = xs[0].dim(2), w = xs[0].dim(3);
  int c = 0;
  std::vector<int> offsets;
  for (const auto& v : xs) {
    if (v.dim(0) != n || v.dim(2) != h || v.dim(3) != w)
      throw ShapeError("concat_channels: " + shape_str(v.shape()) + " vs " + shape_str(xs[0].shape()));
    offsets.push_back(c);
    c += v.dim(1);
  }
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  Tensor<T> out({n, c, h, w});
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const int ck = xs[k].dim(1);
    const T* src = xs[k].value().data();
    for (int b = 0; b < n; ++b)
      std::copy(src + static_cast<std::size_t>(b) * ck * hw, src + static_cast<std::size_t>(b + 1) * ck * hw,
                out.data() + (static_cast<std::size_t>(b) * c + offsets[k]) * hw);
  }
  std::vector<int> widths;
  for (const auto& v : xs) widths.push_back(v.dim(1));
  return xs[0].graph->record("concat_channels", xs, std::move(out),
                             [n, c, hw, offsets, widths](const Tensor<T>& g, GradSpan<T> gin) {
                               for (std::size_t k = 0; k < widths.size(); ++k) {
                                 if (!gin[k]) continue;
                                 T* dst = gin[k]->data();
                                 const std::size_t len = static_cast<std::size_t>(widths[k]) * hw;
                                 for (int b = 0; b < n; ++b) {
                                   const T* src = g.data() + (static_cast<std::size_t>(b) * c + offsets[k]) * hw;
                                   T* d = dst + b * len;
                                   for (std::size_t i = 0; i < len; ++i) d[i] += src[i];
                                 }
                               }
                             });
}

namespace {

// Normalised values and inverse std for one group of samples.
template <typename T>
struct PlaneStats {
  T mean;
  T inv_std;
};

}  // namespace

template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, NormMode mode, double momentum, double eps) {
  require_rank4(x, "batch_norm");
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  require_channels(gamma, c, "batch_norm", "gamma");
  require_channels(beta, c, "batch_norm", "beta");
  if (running_mean.numel() != static_cast<std::size_t>(c) || running_var.numel() != static_cast<std::size_t>(c))
    throw ShapeError("batch_norm: running statistics do not match " + std::to_string(c) + " channels");
  const bool train = mode == NormMode::train;
  const T* src = x.value().data();
  auto stats = std::make_shared<std::vector<PlaneStats<T>>>(static_cast<std::size_t>(c));
  const double count = static_cast<double>(n) * hw;
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    double mu, var;
    if (train) {
      double s = 0;
      for (int b = 0; b < n; ++b)
        for (int i = 0; i < hw; ++i) s += src[(static_cast<std::size_t>(b) * c + ch) * hw + i];
      mu = s / count;
      double ss = 0;
      for (int b = 0; b < n; ++b)
        for (int i = 0; i < hw; ++i) {
          const double d = src[(static_cast<std::size_t>(b) * c + ch) * hw + i] - mu;
          ss += d * d;
        }
      var = ss / count;
      running_mean[ch] = static_cast<T>((1 - momentum) * running_mean[ch] + momentum * mu);
      running_var[ch] = static_cast<T>((1 - momentum) * running_var[ch] + momentum * var);
    } else {
      mu = running_mean[ch];
      var = running_var[ch];
    }
    (*stats)[ch] = {static_cast<T>(mu), static_cast<T>(1.0 / std::sqrt(var + eps))};
  }
  Tensor<T> out(x.shape());
  const T* gm = gamma.value().data();
  const T* bt = beta.value().data();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < n * c; ++p) {
    const int ch = p % c;
    const auto st = (*stats)[ch];
    for (int i = 0; i < hw; ++i) {
      const std::size_t j = static_cast<std::size_t>(p) * hw + i;
      out[j] = (src[j] - st.mean) * st.inv_std * gm[ch] + bt[ch];
    }
  }
  const Graph<T>* gr = x.graph;
  const int ix = x.id, ig = gamma.id;
  return x.graph->record(
      "batch_norm", {x, gamma, beta}, std::move(out),
      [gr, ix, ig, stats, n, c, hw, train](const Tensor<T>& g, GradSpan<T> gin) {
        const T* xv = gr->node(ix).value.data();
        const T* gm = gr->node(ig).value.data();
        const T m = static_cast<T>(n) * hw;
#pragma omp parallel for schedule(static)
        for (int ch = 0; ch < c; ++ch) {
          const auto st = (*stats)[ch];
          T sum_g = 0, sum_gx = 0;
          for (int b = 0; b < n; ++b)
            for (int i = 0; i < hw; ++i) {
              const std::size_t j = (static_cast<std::size_t>(b) * c + ch) * hw + i;
              const T xhat = (xv[j] - st.mean) * st.inv_std;
              sum_g += g[j];
              sum_gx += g[j] * xhat;
            }
          if (gin[1]) (*gin[1])[ch] += sum_gx;
          if (gin[2]) (*gin[2])[ch] += sum_g;
          if (!gin[0]) continue;
          T* gx = gin[0]->data();
          for (int b = 0; b < n; ++b)
            for (int i = 0; i < hw; ++i) {
              const std::size_t j = (static_cast<std::size_t>(b) * c + ch) * hw + i;
              if (train) {
                const T xhat = (xv[j] - st.mean) * st.inv_std;
                gx[j] += gm[ch] * st.inv_std * (g[j] - sum_g / m - xhat * sum_gx / m);
              } else {
                gx[j] += gm[ch] * st.inv_std * g[j];
              }
            }
        }
      });
}

namespace {

template <typename T>
std::vector<PlaneStats<T>> plane_stats(const Tensor<T>& x, double eps) {
  const int planes = x.dim(0) * x.dim(1);
  const int hw = x.dim(2) * x.dim(3);
  std::vector<PlaneStats<T>> st(static_cast<std::size_t>(planes));
  const T* d = x.data();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const T* row = d + static_cast<std::size_t>(p) * hw;
    double s = 0;
    for (int i = 0; i < hw; ++i) s += row[i];
    const double mu = s / hw;
    double ss = 0;
    for (int i = 0; i < hw; ++i) ss += (row[i] - mu) * (row[i] - mu);
    st[static_cast<std::size_t>(p)] = {static_cast<T>(mu), static_cast<T>(1.0 / std::sqrt(ss / hw + eps))};
  }
  return st;
}

}  // namespace

template <typename T>
Var<T> instance_norm(Var<T> x, Var<T> gamma, Var<T> beta, double eps) {
  require_rank4(x, "instance_norm");
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (hw < 2) throw ShapeError("instance_norm: degenerate plane of " + std::to_string(hw) + " pixel(s)");
  require_channels(gamma, c, "instance_norm", "gamma");
  require_channels(beta, c, "instance_norm", "beta");
  auto stats = std::make_shared<std::vector<PlaneStats<T>>>(plane_stats(x.value(), eps));
  Tensor<T> out(x.shape());
  const T* src = x.value().data();
  const T* gm = gamma.value().data();
  const T* bt = beta.value().data();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < n * c; ++p) {
    const int ch = p % c;
    const auto st = (*stats)[p];
    for (int i = 0; i < hw; ++i) {
      const std::size_t j = static_cast<std::size_t>(p) * hw + i;
      out[j] = (src[j] - st.mean) * st.inv_std * gm[ch] + bt[ch];
    }
  }
  const Graph<T>* gr = x.graph;
  const int ix = x.id, ig = gamma.id;
  return x.graph->record(
      "instance_norm", {x, gamma, beta}, std::move(out),
      [gr, ix, ig, stats, n, c, hw](const Tensor<T>& g, GradSpan<T> gin) {
        const T* xv = gr->node(ix).value.data();
        const T* gm = gr->node(ig).value.data();
        std::vector<T> sg(static_cast<std::size_t>(n) * c), sgx(static_cast<std::size_t>(n) * c);
#pragma omp parallel for schedule(static)
        for (int p = 0; p < n * c; ++p) {
          const auto st = (*stats)[p];
          T a = 0, b = 0;
          for (int i = 0; i < hw; ++i) {
            const std::size_t j = static_cast<std::size_t>(p) * hw + i;
            a += g[j];
            b += g[j] * (xv[j] - st.mean) * st.inv_std;
          }
          sg[p] = a;
          sgx[p] = b;
          if (!gin[0]) continue;
          const int ch = p % c;
          T* gx = gin[0]->data();
          for (int i = 0; i < hw; ++i) {
            const std::size_t j = static_cast<std::size_t>(p) * hw + i;
            const T xhat = (xv[j] - st.mean) * st.inv_std;
            gx[j] += gm[ch] * st.inv_std * (g[j] - a / hw - xhat * b / hw);
          }
        }
        for (int p = 0; p < n * c; ++p) {
          if (gin[1]) (*gin[1])[p % c] += sgx[p];
          if (gin[2]) (*gin[2])[p % c] += sg[p];
        }
      });
}

template <typename T>
Var<T> adain(Var<T> content, Var<T> style, double eps) {
  require_rank4(content, "adain");
  require_rank4(style, "adain");
  const int n = content.dim(0), c = content.dim(1), hw = content.dim(2) * content.dim(3);
  const int ns = style.dim(0), hws = style.dim(2) * style.dim(3);
  if (style.dim(1) != c)
    throw ShapeError("adain: content has " + std::to_string(c) + " channels, style has " +
                     std::to_string(style.dim(1)));
  if (ns != n && ns != 1)
    throw ShapeError("adain: style batch " + std::to_string(ns) + " vs content batch " + std::to_string(n));
  if (hw < 2 || hws < 2) throw ShapeError("adain: planes need at least 2 pixels");
  auto cst = std::make_shared<std::vector<PlaneStats<T>>>(plane_stats(content.value(), eps));
  auto sst = std::make_shared<std::vector<PlaneStats<T>>>(plane_stats(style.value(), eps));
  Tensor<T> out(content.shape());
  const T* src = content.value().data();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < n * c; ++p) {
    const int sp = ns == 1 ? p % c : p;
    const auto cs = (*cst)[p];
    const auto ss = (*sst)[sp];
    const T sigma_s = T(1) / ss.inv_std;
    for (int i = 0; i < hw; ++i) {
      const std::size_t j = static_cast<std::size_t>(p) * hw + i;
      out[j] = sigma_s * (src[j] - cs.mean) * cs.inv_std + ss.mean;
    }
  }
  const Graph<T>* gr = content.graph;
  const int ic = content.id, is = style.id;
  return content.graph->record(
      "adain", {content, style}, std::move(out),
      [gr, ic, is, cst, sst, n, ns, c, hw, hws](const Tensor<T>& g, GradSpan<T> gin) {
        const T* xv = gr->node(ic).value.data();
        const T* sv = gr->node(is).value.data();
        for (int p = 0; p < n * c; ++p) {
          const int sp = ns == 1 ? p % c : p;
          const auto cs = (*cst)[p];
          const auto ss = (*sst)[sp];
          const T sigma_s = T(1) / ss.inv_std;
          T a = 0, b = 0;
          for (int i = 0; i < hw; ++i) {
            const std::size_t j = static_cast<std::size_t>(p) * hw + i;
            a += g[j];
            b += g[j] * (xv[j] - cs.mean) * cs.inv_std;
          }
          if (gin[0]) {
            T* gx = gin[0]->data();
            for (int i = 0; i < hw; ++i) {
              const std::size_t j = static_cast<std::size_t>(p) * hw + i;
              const T xhat = (xv[j] - cs.mean) * cs.inv_std;
              gx[j] += sigma_s * cs.inv_std * (g[j] - a / hw - xhat * b / hw);
            }
          }
          if (gin[1]) {
            // d mu_s = a, d sigma_s = b; sigma_s = sqrt(var_s + eps).
            T* gs = gin[1]->data();
            for (int i = 0; i < hws; ++i) {
              const std::size_t j = static_cast<std::size_t>(sp) * hws + i;
              gs[j] += a / hws + b * (sv[j] - ss.mean) * ss.inv_std / hws;
            }
          }
        }
      });
}

#define STYLEINV_INSTANTIATE(T)                                                                    \
  template Var<T> conv2d<T>(Var<T>, Var<T>, Var<T>, int, int);                                     \
  template Var<T> upsample_nearest<T>(Var<T>, int);                                                \
  template Var<T> upsample_bilinear2x<T>(Var<T>);                                                  \
  template Var<T> avg_pool<T>(Var<T>, int);                                                        \
  template Var<T> max_pool2x2<T>(Var<T>);                                                          \
  template Var<T> softmax_channels<T>(Var<T>);                                                     \
  template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                                  \
  template Var<T> batch_norm<T>(Var<T>, Var<T>, Var<T>, Tensor<T>&, Tensor<T>&, NormMode, double, \
                                double);                                                           \
  template Var<T> instance_norm<T>(Var<T>, Var<T>, Var<T>, double);                                \
  template Var<T> adain<T>(Var<T>, Var<T>, double);

STYLEINV_INSTANTIATE(float)
STYLEINV_INSTANTIATE(double)

#undef STYLEINV_INSTANTIATE

}  // namespace styleinv
