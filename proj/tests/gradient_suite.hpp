#pragma once

// One finite-difference case per differentiable operation, plus the
// composite segmentation loss through the full U-Net and the style network.
// Each case projects the op output onto a random tensor so every output
// component contributes to the scalar.

#include <functional>
#include <string>
#include <vector>

#include "styleinv/layers.hpp"
#include "styleinv/losses.hpp"
#include "styleinv/ops.hpp"
#include "styleinv/segnet.hpp"
#include "styleinv/style_transfer.hpp"
#include "styleinv/wavelet.hpp"
#include "test_util.hpp"

namespace gradsuite {

using namespace styleinv;
using TensorD = Tensor<double>;
using V = Var<double>;
using Vs = std::vector<V>;

struct Case {
  std::string name;
  std::function<double(std::uint64_t seed)> run;  // worst relative error
};

inline TensorD rnd(Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
  return testutil::random_tensor<double>(std::move(s), seed, lo, hi);
}

inline LabelMask labels(int n, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LabelMask m(n, h, w);
  for (auto& v : m.data) v = static_cast<std::uint8_t>(rng() % kNumClasses);
  return m;
}

// sum(op(inputs...) * r) with r drawn per seed.
inline Case projected(std::string name, std::vector<Shape> shapes, Shape out,
                      std::function<V(const Vs&)> op, double lo = -1, double hi = 1) {
  return {name, [=](std::uint64_t seed) {
            std::vector<TensorD> in;
            for (std::size_t i = 0; i < shapes.size(); ++i) in.push_back(rnd(shapes[i], seed * 31 + i, lo, hi));
            in.push_back(rnd(out, seed * 31 + 17));
            return testutil::gradient_check(
                [&](Graph<double>&, const Vs& v) {
                  const Vs args(v.begin(), v.end() - 1);
                  return sum(mul(op(args), v.back()));
                },
                in);
          }};
}

inline std::vector<Case> all_cases() {
  std::vector<Case> c;
  c.push_back(projected("add", {{3, 4}, {3, 4}}, {3, 4}, [](const Vs& v) { return add(v[0], v[1]); }));
  c.push_back(projected("sub", {{3, 4}, {3, 4}}, {3, 4}, [](const Vs& v) { return sub(v[0], v[1]); }));
  c.push_back(projected("mul", {{3, 4}, {3, 4}}, {3, 4}, [](const Vs& v) { return mul(v[0], v[1]); }));
  c.push_back(projected("scale", {{3, 4}}, {3, 4}, [](const Vs& v) { return scale(v[0], -1.7); }));
  c.push_back(projected("square", {{3, 4}}, {3, 4}, [](const Vs& v) { return square(v[0]); }));
  c.push_back(projected("sum", {{3, 4}}, {1}, [](const Vs& v) { return sum(v[0]); }));
  c.push_back(projected("mean", {{3, 4}}, {1}, [](const Vs& v) { return mean(v[0]); }));
  c.push_back(projected("matmul", {{3, 5}, {5, 2}}, {3, 2}, [](const Vs& v) { return matmul(v[0], v[1]); }));
  c.push_back(projected("relu", {{4, 5}}, {4, 5}, [](const Vs& v) { return relu(v[0]); }));
  c.push_back(projected("clamp", {{4, 5}}, {4, 5}, [](const Vs& v) { return clamp(v[0], -0.5, 0.5); }));
  c.push_back(projected("mse", {{3, 4}, {3, 4}}, {1}, [](const Vs& v) { return mse(v[0], v[1]); }));
  c.push_back(projected("reshape", {{2, 6}}, {3, 4}, [](const Vs& v) { return reshape(v[0], {3, 4}); }));
  c.push_back(projected("softmax_channels", {{2, 4, 3, 3}}, {2, 4, 3, 3},
                        [](const Vs& v) { return softmax_channels(v[0]); }, -3, 3));
  c.push_back(projected("max_pool2x2", {{1, 2, 4, 4}}, {1, 2, 2, 2}, [](const Vs& v) { return max_pool2x2(v[0]); }));
  c.push_back(projected("avg_pool", {{1, 2, 6, 6}}, {1, 2, 2, 2}, [](const Vs& v) { return avg_pool(v[0], 3); }));
  c.push_back(projected("upsample_nearest", {{1, 2, 3, 3}}, {1, 2, 6, 6},
                        [](const Vs& v) { return upsample_nearest(v[0], 2); }));
  c.push_back(projected("upsample_bilinear2x", {{1, 2, 3, 3}}, {1, 2, 6, 6},
                        [](const Vs& v) { return upsample_bilinear2x(v[0]); }));
  c.push_back(projected("concat_channels", {{1, 2, 3, 3}, {1, 1, 3, 3}}, {1, 3, 3, 3},
                        [](const Vs& v) { return concat_channels<double>({v[0], v[1]}); }));
  c.push_back(projected("conv2d", {{2, 3, 6, 6}, {2, 3, 3, 3}, {2}}, {2, 2, 3, 3},
                        [](const Vs& v) { return conv2d(v[0], v[1], v[2], 2, 1); }));
  c.push_back(projected("batch_norm train", {{3, 2, 3, 3}, {2}, {2}}, {3, 2, 3, 3}, [](const Vs& v) {
    TensorD rm({2}, 0.1), rv({2}, 0.8);
    return batch_norm(v[0], v[1], v[2], rm, rv, NormMode::train);
  }));
  c.push_back(projected("batch_norm eval", {{3, 2, 3, 3}, {2}, {2}}, {3, 2, 3, 3}, [](const Vs& v) {
    TensorD rm({2}, 0.1), rv({2}, 0.8);
    return batch_norm(v[0], v[1], v[2], rm, rv, NormMode::eval);
  }));
  c.push_back(projected("instance_norm", {{2, 2, 3, 3}, {2}, {2}}, {2, 2, 3, 3},
                        [](const Vs& v) { return instance_norm(v[0], v[1], v[2]); }));
  c.push_back(projected("adain", {{2, 3, 3, 3}, {2, 3, 4, 4}}, {2, 3, 3, 3},
                        [](const Vs& v) { return adain(v[0], v[1]); }));
  c.push_back(projected("adain broadcast style", {{2, 3, 3, 3}, {1, 3, 4, 4}}, {2, 3, 3, 3},
                        [](const Vs& v) { return adain(v[0], v[1]); }));
  for (int band = 0; band < 4; ++band)
    c.push_back(projected("haar_pool band " + std::to_string(band), {{1, 2, 4, 4}}, {1, 2, 2, 2},
                          [band](const Vs& v) { return haar_pool(v[0])[static_cast<std::size_t>(band)]; }));
  c.push_back(projected("haar_unpool", {{1, 2, 2, 2}, {1, 2, 2, 2}, {1, 2, 2, 2}, {1, 2, 2, 2}}, {1, 2, 4, 4},
                        [](const Vs& v) { return haar_unpool(v[0], v[1], v[2], v[3]); }));

  auto loss_case = [](std::string name, std::function<V(V, const LabelMask&)> loss) {
    return Case{name, [=](std::uint64_t seed) {
                  const LabelMask y = labels(2, 3, 3, seed + 5);
                  return testutil::gradient_check(
                      [&](Graph<double>&, const Vs& v) { return loss(softmax_channels(v[0]), y); },
                      {rnd({2, 4, 3, 3}, seed, -2, 2)});
                }};
  };
  c.push_back(loss_case("loss_ce", [](V p, const LabelMask& y) { return loss_ce(p, y); }));
  c.push_back(loss_case("loss_dice", [](V p, const LabelMask& y) { return loss_dice(p, y); }));
  c.push_back(loss_case("loss_seg", [](V p, const LabelMask& y) { return loss_seg(p, y, 0.5); }));

  c.push_back({"loss_seg through U-Net", [](std::uint64_t seed) {
                 SegConfig cfg;
                 cfg.height = cfg.width = 16;
                 cfg.base_channels = 2;
                 cfg.seed = seed;
                 ModelParams<double> params = build_unet(cfg).cast<double>();
                 // Zero shifts put the single-pixel deepest plane exactly on the ReLU kink.
                 for (auto& e : params.entries())
                   if (e.name.ends_with(".bn.beta")) e.value = rnd(e.value.shape(), seed + 99, -0.3, 0.3);
                 const LabelMask y = labels(1, 16, 16, 30 + seed);
                 const TensorD x = rnd({1, 1, 16, 16}, 40 + seed, 0, 1);
                 auto loss_of = [&](ModelParams<double>& p, Graph<double>& g, V xv) {
                   ParamScope<double> s(g, p);
                   return loss_seg(unet_forward(s, xv, cfg, NormMode::train).probs, y, 0.5);
                 };
                 const double ex = testutil::gradient_check(
                     [&](Graph<double>& g, const Vs& v) {
                       ModelParams<double> p = params;
                       return loss_of(p, g, v[0]);
                     },
                     {x});
                 const double ep = testutil::param_gradient_check(
                     params, [&](ModelParams<double>& p, Graph<double>& g) { return loss_of(p, g, g.constant(x)); },
                     seed);
                 return std::max(ex, ep);
               }});

  c.push_back({"style reconstruction loss", [](std::uint64_t seed) {
                 STConfig cfg;
                 cfg.base_channels = 2;
                 cfg.seed = seed;
                 ModelParams<double> params = build_st(cfg).cast<double>();
                 // Zero biases behind a dead channel leave ReLU inputs exactly on the kink.
                 for (auto& e : params.entries())
                   if (e.name.ends_with(".b")) e.value = rnd(e.value.shape(), seed + 70, -0.1, 0.1);
                 const TensorD x = rnd({1, 1, 8, 8}, 50 + seed, 0, 1);
                 const TensorD st = rnd({1, 1, 8, 8}, 60 + seed, 0, 1);
                 const double ep = testutil::param_gradient_check(
                     params,
                     [&](ModelParams<double>& p, Graph<double>& g) {
                       ParamScope<double> s(g, p);
                       const V xv = g.constant(x);
                       return mse(stylize_graph(s, xv, xv, cfg), xv);
                     },
                     seed);
                 const double ex = testutil::gradient_check(
                     [&](Graph<double>& g, const Vs& v) {
                       ModelParams<double> p = params;
                       ParamScope<double> s(g, p);
                       return mse(stylize_graph(s, v[0], v[1], cfg), g.constant(x));
                     },
                     {x, st});
                 return std::max(ep, ex);
               }});
  return c;
}

}  // namespace gradsuite
