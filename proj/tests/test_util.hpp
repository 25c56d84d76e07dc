#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "styleinv/graph.hpp"
#include "styleinv/params.hpp"

namespace testutil {

using styleinv::Graph;
using styleinv::Tensor;
using styleinv::Var;

template <typename T>
Tensor<T> random_tensor(styleinv::Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<T> t(std::move(s));
  for (auto& v : t.span()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  a.same_shape(b, "max_abs_diff");
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

// Builds a scalar loss from leaf variables bound to `inputs`.
using LossFn = std::function<Var<double>(Graph<double>&, const std::vector<Var<double>>&)>;

/// Norm-wise relative error ||analytic - numeric|| / max(||analytic||, ||numeric||)
/// between reverse-mode gradients and central differences, worst over inputs.
/// Gradients with norm below 1e-6 (e.g. a bias cancelled by a following
/// normalisation) are compared against that floor instead.
inline double gradient_check(const LossFn& fn, const std::vector<Tensor<double>>& inputs,
                             double step = 1e-5) {
  std::vector<Tensor<double>> analytic;
  {
    Graph<double> g;
    std::vector<Var<double>> vars;
    for (const auto& t : inputs) vars.push_back(g.leaf(t));
    Var<double> loss = fn(g, vars);
    auto grads = styleinv::backward(g, loss);
    for (const auto& v : vars) analytic.push_back(grads.at(v));
  }
  auto eval = [&](const std::vector<Tensor<double>>& in) {
    Graph<double> g(false);
    std::vector<Var<double>> vars;
    for (const auto& t : in) vars.push_back(g.constant(t));
    return fn(g, vars).value().item();
  };
  double worst = 0;
  std::vector<Tensor<double>> work = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    double diff2 = 0, an2 = 0, nu2 = 0;
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      const double orig = work[k][i];
      work[k][i] = orig + step;
      const double fp = eval(work);
      work[k][i] = orig - step;
      const double fm = eval(work);
      work[k][i] = orig;
      const double num = (fp - fm) / (2 * step);
      const double an = analytic[k][i];
      diff2 += (an - num) * (an - num);
      an2 += an * an;
      nu2 += num * num;
    }
    const double denom = std::max(std::sqrt(std::max(an2, nu2)), 1e-6);
    worst = std::max(worst, std::sqrt(diff2) / denom);
  }
  return worst;
}

using ParamLossFn = std::function<Var<double>(styleinv::ModelParams<double>&, Graph<double>&)>;

/// Same norm-wise error as gradient_check, over `samples` random coordinates
/// of every trainable parameter.
inline double param_gradient_check(const styleinv::ModelParams<double>& params, const ParamLossFn& fn,
                                   std::uint64_t seed, int samples = 3, double step = 1e-5) {
  styleinv::GradMap<double> analytic;
  {
    styleinv::ModelParams<double> p = params;
    Graph<double> g;
    analytic = styleinv::param_grads(styleinv::backward(g, fn(p, g)));
  }
  auto eval = [&](styleinv::ModelParams<double>& p) {
    Graph<double> g(false);
    return fn(p, g).value().item();
  };
  std::mt19937_64 rng(seed);
  double diff2 = 0, an2 = 0, nu2 = 0;
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    const auto it = analytic.find(e.name);
    if (it == analytic.end() || it->second.shape() != e.value.shape()) return INFINITY;
    for (int k = 0; k < samples; ++k) {
      const std::size_t i = rng() % e.value.numel();
      styleinv::ModelParams<double> p = params;
      p.get(e.name)[i] += step;
      const double fp = eval(p);
      p.get(e.name)[i] -= 2 * step;
      const double fm = eval(p);
      const double num = (fp - fm) / (2 * step), an = it->second[i];
      diff2 += (an - num) * (an - num);
      an2 += an * an;
      nu2 += num * num;
    }
  }
  return std::sqrt(diff2) / std::max(std::sqrt(std::max(an2, nu2)), 1e-6);
}

}  // namespace testutil
