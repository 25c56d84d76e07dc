#include "styleinv/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "styleinv/ops.hpp"

namespace styleinv {

namespace {

template <typename T>
void check_pair(const Var<T>& p, const LabelMask& y, const char* kind) {
  const auto& s = p.shape();
  if (s.size() != 4 || s[1] != kNumClasses || s[0] != y.n || s[2] != y.h || s[3] != y.w)
    throw ShapeError(std::string(kind) + ": probabilities " + shape_str(s) + " vs labels [" +
                     std::to_string(y.n) + "," + std::to_string(y.h) + "," + std::to_string(y.w) + "]");
}

}  // namespace

template <typename T>
Var<T> loss_ce(Var<T> probs, const LabelMask& labels) {
  check_pair(probs, labels, "loss_ce");
  const std::size_t hw = labels.plane();
  const T* p = probs.value().data();
  const T clampv = static_cast<T>(kLogClamp);
  double total = 0;
  for (int b = 0; b < labels.n; ++b)
    for (std::size_t i = 0; i < hw; ++i) {
      const int c = labels.data[b * hw + i];
      const T v = p[(static_cast<std::size_t>(b) * kNumClasses + c) * hw + i];
      total -= std::log(static_cast<double>(std::max(v, clampv)));
    }
  const double count = static_cast<double>(labels.n) * hw;
  const Graph<T>* gr = probs.graph;
  const int ip = probs.id;
  return probs.graph->record(
      "loss_ce", {probs}, Tensor<T>::scalar(static_cast<T>(total / count)),
      [gr, ip, labels, hw, count, clampv](const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
        const T* p = gr->node(ip).value.data();
        T* gp = gin[0]->data();
        const T scale = static_cast<T>(g[0] / count);
        for (int b = 0; b < labels.n; ++b)
          for (std::size_t i = 0; i < hw; ++i) {
            const std::size_t j = (static_cast<std::size_t>(b) * kNumClasses + labels.data[b * hw + i]) * hw + i;
            if (p[j] >= clampv) gp[j] -= scale / p[j];
          }
      });
}

template <typename T>
Var<T> loss_dice(Var<T> probs, const LabelMask& labels) {
  check_pair(probs, labels, "loss_dice");
  const std::size_t hw = labels.plane();
  const T* p = probs.value().data();
  std::array<double, kNumClasses> inter{}, psum{}, ysum{};
  for (int b = 0; b < labels.n; ++b)
    for (int c = 0; c < kNumClasses; ++c)
      for (std::size_t i = 0; i < hw; ++i) {
        const double pv = p[(static_cast<std::size_t>(b) * kNumClasses + c) * hw + i];
        const bool y = labels.data[b * hw + i] == c;
        psum[c] += pv;
        if (y) {
          inter[c] += pv;
          ysum[c] += 1;
        }
      }
  double total = 0;
  std::array<double, kNumClasses> num{}, den{};
  for (int c = 0; c < kNumClasses; ++c) {
    num[c] = 2 * inter[c] + kDiceSmooth;
    den[c] = psum[c] + ysum[c] + kDiceSmooth;
    total += 1 - num[c] / den[c];
  }
  return probs.graph->record(
      "loss_dice", {probs}, Tensor<T>::scalar(static_cast<T>(total)),
      [labels, hw, num, den](const Tensor<T>& g, std::span<Tensor<T>* const> gin) {
        T* gp = gin[0]->data();
        for (int b = 0; b < labels.n; ++b)
          for (int c = 0; c < kNumClasses; ++c) {
            const double base = num[c] / (den[c] * den[c]);
            const double hit = base - 2.0 / den[c];
            for (std::size_t i = 0; i < hw; ++i) {
              const bool y = labels.data[b * hw + i] == c;
              gp[(static_cast<std::size_t>(b) * kNumClasses + c) * hw + i] += static_cast<T>(g[0] * (y ? hit : base));
            }
          }
      });
}

template <typename T>
Var<T> loss_seg(Var<T> probs, const LabelMask& labels, double lambda) {
  if (lambda < 0) throw Error("loss_seg: lambda must be non-negative");
  Var<T> ce = loss_ce(probs, labels);
  if (lambda == 0) return ce;
  return add(ce, scale(loss_dice(probs, labels), static_cast<T>(lambda)));
}

#define STYLEINV_INSTANTIATE(T)                                 \
  template Var<T> loss_ce<T>(Var<T>, const LabelMask&);         \
  template Var<T> loss_dice<T>(Var<T>, const LabelMask&);       \
  template Var<T> loss_seg<T>(Var<T>, const LabelMask&, double);

STYLEINV_INSTANTIATE(float)
STYLEINV_INSTANTIATE(double)

#undef STYLEINV_INSTANTIATE

}  // namespace styleinv
