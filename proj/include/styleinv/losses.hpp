#pragma once

#include "styleinv/graph.hpp"
#include "styleinv/labels.hpp"

namespace styleinv {

inline constexpr double kLogClamp = 1e-7;
inline constexpr double kDiceSmooth = 1e-5;
inline constexpr double kDefaultDiceWeight = 0.5;

/// Mean over batch and pixels of -log(max(p_true, 1e-7)).
template <typename T>
Var<T> loss_ce(Var<T> probs, const LabelMask& labels);

/// Sum over classes of 1 - (2 sum p y + s) / (sum p + sum y + s), sums taken
/// over the whole batch, s = 1e-5.
template <typename T>
Var<T> loss_dice(Var<T> probs, const LabelMask& labels);

/// loss_ce + lambda * loss_dice
template <typename T>
Var<T> loss_seg(Var<T> probs, const LabelMask& labels, double lambda = kDefaultDiceWeight);

}  // namespace styleinv
