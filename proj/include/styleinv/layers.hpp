#pragma once

#include <array>
#include <vector>

#include "styleinv/graph.hpp"

namespace styleinv {

inline constexpr double kNormEps = 1e-5;

enum class NormMode { train, eval };

/// NCHW convolution with OIHW weights and optional bias (pass bias.id < 0 to omit).
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, int stride = 1, int pad = 0);

template <typename T> Var<T> upsample_nearest(Var<T> x, int factor);
/// 2x bilinear upsampling with half-pixel centres and clamped edges.
template <typename T> Var<T> upsample_bilinear2x(Var<T> x);
/// Mean over non-overlapping factor x factor blocks.
template <typename T> Var<T> avg_pool(Var<T> x, int factor);
template <typename T> Var<T> max_pool2x2(Var<T> x);
template <typename T> Var<T> softmax_channels(Var<T> x);
template <typename T> Var<T> concat_channels(const std::vector<Var<T>>& xs);

/// Batch normalisation. In train mode the batch statistics (population variance)
/// are used and running_mean / running_var are updated in place:
/// running = (1 - momentum) * running + momentum * batch.
template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, NormMode mode, double momentum = 0.1,
                  double eps = kNormEps);

/// Per (sample, channel) plane normalisation followed by a per-channel affine.
template <typename T>
Var<T> instance_norm(Var<T> x, Var<T> gamma, Var<T> beta, double eps = kNormEps);

/// sigma_style * (x - mu_content) / sigma_content + mu_style, per (sample, channel),
/// population statistics with eps inside the square root.
template <typename T>
Var<T> adain(Var<T> content, Var<T> style, double eps = kNormEps);

}  // namespace styleinv
