#pragma once

#include <random>
#include <string>
#include <vector>

#include "styleinv/labels.hpp"
#include "styleinv/tensor.hpp"

namespace styleinv {

struct AugmentOptions {
  double probability = 0.5;       // per transform
  double expand_min_scale = 0.8;  // zoom-out factor range [min, 1)
  double rotation_jitter_deg = 15.0;
  double contrast_range = 0.15;   // factor in [1 - r, 1 + r]
  double brightness_range = 0.06; // offset in [-r, r]
  bool photometric = true;        // contrast/brightness; off for style-unified data
};

/// Applies the training-time transform set (expand, flip, rotation, mirror,
/// contrast, brightness) to one (1,1,H,W) image and its mask. Returns the
/// names of the transforms applied, in order.
std::vector<std::string> augment_sample(TensorF& image, LabelMask& mask, std::mt19937_64& rng,
                                        const AugmentOptions& opts);

}  // namespace styleinv
