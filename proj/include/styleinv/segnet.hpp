#pragma once

// Modified U-Net segmenter: four 2x downsampling stages (output stride 16),
// upsampling instead of transposed convolution, batch norm after every 3x3
// convolution, concatenating skips and a 1x1 four-class softmax head.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "styleinv/augment.hpp"
#include "styleinv/layers.hpp"
#include "styleinv/losses.hpp"
#include "styleinv/params.hpp"
#include "styleinv/phantom.hpp"

namespace styleinv {

enum class UpsampleMode { nearest, bilinear };

struct SegConfig {
  int height = 64;
  int width = 64;
  int base_channels = 16;
  int num_classes = kNumClasses;
  double lambda_dice = kDefaultDiceWeight;
  double lr_initial = 1e-3;
  double lr_final = 1e-5;
  double lr_drop_at = 0.8;  // fraction of iterations after which lr_final applies
  int iterations = 2000;
  int batch_size = 8;
  std::uint64_t seed = 0;
  bool style_unified = false;  // disables contrast/brightness augmentation
  UpsampleMode upsample = UpsampleMode::nearest;
  AugmentOptions augment;

  void validate() const;
};

inline constexpr int kUNetDepth = 4;

/// He-normal initialised parameters (deterministic in cfg.seed).
ModelParams<float> build_unet(const SegConfig& cfg);

template <typename T>
struct UNetOutputs {
  Var<T> logits;
  Var<T> probs;
  Var<T> deepest;  // bottleneck features, spatial extent (H/16, W/16)
};

template <typename T>
UNetOutputs<T> unet_forward(ParamScope<T>& scope, Var<T> images, const SegConfig& cfg, NormMode mode);

struct TrainLogEntry {
  int iteration = 0;
  double loss = 0;
  double lr = 0;
  std::vector<std::string> augmentations;  // union over the batch, first-seen order
};

struct SegTrainResult {
  ModelParams<float> params;
  std::vector<TrainLogEntry> log;
};

/// Learning rate in effect at a given iteration.
double seg_learning_rate(const SegConfig& cfg, int iteration);

/// Adam training on (augmented) random batches. Throws NumericError on a
/// non-finite loss.
SegTrainResult train_seg(const Dataset& data, const SegConfig& cfg,
                         const std::function<void(const TrainLogEntry&)>& progress = {});

struct Segmentation {
  TensorF probs;     // (N, 4, H, W)
  LabelMask labels;  // argmax, ties to the lowest class index
};

/// Eval-mode inference on a (N, 1, H, W) batch.
Segmentation segment(const ModelParams<float>& params, const TensorF& images, const SegConfig& cfg);

/// Channel argmax with ties broken toward the lowest index.
LabelMask argmax_labels(const TensorF& probs);

/// Stacks single-slice images (1,1,H,W) into one batch.
TensorF stack_images(const std::vector<const TensorF*>& images);
LabelMask stack_masks(const std::vector<const LabelMask*>& masks);

}  // namespace styleinv
