#pragma once

// Zero-shot wavelet style transfer network.
//
// Encoder stage l: two 3x3 conv + ReLU, AdaIN of the content features to the
// style features, Haar pooling. The low band feeds the next stage, the three
// detail bands are kept as skips. Fusion: every stage's low band is average
// pooled to the deepest scale, concatenated and mixed by a 1x1 conv + ReLU,
// then restyled by a final AdaIN. Decoder stage l: 3x3 conv, instance norm,
// ReLU, Haar unpooling with the content skips of stage l, 3x3 conv + ReLU.
// A 3x3 conv maps back to one channel.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "styleinv/layers.hpp"
#include "styleinv/params.hpp"
#include "styleinv/phantom.hpp"
#include "styleinv/wavelet.hpp"

namespace styleinv {

struct STConfig {
  int levels = 2;
  int base_channels = 16;
  int iterations = 600;
  int batch_size = 4;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  bool decoder_instance_norm = true;
  void validate() const;
};

/// Initial parameters (He-normal weights, zero biases, unit IN scale).
ModelParams<float> build_st(const STConfig& cfg);

template <typename T>
struct Encoded {
  Var<T> deep;                               // fused, deepest scale
  std::vector<Var<T>> stage_lows;            // LL of each stage
  std::vector<std::array<Var<T>, 3>> skips;  // (LH, HL, HH) of each stage
};

/// Encoder without restyling.
template <typename T>
Encoded<T> encode(ParamScope<T>& scope, Var<T> x, const STConfig& cfg);

/// Average-pools each stage to the deepest scale, concatenates, 1x1 conv + ReLU.
template <typename T>
Var<T> fuse_multiscale(ParamScope<T>& scope, const std::vector<Var<T>>& stage_features, const STConfig& cfg);

/// Unclamped stylisation graph. Passing the same Var as content and style
/// gives the self-styling (reconstruction) path.
template <typename T>
Var<T> stylize_graph(ParamScope<T>& scope, Var<T> content, Var<T> style, const STConfig& cfg);

/// Inference: (N,1,H,W) content, (N or 1,1,H,W) style, output clamped to [0,1].
TensorF stylize(const ModelParams<float>& params, const TensorF& content, const TensorF& style, const STConfig& cfg);

struct STTrainResult {
  ModelParams<float> params;
  std::vector<double> losses;  // per iteration MSE
};

/// Fits self-styling reconstruction by Adam on random batches.
STTrainResult finetune_reconstruction(const Dataset& data, ModelParams<float> params, const STConfig& cfg,
                                      const std::function<void(int, double)>& progress = {});

double psnr(const TensorF& a, const TensorF& b, double peak = 1.0);

// --- style selection -------------------------------------------------------

struct StyleDescriptor {
  double mean = 0;
  double std = 0;
  std::string source_id;
};

struct StyleEntry {
  TensorF image;  // (1,1,H,W)
  StyleDescriptor desc;
};

using StyleLibrary = std::vector<StyleEntry>;

StyleDescriptor describe(const TensorF& image, const std::string& source_id);

/// Library entry nearest in (mean, std); ties go to the lowest source id.
const StyleEntry& select_style(const TensorF& test_image, const StyleLibrary& lib);

/// Ranks the cases of `images` by mean structure Dice of `predictions` (one per
/// slice) against the slice masks, and keeps every slice of the best top_k cases.
StyleLibrary build_style_library(const Dataset& images, const std::vector<LabelMask>& predictions, int top_k);

/// Case ids ordered by decreasing baseline Dice (stable in first appearance).
std::vector<std::pair<std::string, double>> rank_cases_by_dice(const Dataset& images,
                                                               const std::vector<LabelMask>& predictions);

/// Writes `<dir>/<source_id>.pgm` and a manifest of lines
/// `source_id  mean  std  path` (path relative to the manifest).
void save_style_library(const std::filesystem::path& dir, const StyleLibrary& lib,
                        const std::string& manifest_name = "library.tsv");
StyleLibrary load_style_library(const std::filesystem::path& manifest);

/// Every slice restyled to one style slice; labels and ids unchanged.
Dataset stylize_dataset(const Dataset& data, const TensorF& style_slice, const ModelParams<float>& params,
                        const STConfig& cfg);

}  // namespace styleinv
