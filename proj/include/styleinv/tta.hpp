#pragma once

// Test-time augmentation: transform, predict, invert, merge by majority vote.

#include <functional>
#include <string>
#include <vector>

#include "styleinv/segnet.hpp"

namespace styleinv {

enum class GeoTransform { identity, hflip, vflip, rot90, rot180, rot270 };

GeoTransform inverse(GeoTransform t);
std::string transform_name(GeoTransform t);
GeoTransform transform_from_string(const std::string& name);
/// Comma separated names, e.g. "identity,hflip,vflip,rot90".
std::vector<GeoTransform> parse_transforms(const std::string& list);
/// identity, hflip, vflip, rot90.
std::vector<GeoTransform> default_transforms();

/// Exact index permutation over the last two axes. Rotations are
/// counter-clockwise and require square planes.
template <typename T>
Tensor<T> apply_transform(const Tensor<T>& x, GeoTransform t);
LabelMask apply_transform(const LabelMask& m, GeoTransform t);

/// Per-class hard votes of T runs for one slice, (T, 4, H, W), plus the
/// matching class probabilities used for tie-breaking.
struct VoteStack {
  int runs = 0;
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> votes;
  std::vector<float> probs;  // empty: probability ties fall through to the class index

  VoteStack() = default;
  VoteStack(int runs_, int h_, int w_)
      : runs(runs_), h(h_), w(w_), votes(static_cast<std::size_t>(runs_) * kNumClasses * h_ * w_, 0) {}
  std::size_t index(int run, int cls, int y, int x) const {
    return ((static_cast<std::size_t>(run) * kNumClasses + cls) * h + y) * w + x;
  }
};

/// Class c in {1,2,3} is a candidate where at least two runs voted for it.
/// No candidate: background. Several: most votes, then highest mean
/// probability, then lowest class index.
LabelMask majority_vote(const VoteStack& stack);

/// Maps a (N,1,H,W) batch to its segmentation.
using Predictor = std::function<Segmentation(const TensorF&)>;

/// Runs the predictor on every transformed copy of the batch, maps the
/// predictions back and merges them per slice. `transforms` must contain
/// identity. A single transform returns the plain prediction.
LabelMask tta_predict(const TensorF& images, const Predictor& predict, const std::vector<GeoTransform>& transforms);

LabelMask tta_predict(const TensorF& images, const ModelParams<float>& seg, const SegConfig& cfg,
                      const std::vector<GeoTransform>& transforms);

}  // namespace styleinv
