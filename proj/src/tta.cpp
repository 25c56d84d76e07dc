#include "styleinv/tta.hpp"

#include <algorithm>
#include <sstream>

namespace styleinv {

GeoTransform inverse(GeoTransform t) {
  switch (t) {
    case GeoTransform::rot90: return GeoTransform::rot270;
    case GeoTransform::rot270: return GeoTransform::rot90;
    default: return t;
  }
}

std::string transform_name(GeoTransform t) {
  switch (t) {
    case GeoTransform::identity: return "identity";
    case GeoTransform::hflip: return "hflip";
    case GeoTransform::vflip: return "vflip";
    case GeoTransform::rot90: return "rot90";
    case GeoTransform::rot180: return "rot180";
    case GeoTransform::rot270: return "rot270";
  }
  return "?";
}

GeoTransform transform_from_string(const std::string& name) {
  for (auto t : {GeoTransform::identity, GeoTransform::hflip, GeoTransform::vflip, GeoTransform::rot90,
                 GeoTransform::rot180, GeoTransform::rot270})
    if (transform_name(t) == name) return t;
  throw Error("unknown transform '" + name + "'");
}

std::vector<GeoTransform> parse_transforms(const std::string& list) {
  std::vector<GeoTransform> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(transform_from_string(item));
  if (out.empty()) throw Error("empty transform list");
  return out;
}

std::vector<GeoTransform> default_transforms() {
  return {GeoTransform::identity, GeoTransform::hflip, GeoTransform::vflip, GeoTransform::rot90};
}

namespace {

// Source coordinate in the input plane for output pixel (y, x).
inline void source_of(GeoTransform t, int n, int w, int y, int x, int& sy, int& sx) {
  switch (t) {
    case GeoTransform::identity: sy = y; sx = x; break;
    case GeoTransform::hflip: sy = y; sx = w - 1 - x; break;
    case GeoTransform::vflip: sy = n - 1 - y; sx = x; break;
    case GeoTransform::rot90: sy = x; sx = w - 1 - y; break;
    case GeoTransform::rot180: sy = n - 1 - y; sx = w - 1 - x; break;
    case GeoTransform::rot270: sy = n - 1 - x; sx = y; break;
  }
}

bool is_rotation(GeoTransform t) { return t == GeoTransform::rot90 || t == GeoTransform::rot270; }

template <typename V>
void permute_planes(const V* src, V* dst, std::size_t planes, int h, int w, GeoTransform t) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (std::size_t p = 0; p < planes; ++p)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int sy = y, sx = x;
        source_of(t, h, w, y, x, sy, sx);
        dst[p * hw + static_cast<std::size_t>(y) * w + x] = src[p * hw + static_cast<std::size_t>(sy) * w + sx];
      }
}

}  // namespace

template <typename T>
Tensor<T> apply_transform(const Tensor<T>& x, GeoTransform t) {
  if (x.rank() < 2) throw ShapeError("apply_transform: rank must be at least 2");
  const int h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  if (is_rotation(t) && h != w)
    throw ShapeError("apply_transform: " + transform_name(t) + " needs square planes, got " + shape_str(x.shape()));
  Tensor<T> out(x.shape());
  permute_planes(x.data(), out.data(), x.numel() / (static_cast<std::size_t>(h) * w), h, w, t);
  return out;
}

LabelMask apply_transform(const LabelMask& m, GeoTransform t) {
  if (is_rotation(t) && m.h != m.w) throw ShapeError("apply_transform: rotation needs square masks");
  LabelMask out(m.n, m.h, m.w);
  permute_planes(m.data.data(), out.data.data(), static_cast<std::size_t>(m.n), m.h, m.w, t);
  return out;
}

LabelMask majority_vote(const VoteStack& s) {
  if (s.runs < 1 || s.votes.empty()) throw Error("majority_vote: empty vote stack");
  if (s.votes.size() != static_cast<std::size_t>(s.runs) * kNumClasses * s.h * s.w)
    throw ShapeError("majority_vote: vote storage does not match extents");
  if (!s.probs.empty() && s.probs.size() != s.votes.size())
    throw ShapeError("majority_vote: probability storage does not match votes");
  LabelMask out(1, s.h, s.w);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      int best = 0, best_votes = 0;
      double best_prob = -1;
      for (int c = 1; c < kNumClasses; ++c) {
        int v = 0;
        double p = 0;
        for (int r = 0; r < s.runs; ++r) {
          v += s.votes[s.index(r, c, y, x)];
          if (!s.probs.empty()) p += s.probs[s.index(r, c, y, x)];
        }
        if (v < 2) continue;
        p /= s.runs;
        if (v > best_votes || (v == best_votes && p > best_prob)) {
          best = c;
          best_votes = v;
          best_prob = p;
        }
      }
      out.at(0, y, x) = static_cast<std::uint8_t>(best);
    }
  return out;
}

LabelMask tta_predict(const TensorF& images, const Predictor& predict, const std::vector<GeoTransform>& transforms) {
  if (std::find(transforms.begin(), transforms.end(), GeoTransform::identity) == transforms.end())
    throw Error("tta_predict: transform list must include identity");
  if (transforms.size() == 1) return predict(images).labels;
  const int n = images.dim(0), h = images.dim(2), w = images.dim(3);
  const int runs = static_cast<int>(transforms.size());
  std::vector<VoteStack> stacks(static_cast<std::size_t>(n), VoteStack(runs, h, w));
  for (auto& st : stacks) st.probs.assign(st.votes.size(), 0.f);
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int r = 0; r < runs; ++r) {
    const GeoTransform t = transforms[static_cast<std::size_t>(r)];
    const Segmentation seg = predict(apply_transform(images, t));
    const TensorF probs = apply_transform(seg.probs, inverse(t));
    const LabelMask labels = apply_transform(seg.labels, inverse(t));
    for (int b = 0; b < n; ++b) {
      VoteStack& st = stacks[static_cast<std::size_t>(b)];
      for (int c = 0; c < kNumClasses; ++c)
        for (std::size_t i = 0; i < hw; ++i) {
          const std::size_t dst = st.index(r, c, 0, 0) + i;
          st.votes[dst] = labels.data[b * hw + i] == c ? 1 : 0;
          st.probs[dst] = probs[(static_cast<std::size_t>(b) * kNumClasses + c) * hw + i];
        }
    }
  }
  LabelMask out(n, h, w);
  for (int b = 0; b < n; ++b) {
    const LabelMask m = majority_vote(stacks[static_cast<std::size_t>(b)]);
    std::copy(m.data.begin(), m.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(b * hw));
  }
  return out;
}

LabelMask tta_predict(const TensorF& images, const ModelParams<float>& seg, const SegConfig& cfg,
                      const std::vector<GeoTransform>& transforms) {
  return tta_predict(
      images, [&](const TensorF& x) { return segment(seg, x, cfg); }, transforms);
}

template Tensor<float> apply_transform<float>(const Tensor<float>&, GeoTransform);
template Tensor<double> apply_transform<double>(const Tensor<double>&, GeoTransform);

}  // namespace styleinv
