#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "styleinv/tensor.hpp"

namespace styleinv {

inline constexpr int kNumClasses = 4;

enum class Structure : std::uint8_t { background = 0, lv = 1, myo = 2, rv = 3 };

inline const char* structure_name(int cls) {
  static const char* names[kNumClasses] = {"BG", "LV", "MYO", "RV"};
  return (cls >= 0 && cls < kNumClasses) ? names[cls] : "?";
}

/// (N, H, W) class map with values in {0=background, 1=LV, 2=MYO, 3=RV}.
struct LabelMask {
  int n = 0, h = 0, w = 0;
  std::vector<std::uint8_t> data;

  LabelMask() = default;
  LabelMask(int n_, int h_, int w_, std::uint8_t fill = 0)
      : n(n_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * h_ * w_, fill) {}

  std::uint8_t& at(int b, int y, int x) { return data[(static_cast<std::size_t>(b) * h + y) * w + x]; }
  std::uint8_t at(int b, int y, int x) const { return data[(static_cast<std::size_t>(b) * h + y) * w + x]; }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }

  /// Slice b as a single-sample mask.
  LabelMask slice(int b) const {
    LabelMask m(1, h, w);
    std::copy(data.begin() + static_cast<std::ptrdiff_t>(b * plane()),
              data.begin() + static_cast<std::ptrdiff_t>((b + 1) * plane()), m.data.begin());
    return m;
  }

  void validate() const {
    if (data.size() != static_cast<std::size_t>(n) * h * w)
      throw ShapeError("label mask: storage does not match extents");
    for (auto v : data)
      if (v >= kNumClasses) throw FormatError("label mask: value " + std::to_string(v) + " outside {0,1,2,3}");
  }

  /// One-hot (N, 4, H, W) view.
  template <typename T>
  Tensor<T> one_hot() const {
    Tensor<T> t({n, kNumClasses, h, w});
    for (int b = 0; b < n; ++b)
      for (std::size_t i = 0; i < plane(); ++i)
        t[(static_cast<std::size_t>(b) * kNumClasses + data[b * plane() + i]) * plane() + i] = T(1);
    return t;
  }

  bool operator==(const LabelMask&) const = default;
};

}  // namespace styleinv
