#include "styleinv/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "styleinv/phantom.hpp"

namespace styleinv {

namespace {

void flip_rows(TensorF& img, LabelMask& m) {
  const int h = m.h, w = m.w;
  for (int y = 0; y < h / 2; ++y)
    for (int x = 0; x < w; ++x) {
      std::swap(img[static_cast<std::size_t>(y) * w + x], img[static_cast<std::size_t>(h - 1 - y) * w + x]);
      std::swap(m.at(0, y, x), m.at(0, h - 1 - y, x));
    }
}

void flip_cols(TensorF& img, LabelMask& m) {
  const int h = m.h, w = m.w;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w / 2; ++x) {
      std::swap(img[static_cast<std::size_t>(y) * w + x], img[static_cast<std::size_t>(y) * w + w - 1 - x]);
      std::swap(m.at(0, y, x), m.at(0, y, w - 1 - x));
    }
}

// Rotation about the image centre; bilinear for the image, nearest for labels, zero fill.
void rotate(TensorF& img, LabelMask& m, double radians) {
  const int h = m.h, w = m.w;
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  const double c = std::cos(radians), s = std::sin(radians);
  TensorF out({1, 1, h, w});
  LabelMask om(1, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      // Inverse map: output pixel -> source location.
      const double sy = c * (y - cy) - s * (x - cx) + cy;
      const double sx = s * (y - cy) + c * (x - cx) + cx;
      const int ny = static_cast<int>(std::lround(sy)), nx = static_cast<int>(std::lround(sx));
      if (ny >= 0 && ny < h && nx >= 0 && nx < w) om.at(0, y, x) = m.at(0, ny, nx);
      const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      const double ay = sy - y0, ax = sx - x0;
      double acc = 0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const int yy = y0 + dy, xx = x0 + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          acc += (dy ? ay : 1 - ay) * (dx ? ax : 1 - ax) * img[static_cast<std::size_t>(yy) * w + xx];
        }
      out[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc);
    }
  img = std::move(out);
  m = std::move(om);
}

// Zoom out: shrink by `scale` and place at a random offset on a zero canvas.
void expand(TensorF& img, LabelMask& m, double scale, std::mt19937_64& rng) {
  const int h = m.h, w = m.w;
  const int sh = std::max(1, static_cast<int>(std::lround(h * scale)));
  const int sw = std::max(1, static_cast<int>(std::lround(w * scale)));
  TensorF small = resize_to(img, sh, sw);
  LabelMask smask = resize_mask(m, sh, sw);
  const int oy = std::uniform_int_distribution<int>(0, h - sh)(rng);
  const int ox = std::uniform_int_distribution<int>(0, w - sw)(rng);
  TensorF out({1, 1, h, w});
  LabelMask om(1, h, w);
  for (int y = 0; y < sh; ++y)
    for (int x = 0; x < sw; ++x) {
      out[static_cast<std::size_t>(y + oy) * w + x + ox] = small[static_cast<std::size_t>(y) * sw + x];
      om.at(0, y + oy, x + ox) = smask.at(0, y, x);
    }
  img = std::move(out);
  m = std::move(om);
}

}  // namespace

std::vector<std::string> augment_sample(TensorF& image, LabelMask& mask, std::mt19937_64& rng,
                                        const AugmentOptions& o) {
  std::vector<std::string> applied;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto coin = [&] { return unit(rng) < o.probability; };

  if (coin()) {
    expand(image, mask, o.expand_min_scale + (1 - o.expand_min_scale) * unit(rng), rng);
    applied.emplace_back("expand");
  }
  if (coin()) {
    flip_rows(image, mask);
    applied.emplace_back("flip");
  }
  if (coin()) {
    const int quarter = std::uniform_int_distribution<int>(0, 3)(rng);
    const double jitter = (2 * unit(rng) - 1) * o.rotation_jitter_deg;
    rotate(image, mask, (quarter * 90.0 + jitter) * std::numbers::pi / 180.0);
    applied.emplace_back("rotation");
  }
  if (coin()) {
    flip_cols(image, mask);
    applied.emplace_back("mirror");
  }
  if (o.photometric) {
    if (coin()) {
      const double f = 1 + (2 * unit(rng) - 1) * o.contrast_range;
      double mu = 0;
      for (float v : image.span()) mu += v;
      mu /= static_cast<double>(image.numel());
      for (auto& v : image.span()) v = static_cast<float>(std::clamp((v - mu) * f + mu, 0.0, 1.0));
      applied.emplace_back("contrast");
    }
    if (coin()) {
      const double b = (2 * unit(rng) - 1) * o.brightness_range;
      for (auto& v : image.span()) v = static_cast<float>(std::clamp(v + b, 0.0, 1.0));
      applied.emplace_back("brightness");
    }
  }
  return applied;
}

}  // namespace styleinv
