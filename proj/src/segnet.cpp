#include "styleinv/segnet.hpp"

#include "styleinv/ops.hpp"

#include <cmath>
#include <algorithm>
#include <random>

namespace styleinv {

void SegConfig::validate() const {
  if (num_classes != kNumClasses) throw Error("seg config: num_classes must be 4");
  if (height <= 0 || width <= 0 || height % 16 != 0 || width % 16 != 0)
    throw ShapeError("seg config: input size " + std::to_string(height) + "x" + std::to_string(width) +
                     " must be a positive multiple of 16");
  if (base_channels < 1) throw Error("seg config: base_channels must be >= 1");
  if (lambda_dice < 0) throw Error("seg config: lambda_dice must be non-negative");
  if (!(lr_initial > 0) || !(lr_final > 0)) throw Error("seg config: learning rates must be positive");
  if (iterations < 0 || batch_size < 1) throw Error("seg config: invalid iterations or batch size");
}

namespace {

int stage_channels(const SegConfig& cfg, int level) { return cfg.base_channels << level; }

void add_conv_bn(ModelParams<float>& p, const std::string& name, int cin, int cout, std::mt19937_64& rng) {
  p.add(name + ".w", he_normal<float>({cout, cin, 3, 3}, cin * 9, rng));
  p.add(name + ".bn.gamma", TensorF({cout}, 1.f));
  p.add(name + ".bn.beta", TensorF({cout}, 0.f));
  p.add(name + ".bn.running_mean", TensorF({cout}, 0.f), false);
  p.add(name + ".bn.running_var", TensorF({cout}, 1.f), false);
}

template <typename T>
Var<T> conv_bn_relu(ParamScope<T>& s, const std::string& name, Var<T> x, NormMode mode) {
  Var<T> y = conv2d(x, s(name + ".w"), Var<T>{&s.graph(), -1}, 1, 1);
  y = batch_norm(y, s(name + ".bn.gamma"), s(name + ".bn.beta"), s.params().get(name + ".bn.running_mean"),
                 s.params().get(name + ".bn.running_var"), mode);
  return relu(y);
}

std::string enc(int l, int k) { return "enc" + std::to_string(l) + ".conv" + std::to_string(k); }
std::string dec(int l, int k) { return "dec" + std::to_string(l) + ".conv" + std::to_string(k); }

}  // namespace

ModelParams<float> build_unet(const SegConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  ModelParams<float> p;
  int cin = 1;
  for (int l = 0; l <= kUNetDepth; ++l) {
    const int c = stage_channels(cfg, l);
    add_conv_bn(p, enc(l, 0), cin, c, rng);
    add_conv_bn(p, enc(l, 1), c, c, rng);
    cin = c;
  }
  for (int l = kUNetDepth - 1; l >= 0; --l) {
    const int c = stage_channels(cfg, l);
    add_conv_bn(p, dec(l, 0), cin + c, c, rng);
    add_conv_bn(p, dec(l, 1), c, c, rng);
    cin = c;
  }
  p.add("head.w", he_normal<float>({cfg.num_classes, cin, 1, 1}, cin, rng));
  p.add("head.b", TensorF({cfg.num_classes}, 0.f));
  return p;
}

template <typename T>
UNetOutputs<T> unet_forward(ParamScope<T>& s, Var<T> x, const SegConfig& cfg, NormMode mode) {
  if (x.value().rank() != 4 || x.dim(1) != 1 || x.dim(2) % 16 != 0 || x.dim(3) % 16 != 0)
    throw ShapeError("unet: expected (N,1,H,W) with H,W divisible by 16, got " + shape_str(x.shape()));
  std::vector<Var<T>> skips;
  Var<T> h = x;
  for (int l = 0; l <= kUNetDepth; ++l) {
    if (l > 0) h = max_pool2x2(h);
    h = conv_bn_relu(s, enc(l, 0), h, mode);
    h = conv_bn_relu(s, enc(l, 1), h, mode);
    if (l < kUNetDepth) skips.push_back(h);
  }
  Var<T> deepest = h;
  for (int l = kUNetDepth - 1; l >= 0; --l) {
    h = cfg.upsample == UpsampleMode::nearest ? upsample_nearest(h, 2) : upsample_bilinear2x(h);
    h = concat_channels<T>({h, skips[static_cast<std::size_t>(l)]});
    h = conv_bn_relu(s, dec(l, 0), h, mode);
    h = conv_bn_relu(s, dec(l, 1), h, mode);
  }
  Var<T> logits = conv2d(h, s("head.w"), s("head.b"));
  return {logits, softmax_channels(logits), deepest};
}

double seg_learning_rate(const SegConfig& cfg, int iteration) {
  return iteration < static_cast<int>(std::floor(cfg.lr_drop_at * cfg.iterations)) ? cfg.lr_initial : cfg.lr_final;
}

TensorF stack_images(const std::vector<const TensorF*>& images) {
  if (images.empty()) throw ShapeError("stack_images: empty batch");
  const Shape& s0 = images.front()->shape();
  TensorF out({static_cast<int>(images.size()), 1, s0[2], s0[3]});
  const std::size_t plane = images.front()->numel();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i]->shape() != s0) throw ShapeError("stack_images: mixed slice extents");
    std::copy(images[i]->data(), images[i]->data() + plane, out.data() + i * plane);
  }
  return out;
}

LabelMask stack_masks(const std::vector<const LabelMask*>& masks) {
  if (masks.empty()) throw ShapeError("stack_masks: empty batch");
  int n = 0;
  for (const auto* m : masks) n += m->n;
  LabelMask out(n, masks.front()->h, masks.front()->w);
  std::size_t off = 0;
  for (const auto* m : masks) {
    if (m->h != out.h || m->w != out.w) throw ShapeError("stack_masks: mixed slice extents");
    std::copy(m->data.begin(), m->data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
    off += m->data.size();
  }
  return out;
}

SegTrainResult train_seg(const Dataset& data, const SegConfig& cfg,
                         const std::function<void(const TrainLogEntry&)>& progress) {
  cfg.validate();
  if (data.empty()) throw Error("train_seg: empty dataset");
  for (const auto& s : data)
    if (s.mask.h != cfg.height || s.mask.w != cfg.width)
      throw ShapeError("train_seg: slice " + s.case_id + " is " + std::to_string(s.mask.h) + "x" +
                       std::to_string(s.mask.w) + ", config expects " + std::to_string(cfg.height) + "x" +
                       std::to_string(cfg.width));
  SegTrainResult result{build_unet(cfg), {}};
  AdamState<float> adam;
  std::mt19937_64 rng(cfg.seed ^ 0x5E9A11ULL);
  AugmentOptions aug = cfg.augment;
  aug.photometric = aug.photometric && !cfg.style_unified;
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);

  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<TensorF> imgs;
    std::vector<LabelMask> masks;
    TrainLogEntry entry;
    entry.iteration = it;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const Slice& s = data[pick(rng)];
      TensorF img = s.image;
      LabelMask m = s.mask;
      for (auto& name : augment_sample(img, m, rng, aug))
        if (std::find(entry.augmentations.begin(), entry.augmentations.end(), name) == entry.augmentations.end())
          entry.augmentations.push_back(std::move(name));
      imgs.push_back(std::move(img));
      masks.push_back(std::move(m));
    }
    std::vector<const TensorF*> ip;
    std::vector<const LabelMask*> mp;
    for (std::size_t i = 0; i < imgs.size(); ++i) {
      ip.push_back(&imgs[i]);
      mp.push_back(&masks[i]);
    }
    const LabelMask labels = stack_masks(mp);

    Graph<float> g;
    ParamScope<float> scope(g, result.params);
    auto out = unet_forward(scope, g.constant(stack_images(ip)), cfg, NormMode::train);
    Var<float> loss = loss_seg(out.probs, labels, cfg.lambda_dice);
    entry.loss = loss.value().item();
    if (!std::isfinite(entry.loss))
      throw NumericError("train_seg: non-finite loss at iteration " + std::to_string(it));
    entry.lr = seg_learning_rate(cfg, it);
    adam_step(result.params, param_grads(backward(g, loss)), adam, entry.lr);
    if (progress) progress(entry);
    result.log.push_back(std::move(entry));
  }
  return result;
}

LabelMask argmax_labels(const TensorF& probs) {
  if (probs.rank() != 4 || probs.dim(1) != kNumClasses)
    throw ShapeError("argmax_labels: expected (N,4,H,W), got " + shape_str(probs.shape()));
  const int n = probs.dim(0), h = probs.dim(2), w = probs.dim(3);
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  LabelMask m(n, h, w);
  for (int b = 0; b < n; ++b)
    for (std::size_t i = 0; i < hw; ++i) {
      int best = 0;
      float bv = probs[static_cast<std::size_t>(b) * kNumClasses * hw + i];
      for (int c = 1; c < kNumClasses; ++c) {
        const float v = probs[(static_cast<std::size_t>(b) * kNumClasses + c) * hw + i];
        if (v > bv) {
          bv = v;
          best = c;
        }
      }
      m.data[b * hw + i] = static_cast<std::uint8_t>(best);
    }
  return m;
}

Segmentation segment(const ModelParams<float>& params, const TensorF& images, const SegConfig& cfg) {
  if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != cfg.height || images.dim(3) != cfg.width)
    throw ShapeError("segment: image " + shape_str(images.shape()) + " does not match configured size " +
                     std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
  ModelParams<float> p = params;  // eval mode never writes running statistics
  Graph<float> g(false);
  ParamScope<float> scope(g, p);
  auto out = unet_forward(scope, g.constant(images), cfg, NormMode::eval);
  Segmentation s;
  s.probs = out.probs.value();
  for (float v : s.probs.span())
    if (!std::isfinite(v)) throw NumericError("segment: non-finite probabilities");
  s.labels = argmax_labels(s.probs);
  return s;
}

template UNetOutputs<float> unet_forward<float>(ParamScope<float>&, Var<float>, const SegConfig&, NormMode);
template UNetOutputs<double> unet_forward<double>(ParamScope<double>&, Var<double>, const SegConfig&, NormMode);

}  // namespace styleinv
