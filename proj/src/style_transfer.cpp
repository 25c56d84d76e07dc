#include "styleinv/style_transfer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "styleinv/metrics.hpp"
#include "styleinv/ops.hpp"
#include "styleinv/segnet.hpp"

namespace styleinv {

void STConfig::validate() const {
  if (levels < 1) throw Error("st config: levels must be >= 1");
  if (base_channels < 1) throw Error("st config: base_channels must be >= 1");
  if (iterations < 0 || batch_size < 1) throw Error("st config: invalid iterations or batch size");
  if (!(lr > 0)) throw Error("st config: lr must be positive");
}

namespace {

int channels(const STConfig& cfg, int level) { return cfg.base_channels << level; }
std::string enc(int l, int k) { return "enc" + std::to_string(l) + ".conv" + std::to_string(k); }
std::string dec(int l, int k) { return "dec" + std::to_string(l) + ".conv" + std::to_string(k); }

void add_conv(ModelParams<float>& p, const std::string& name, int cin, int cout, int k, std::mt19937_64& rng) {
  p.add(name + ".w", he_normal<float>({cout, cin, k, k}, cin * k * k, rng));
  p.add(name + ".b", TensorF({cout}, 0.f));
}

template <typename T>
Var<T> conv(ParamScope<T>& s, const std::string& name, Var<T> x) {
  const int k = s.params().get(name + ".w").dim(2);
  return conv2d(x, s(name + ".w"), s(name + ".b"), 1, k / 2);
}

template <typename T>
Var<T> stage_convs(ParamScope<T>& s, int l, Var<T> x) {
  x = relu(conv(s, enc(l, 0), x));
  return relu(conv(s, enc(l, 1), x));
}

void check_input(const Shape& shape, const STConfig& cfg, const char* what) {
  const int f = 1 << cfg.levels;
  if (shape.size() != 4 || shape[1] != 1 || shape[2] % f != 0 || shape[3] % f != 0)
    throw ShapeError(std::string(what) + ": expected (N,1,H,W) with H,W divisible by " + std::to_string(f) +
                     ", got " + shape_str(shape));
}

}  // namespace

ModelParams<float> build_st(const STConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  ModelParams<float> p;
  int cin = 1;
  int fused = 0;
  for (int l = 0; l < cfg.levels; ++l) {
    const int c = channels(cfg, l);
    add_conv(p, enc(l, 0), cin, c, 3, rng);
    add_conv(p, enc(l, 1), c, c, 3, rng);
    cin = c;
    fused += c;
  }
  const int deep = channels(cfg, cfg.levels - 1);
  add_conv(p, "fuse", fused, deep, 1, rng);
  for (int l = cfg.levels - 1; l >= 0; --l) {
    const int c = channels(cfg, l);
    add_conv(p, dec(l, 0), c, c, 3, rng);
    if (cfg.decoder_instance_norm) {
      p.add(dec(l, 0) + ".in.gamma", TensorF({c}, 1.f));
      p.add(dec(l, 0) + ".in.beta", TensorF({c}, 0.f));
    }
    add_conv(p, dec(l, 1), c, l > 0 ? channels(cfg, l - 1) : c, 3, rng);
  }
  add_conv(p, "out", cfg.base_channels, 1, 3, rng);
  return p;
}

template <typename T>
Var<T> fuse_multiscale(ParamScope<T>& s, const std::vector<Var<T>>& feats, const STConfig& cfg) {
  if (feats.empty()) throw ShapeError("fuse_multiscale: no stage features");
  const int dh = feats.back().dim(2), dw = feats.back().dim(3);
  std::vector<Var<T>> pooled;
  for (const auto& f : feats) {
    const int fh = f.dim(2), fw = f.dim(3);
    if (fh % dh != 0 || fw % dw != 0 || fh / dh != fw / dw)
      throw ShapeError("fuse_multiscale: " + shape_str(f.shape()) + " is not reducible to " + std::to_string(dh) +
                       "x" + std::to_string(dw));
    pooled.push_back(fh == dh ? f : avg_pool(f, fh / dh));
  }
  (void)cfg;
  Var<T> cat = pooled.size() == 1 ? pooled.front() : concat_channels(pooled);
  return relu(conv(s, "fuse", cat));
}

template <typename T>
Encoded<T> encode(ParamScope<T>& s, Var<T> x, const STConfig& cfg) {
  check_input(x.shape(), cfg, "encode");
  Encoded<T> e;
  Var<T> h = x;
  for (int l = 0; l < cfg.levels; ++l) {
    auto b = haar_pool(stage_convs(s, l, h));
    e.stage_lows.push_back(b[0]);
    e.skips.push_back({b[1], b[2], b[3]});
    h = b[0];
  }
  e.deep = fuse_multiscale(s, e.stage_lows, cfg);
  return e;
}

template <typename T>
Var<T> stylize_graph(ParamScope<T>& s, Var<T> content, Var<T> style, const STConfig& cfg) {
  check_input(content.shape(), cfg, "stylize");
  check_input(style.shape(), cfg, "stylize");
  if (content.dim(2) != style.dim(2) || content.dim(3) != style.dim(3))
    throw ShapeError("stylize: content " + shape_str(content.shape()) + " and style " + shape_str(style.shape()) +
                     " differ in extent");
  const bool self = content.id == style.id;
  std::vector<Var<T>> lows_c, lows_s;
  std::vector<std::array<Var<T>, 3>> skips;
  Var<T> hc = content, hs = style;
  for (int l = 0; l < cfg.levels; ++l) {
    hc = stage_convs(s, l, hc);
    if (!self) hs = stage_convs(s, l, hs);
    hc = adain(hc, self ? hc : hs);
    auto bc = haar_pool(hc);
    lows_c.push_back(bc[0]);
    skips.push_back({bc[1], bc[2], bc[3]});
    hc = bc[0];
    if (!self) {
      hs = haar_pool(hs)[0];
      lows_s.push_back(hs);
    }
  }
  Var<T> fc = fuse_multiscale(s, lows_c, cfg);
  Var<T> h = adain(fc, self ? fc : fuse_multiscale(s, lows_s, cfg));
  for (int l = cfg.levels - 1; l >= 0; --l) {
    h = conv(s, dec(l, 0), h);
    if (cfg.decoder_instance_norm) h = instance_norm(h, s(dec(l, 0) + ".in.gamma"), s(dec(l, 0) + ".in.beta"));
    h = relu(h);
    const auto& sk = skips[static_cast<std::size_t>(l)];
    h = haar_unpool(h, sk[0], sk[1], sk[2]);
    h = relu(conv(s, dec(l, 1), h));
  }
  return conv(s, "out", h);
}

TensorF stylize(const ModelParams<float>& params, const TensorF& content, const TensorF& style, const STConfig& cfg) {
  if (style.rank() == 4 && content.rank() == 4 && style.dim(0) != 1 && style.dim(0) != content.dim(0))
    throw ShapeError("stylize: style batch must be 1 or match the content batch");
  ModelParams<float> p = params;
  Graph<float> g(false);
  ParamScope<float> scope(g, p);
  Var<float> out = stylize_graph(scope, g.constant(content), g.constant(style), cfg);
  TensorF y = out.value();
  for (auto& v : y.span()) {
    if (!std::isfinite(v)) throw NumericError("stylize: non-finite output");
    v = std::clamp(v, 0.f, 1.f);
  }
  return y;
}

double psnr(const TensorF& a, const TensorF& b, double peak) {
  if (a.shape() != b.shape()) throw ShapeError("psnr: shape mismatch");
  double se = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.numel());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

STTrainResult finetune_reconstruction(const Dataset& data, ModelParams<float> params, const STConfig& cfg,
                                      const std::function<void(int, double)>& progress) {
  cfg.validate();
  if (data.empty()) throw Error("finetune_reconstruction: empty dataset");
  STTrainResult r{std::move(params), {}};
  AdamState<float> adam;
  std::mt19937_64 rng(cfg.seed ^ 0x57A7E5ULL);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  const int drop = static_cast<int>(std::floor(0.8 * cfg.iterations));
  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<const TensorF*> batch;
    for (int b = 0; b < cfg.batch_size; ++b) batch.push_back(&data[pick(rng)].image);
    Graph<float> g;
    ParamScope<float> scope(g, r.params);
    Var<float> x = g.constant(stack_images(batch));
    Var<float> loss = mse(stylize_graph(scope, x, x, cfg), x);
    const double lv = loss.value().item();
    if (!std::isfinite(lv)) throw NumericError("finetune_reconstruction: non-finite loss at iteration " + std::to_string(it));
    adam_step(r.params, param_grads(backward(g, loss)), adam, it < drop ? cfg.lr : 0.1 * cfg.lr);
    r.losses.push_back(lv);
    if (progress) progress(it, lv);
  }
  return r;
}

// --- style selection -------------------------------------------------------

StyleDescriptor describe(const TensorF& image, const std::string& source_id) {
  const IntensityStats st = intensity_stats(image);
  return {st.mean, st.std, source_id};
}

const StyleEntry& select_style(const TensorF& test_image, const StyleLibrary& lib) {
  if (lib.empty()) throw MissingArtifactError("select_style: empty style library");
  const IntensityStats t = intensity_stats(test_image);
  const StyleEntry* best = nullptr;
  double best_d = 0;
  for (const auto& e : lib) {
    const double d = std::hypot(t.mean - e.desc.mean, t.std - e.desc.std);
    if (!best || d < best_d || (d == best_d && e.desc.source_id < best->desc.source_id)) {
      best = &e;
      best_d = d;
    }
  }
  return *best;
}

std::vector<std::pair<std::string, double>> rank_cases_by_dice(const Dataset& images,
                                                               const std::vector<LabelMask>& predictions) {
  if (predictions.size() != images.size())
    throw ShapeError("style library: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(images.size()) + " slices");
  std::vector<std::pair<std::string, double>> ranked;
  for (const auto& id : case_ids(images)) {
    double s = 0;
    const auto idx = slices_of_case(images, id);
    for (std::size_t i : idx) s += mean_structure_dice(predictions[i], images[i].mask);
    ranked.emplace_back(id, s / static_cast<double>(idx.size()));
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return ranked;
}

StyleLibrary build_style_library(const Dataset& images, const std::vector<LabelMask>& predictions, int top_k) {
  const auto ranked = rank_cases_by_dice(images, predictions);
  if (top_k < 1 || static_cast<std::size_t>(top_k) > ranked.size())
    throw Error("build_style_library: top_k " + std::to_string(top_k) + " with " + std::to_string(ranked.size()) +
                " cases");
  StyleLibrary lib;
  for (int k = 0; k < top_k; ++k)
    for (std::size_t i : slices_of_case(images, ranked[static_cast<std::size_t>(k)].first)) {
      const Slice& s = images[i];
      char buf[16];
      std::snprintf(buf, sizeof buf, "_s%02d", s.index);
      lib.push_back({s.image, describe(s.image, s.case_id + buf)});
    }
  return lib;
}

void save_style_library(const std::filesystem::path& dir, const StyleLibrary& lib, const std::string& manifest_name) {
  std::filesystem::create_directories(dir);
  std::ofstream os(dir / manifest_name);
  if (!os) throw Error("cannot write style library manifest in " + dir.string());
  os.precision(17);
  for (const auto& e : lib) {
    const std::string rel = e.desc.source_id + ".pgm";
    save_image_pgm(dir / rel, e.image);
    // Statistics of the slice as stored, so a reload reproduces them.
    const StyleDescriptor d = describe(load_image_pgm(dir / rel), e.desc.source_id);
    os << d.source_id << '\t' << d.mean << '\t' << d.std << '\t' << rel << '\n';
  }
}

StyleLibrary load_style_library(const std::filesystem::path& manifest) {
  if (!std::filesystem::exists(manifest))
    throw MissingArtifactError("style library manifest not found: " + manifest.string());
  std::ifstream is(manifest);
  StyleLibrary lib;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, mean, std_, path;
    if (!std::getline(ss, id, '\t') || !std::getline(ss, mean, '\t') || !std::getline(ss, std_, '\t') ||
        !std::getline(ss, path))
      throw FormatError(manifest.string() + ":" + std::to_string(lineno) + ": expected 4 tab-separated fields");
    TensorF img = load_image_pgm(manifest.parent_path() / path);
    StyleDescriptor d = describe(img, id);
    if (std::abs(d.mean - std::stod(mean)) > 1e-6 || std::abs(d.std - std::stod(std_)) > 1e-6)
      throw FormatError(manifest.string() + ":" + std::to_string(lineno) + ": statistics do not match " + path);
    lib.push_back({std::move(img), std::move(d)});
  }
  if (lib.empty()) throw MissingArtifactError("style library is empty: " + manifest.string());
  return lib;
}

Dataset stylize_dataset(const Dataset& data, const TensorF& style_slice, const ModelParams<float>& params,
                        const STConfig& cfg) {
  Dataset out = data;
  constexpr std::size_t kChunk = 16;
  for (std::size_t i = 0; i < data.size(); i += kChunk) {
    std::vector<const TensorF*> batch;
    for (std::size_t j = i; j < std::min(data.size(), i + kChunk); ++j) batch.push_back(&data[j].image);
    const TensorF y = stylize(params, stack_images(batch), style_slice, cfg);
    const std::size_t plane = batch.front()->numel();
    for (std::size_t j = 0; j < batch.size(); ++j)
      std::copy(y.data() + j * plane, y.data() + (j + 1) * plane, out[i + j].image.data());
  }
  return out;
}

template Encoded<float> encode<float>(ParamScope<float>&, Var<float>, const STConfig&);
template Encoded<double> encode<double>(ParamScope<double>&, Var<double>, const STConfig&);
template Var<float> fuse_multiscale<float>(ParamScope<float>&, const std::vector<Var<float>>&, const STConfig&);
template Var<double> fuse_multiscale<double>(ParamScope<double>&, const std::vector<Var<double>>&, const STConfig&);
template Var<float> stylize_graph<float>(ParamScope<float>&, Var<float>, Var<float>, const STConfig&);
template Var<double> stylize_graph<double>(ParamScope<double>&, Var<double>, Var<double>, const STConfig&);

}  // namespace styleinv
