#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "doctest.h"
#include "styleinv/layers.hpp"
#include "styleinv/ops.hpp"
#include "styleinv/style_transfer.hpp"
#include "test_util.hpp"

using namespace styleinv;
namespace fs = std::filesystem;

namespace {

using TensorD = Tensor<double>;

STConfig small_cfg(int base = 4, int levels = 2) {
  STConfig c;
  c.base_channels = base;
  c.levels = levels;
  return c;
}

PhantomOptions phantom_opts(std::uint64_t seed, int cases, int size = 32) {
  PhantomOptions o;
  o.n_cases = cases;
  o.slices_per_case = 6;
  o.height = size;
  o.width = size;
  o.seed = seed;
  return o;
}

double max_abs(const TensorF& t) {
  double m = 0;
  for (float v : t.span()) m = std::max(m, static_cast<double>(std::abs(v)));
  return m;
}

// Gradient magnitude by central differences, interior pixels only.
std::vector<double> edge_map(const TensorF& img) {
  const int h = img.dim(2), w = img.dim(3);
  std::vector<double> e;
  for (int y = 1; y + 1 < h; ++y)
    for (int x = 1; x + 1 < w; ++x) {
      const double gy = img.at(0, 0, y + 1, x) - img.at(0, 0, y - 1, x);
      const double gx = img.at(0, 0, y, x + 1) - img.at(0, 0, y, x - 1);
      e.push_back(std::hypot(gy, gx));
    }
  return e;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n, mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double variance(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

// Reconstruction-tuned model shared by the behavioural tests.
struct Tuned {
  STConfig cfg;
  ModelParams<float> params;
};

const Tuned& tuned() {
  static const Tuned t = [] {
    STConfig c;
    c.iterations = 400;
    c.seed = 1;
    Dataset train = generate_phantoms(phantom_opts(11, 4), vendor_style('A'));
    const Dataset b = generate_phantoms(phantom_opts(12, 4), vendor_style('B'));
    train.insert(train.end(), b.begin(), b.end());
    return Tuned{c, finetune_reconstruction(train, build_st(c), c).params};
  }();
  return t;
}

// Plain-loop Dice per case and a sort of those values, for the ranking oracle.
std::vector<std::string> oracle_ranking(const Dataset& d, const std::vector<LabelMask>& preds) {
  std::vector<std::pair<double, std::string>> per_case;
  for (const auto& id : case_ids(d)) {
    double total = 0;
    int n = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d[i].case_id != id) continue;
      double s = 0;
      for (int c = 1; c <= 3; ++c) {
        int inter = 0, sp = 0, sg = 0;
        for (std::size_t k = 0; k < d[i].mask.data.size(); ++k) {
          const bool p = preds[i].data[k] == c, g = d[i].mask.data[k] == c;
          inter += p && g;
          sp += p;
          sg += g;
        }
        s += sp + sg == 0 ? 1.0 : 2.0 * inter / (sp + sg);
      }
      total += s / 3;
      ++n;
    }
    per_case.emplace_back(-total / n, id);
  }
  std::sort(per_case.begin(), per_case.end());
  std::vector<std::string> ids;
  for (auto& [_, id] : per_case) ids.push_back(id);
  return ids;
}

// Ground truth with a case-dependent number of rows wiped, so cases rank 0,1,2,...
std::vector<LabelMask> degraded_predictions(const Dataset& d) {
  std::vector<LabelMask> preds;
  const auto ids = case_ids(d);
  for (const auto& s : d) {
    LabelMask m = s.mask;
    const int rank = static_cast<int>(std::find(ids.begin(), ids.end(), s.case_id) - ids.begin());
    const int wipe = (rank * 5) % static_cast<int>(ids.size());
    for (int y = 0; y < 2 * wipe && y < m.h; ++y)
      for (int x = 0; x < m.w; ++x) m.at(0, y + m.h / 4 < m.h ? y + m.h / 4 : y, x) = 0;
    preds.push_back(std::move(m));
  }
  return preds;
}

}  // namespace

TEST_CASE("encoder shapes and zero input") {
  const STConfig c = small_cfg();
  ModelParams<float> p = build_st(c);
  Graph<float> g(false);
  ParamScope<float> s(g, p);
  const auto e = encode(s, g.constant(testutil::random_tensor<float>({2, 1, 64, 64}, 1, 0, 1)), c);
  CHECK(e.deep.shape() == Shape{2, 8, 16, 16});
  REQUIRE(e.skips.size() == 2);
  for (const auto& b : e.skips[0]) CHECK(b.shape() == Shape{2, 4, 32, 32});
  for (const auto& b : e.skips[1]) CHECK(b.shape() == Shape{2, 8, 16, 16});
  CHECK_THROWS_AS(encode(s, g.constant(TensorF({1, 1, 62, 64})), c), ShapeError);

  const auto z = encode(s, g.constant(TensorF({1, 1, 32, 32}, 0.f)), c);
  CHECK(max_abs(z.deep.value()) == 0.0);
  for (const auto& stage : z.skips)
    for (const auto& b : stage) CHECK(max_abs(b.value()) == 0.0);

  // Detail bands of the raw wavelet split vanish on a constant image.
  const auto bands = haar_pool(TensorF({1, 1, 16, 16}, 0.37f));
  CHECK(max_abs(bands.lh) < 1e-7);
  CHECK(max_abs(bands.hl) < 1e-7);
  CHECK(max_abs(bands.hh) < 1e-7);

  for (int levels : {1, 2, 3}) {
    const STConfig cl = small_cfg(2, levels);
    ModelParams<float> pl = build_st(cl);
    ParamScope<float> sl(g, pl);
    const auto el = encode(sl, g.constant(TensorF({1, 1, 32, 32}, 0.5f)), cl);
    CHECK(el.deep.dim(2) == 32 >> levels);
    CHECK(el.deep.dim(1) == 2 << (levels - 1));
  }
}

TEST_CASE("fusion layer") {
  Graph<double> g(false);
  SUBCASE("single stage is the 1x1 conv of that stage") {
    ModelParams<double> p;
    p.add("fuse.w", testutil::random_tensor<double>({3, 2, 1, 1}, 4));
    p.add("fuse.b", testutil::random_tensor<double>({3}, 5));
    ParamScope<double> s(g, p);
    const TensorD f = testutil::random_tensor<double>({1, 2, 4, 4}, 6);
    const TensorD out = fuse_multiscale(s, {g.constant(f)}, small_cfg(2, 1)).value();
    const TensorD& w = p.get("fuse.w");
    for (int o = 0; o < 3; ++o)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
          const double v = w.at(o, 0, 0, 0) * f.at(0, 0, y, x) + w.at(o, 1, 0, 0) * f.at(0, 1, y, x) + p.get("fuse.b")[o];
          CHECK(out.at(0, o, y, x) == doctest::Approx(std::max(v, 0.0)).epsilon(1e-12));
        }
  }
  SUBCASE("identical features with identity-like weights sum over stages") {
    const int c = 3;
    ModelParams<double> p;
    TensorD w({c, 2 * c, 1, 1}, 0.0);
    for (int o = 0; o < c; ++o) w.at(o, o, 0, 0) = w.at(o, c + o, 0, 0) = 1.0;
    p.add("fuse.w", w);
    p.add("fuse.b", TensorD({c}, 0.0));
    ParamScope<double> s(g, p);
    const TensorD deep = testutil::random_tensor<double>({1, c, 4, 4}, 7, 0, 1);
    TensorD fine({1, c, 8, 8});
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) fine.at(0, ch, y, x) = deep.at(0, ch, y / 2, x / 2);
    const TensorD out = fuse_multiscale(s, {g.constant(fine), g.constant(deep)}, small_cfg()).value();
    CHECK(out.shape() == deep.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out[i] == doctest::Approx(2.0 * deep[i]).epsilon(1e-12));
    CHECK_THROWS_AS(fuse_multiscale(s, {g.constant(TensorD({1, c, 6, 6})), g.constant(deep)}, small_cfg()), ShapeError);
  }
}

TEST_CASE("stylize contracts") {
  const STConfig c = small_cfg();
  const ModelParams<float> p = build_st(c);
  const TensorF content = testutil::random_tensor<float>({3, 1, 16, 16}, 2, 0, 1);
  const TensorF style = testutil::random_tensor<float>({1, 1, 16, 16}, 3, 0.2, 0.9);
  const TensorF y = stylize(p, content, style, c);
  CHECK(y.shape() == content.shape());
  for (float v : y.span()) CHECK((v >= 0.f && v <= 1.f));
  CHECK(max_abs(stylize(p, TensorF({1, 1, 16, 16}, 0.f), TensorF({1, 1, 16, 16}, 0.f), c)) == 0.0);
  CHECK_THROWS_AS(stylize(p, content, TensorF({1, 1, 32, 32}), c), ShapeError);
  CHECK_THROWS_AS(stylize(p, content, TensorF({2, 1, 16, 16}), c), ShapeError);
  CHECK_THROWS_AS(stylize(p, TensorF({1, 1, 18, 16}), TensorF({1, 1, 18, 16}), c), ShapeError);

  // The self path matches the general path fed two equal images.
  ModelParams<float> q = p;
  Graph<float> g(false);
  ParamScope<float> s(g, q);
  const TensorF x = content;
  const Var<float> xv = g.constant(x);
  const TensorF self = stylize_graph(s, xv, xv, c).value();
  const TensorF pair = stylize_graph(s, xv, g.constant(x), c).value();
  CHECK(testutil::max_abs_diff(self, pair) < 1e-5);
}

TEST_CASE("style network gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    STConfig c = small_cfg(2);
    c.seed = seed;
    ModelParams<double> params = build_st(c).cast<double>();
    // Zero biases behind a dead channel leave ReLU inputs exactly on the kink.
    for (auto& e : params.entries())
      if (e.name.ends_with(".b")) e.value = testutil::random_tensor<double>(e.value.shape(), seed + 70, -0.1, 0.1);
    const TensorD x = testutil::random_tensor<double>({1, 1, 8, 8}, 50 + seed, 0, 1);
    const TensorD st = testutil::random_tensor<double>({1, 1, 8, 8}, 60 + seed, 0, 1);

    const double ep = testutil::param_gradient_check(
        params,
        [&](ModelParams<double>& p, Graph<double>& g) {
          ParamScope<double> s(g, p);
          const Var<double> xv = g.constant(x);
          return mse(stylize_graph(s, xv, xv, c), xv);
        },
        seed);
    CHECK(ep < 1e-4);

    const double ex = testutil::gradient_check(
        [&](Graph<double>& g, const std::vector<Var<double>>& v) {
          ModelParams<double> p = params;
          ParamScope<double> s(g, p);
          return mse(stylize_graph(s, v[0], v[1], c), g.constant(x));
        },
        {x, st});
    CHECK(ex < 1e-4);
  }
}

TEST_CASE("reconstruction fine-tuning descends and is deterministic") {
  STConfig c;
  c.iterations = 100;
  c.seed = 3;
  const Dataset d = generate_phantoms(phantom_opts(21, 2, 32), vendor_style('A'));
  const Dataset eight(d.begin(), d.begin() + 8);
  const STTrainResult r = finetune_reconstruction(eight, build_st(c), c);
  REQUIRE(r.losses.size() == 100);
  double prev = INFINITY;
  for (int w = 0; w < 10; ++w) {
    const double m = std::accumulate(r.losses.begin() + 10 * w, r.losses.begin() + 10 * (w + 1), 0.0) / 10;
    CHECK(m < prev);
    prev = m;
  }

  STConfig shortc = c;
  shortc.iterations = 5;
  CHECK(finetune_reconstruction(eight, build_st(shortc), shortc).params ==
        finetune_reconstruction(eight, build_st(shortc), shortc).params);
  CHECK_THROWS(finetune_reconstruction({}, build_st(shortc), shortc));
}

TEST_CASE("tuned network restyles statistics and keeps content edges") {
  const Tuned& t = tuned();
  const Dataset content = generate_phantoms(phantom_opts(31, 2), vendor_style('D'));
  const Dataset style = generate_phantoms(phantom_opts(32, 2), vendor_style('A'));
  int closer = 0, edges = 0;
  for (std::size_t i = 0; i < content.size(); ++i) {
    const TensorF& ci = content[i].image;
    const TensorF& si = style[(i * 5) % style.size()].image;
    const TensorF out = stylize(t.params, ci, si, t.cfg);
    const double mo = intensity_stats(out).mean, ms = intensity_stats(si).mean, mc = intensity_stats(ci).mean;
    closer += std::abs(mo - ms) < std::abs(mc - ms);
    const auto eo = edge_map(out);
    edges += pearson(eo, edge_map(ci)) > pearson(eo, edge_map(si));
  }
  CHECK(closer == static_cast<int>(content.size()));
  CHECK(edges == static_cast<int>(content.size()));
}

TEST_CASE("stylize_dataset unifies appearance") {
  const Tuned& t = tuned();
  Dataset mixed;
  for (char v : {'A', 'B', 'C', 'D'}) {
    const Dataset d = generate_phantoms(phantom_opts(40 + v, 1), vendor_style(v));
    mixed.insert(mixed.end(), d.begin(), d.end());
  }
  const TensorF style = mixed[2].image;
  const Dataset out = stylize_dataset(mixed, style, t.params, t.cfg);
  REQUIRE(out.size() == mixed.size());
  std::vector<double> mean_in, mean_out, std_in, std_out;
  for (std::size_t i = 0; i < mixed.size(); ++i) {
    CHECK(out[i].mask == mixed[i].mask);
    CHECK(out[i].case_id == mixed[i].case_id);
    const auto a = intensity_stats(mixed[i].image), b = intensity_stats(out[i].image);
    mean_in.push_back(a.mean);
    mean_out.push_back(b.mean);
    std_in.push_back(a.std);
    std_out.push_back(b.std);
  }
  CHECK(variance(mean_out) < variance(mean_in));
  CHECK(variance(std_out) < variance(std_in));
  CHECK(psnr(out[2].image, style) > psnr(mixed[2 + 18].image, style));
}

TEST_CASE("select_style") {
  auto entry = [](double m, double s, std::string id) {
    return StyleEntry{TensorF({1, 1, 2, 2}), StyleDescriptor{m, s, std::move(id)}};
  };
  // Constant-mean test image with the requested statistics: values m +/- s.
  auto image = [](double m, double s) {
    return TensorF({1, 1, 2, 2}, {float(m + s), float(m - s), float(m + s), float(m - s)});
  };
  const StyleLibrary hand = {entry(0.3, 0.1, "a"), entry(0.8, 0.4, "b")};
  CHECK(select_style(image(0.35, 0.12), hand).desc.source_id == "a");
  CHECK_THROWS_AS(select_style(image(0.3, 0.1), StyleLibrary{}), MissingArtifactError);

  const Dataset d = generate_phantoms(phantom_opts(5, 2), vendor_style('B'));
  StyleLibrary own;
  for (const auto& s : d) own.push_back({s.image, describe(s.image, s.case_id + std::to_string(s.index))});
  for (std::size_t i = 0; i < own.size(); ++i)
    CHECK(select_style(d[i].image, own).desc.source_id == own[i].desc.source_id);

  // Ties go to the lowest id regardless of order.
  const StyleLibrary tie = {entry(0.5, 0.2, "z"), entry(0.5, 0.2, "m"), entry(0.1, 0.0, "a")};
  CHECK(select_style(image(0.5, 0.2), tie).desc.source_id == "m");

  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    StyleLibrary lib;
    for (int i = 0; i < 50; ++i) {
      // Quantised statistics make exact ties common.
      lib.push_back(entry(std::round(u(rng) * 8) / 8, std::round(u(rng) * 4) / 16, "id" + std::to_string(1000 + i)));
    }
    const TensorF q = image(std::round(u(rng) * 8) / 8, std::round(u(rng) * 4) / 16);
    const auto st = intensity_stats(q);
    std::size_t best = 0;
    for (std::size_t i = 1; i < lib.size(); ++i) {
      const double di = std::sqrt(std::pow(st.mean - lib[i].desc.mean, 2) + std::pow(st.std - lib[i].desc.std, 2));
      const double db =
          std::sqrt(std::pow(st.mean - lib[best].desc.mean, 2) + std::pow(st.std - lib[best].desc.std, 2));
      if (di < db || (di == db && lib[i].desc.source_id < lib[best].desc.source_id)) best = i;
    }
    const std::string expect = lib[best].desc.source_id;
    CHECK(select_style(q, lib).desc.source_id == expect);
    std::shuffle(lib.begin(), lib.end(), rng);
    CHECK(select_style(q, lib).desc.source_id == expect);
  }
}

TEST_CASE("style library construction and files") {
  const Dataset d = generate_phantoms(phantom_opts(9, 7), vendor_style('A'));
  const auto preds = degraded_predictions(d);

  const auto ranked = rank_cases_by_dice(d, preds);
  const auto expect = oracle_ranking(d, preds);
  REQUIRE(ranked.size() == expect.size());
  for (std::size_t i = 0; i < ranked.size(); ++i) CHECK(ranked[i].first == expect[i]);

  CHECK(build_style_library(d, preds, 7).size() == d.size());
  const StyleLibrary lib = build_style_library(d, preds, 5);
  std::size_t expected_size = 0;
  for (int k = 0; k < 5; ++k) expected_size += slices_of_case(d, expect[static_cast<std::size_t>(k)]).size();
  CHECK(lib.size() == expected_size);
  for (const auto& e : lib) {
    const auto st = intensity_stats(e.image);
    CHECK(std::abs(st.mean - e.desc.mean) < 1e-12);
    CHECK(e.desc.std >= 0);
  }
  CHECK_THROWS(build_style_library(d, preds, 8));
  CHECK_THROWS_AS(rank_cases_by_dice(d, {preds.front()}), ShapeError);

  const fs::path dir = fs::temp_directory_path() / "styleinv_test_stylelib";
  fs::remove_all(dir);
  save_style_library(dir, lib);
  const StyleLibrary back = load_style_library(dir / "library.tsv");
  REQUIRE(back.size() == lib.size());
  for (std::size_t i = 0; i < lib.size(); ++i) {
    CHECK(back[i].desc.source_id == lib[i].desc.source_id);
    CHECK(testutil::max_abs_diff(back[i].image, lib[i].image) <= 1.0 / 65535);
    CHECK(std::abs(back[i].desc.mean - lib[i].desc.mean) < 1e-5);
  }
  CHECK_THROWS_AS(load_style_library(dir / "missing.tsv"), MissingArtifactError);
  {
    std::ofstream os(dir / "tampered.tsv");
    os << lib[0].desc.source_id << "\t0.9\t0.1\t" << lib[0].desc.source_id << ".pgm\n";
  }
  CHECK_THROWS_AS(load_style_library(dir / "tampered.tsv"), FormatError);
  { std::ofstream os(dir / "empty.tsv"); }
  CHECK_THROWS_AS(load_style_library(dir / "empty.tsv"), MissingArtifactError);
  fs::remove_all(dir);
}
