#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "styleinv/augment.hpp"
#include "styleinv/phantom.hpp"
#include "test_util.hpp"

using namespace styleinv;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("styleinv_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

PhantomOptions small(std::uint64_t seed, int cases = 4) {
  PhantomOptions o;
  o.n_cases = cases;
  o.slices_per_case = 6;
  o.height = 32;
  o.width = 32;
  o.seed = seed;
  return o;
}

double set_mean(const Dataset& d) {
  double s = 0;
  for (const auto& sl : d) s += intensity_stats(sl.image).mean;
  return s / static_cast<double>(d.size());
}

}  // namespace

TEST_CASE("phantom generation is deterministic and well formed") {
  const Dataset a = generate_phantoms(small(7), vendor_style('A'));
  const Dataset b = generate_phantoms(small(7), vendor_style('A'));
  REQUIRE(a.size() == 24);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].mask == b[i].mask);
    CHECK(a[i].image.shape() == Shape{1, 1, 32, 32});
    for (float v : a[i].image.span()) CHECK((v >= 0.f && v <= 1.f));
    a[i].mask.validate();
  }
  const Dataset c = generate_phantoms(small(8), vendor_style('A'));
  CHECK_FALSE(a[0].image == c[0].image);
  CHECK(a[0].case_id == "A_case000");

  // Every mid-stack slice shows all four classes.
  for (const auto& s : a) {
    if (s.index == 0 || s.index == 5) continue;
    std::set<int> seen(s.mask.data.begin(), s.mask.data.end());
    CHECK(seen.size() == 4);
  }
  CHECK_THROWS_AS(generate_phantoms(PhantomOptions{0, 6, 32, 32, 0}, vendor_style('A')), Error);
  CHECK_THROWS_AS(generate_phantoms(PhantomOptions{1, 6, 40, 32, 0}, vendor_style('A')), ShapeError);
  CHECK_THROWS_AS(vendor_style('E'), Error);
}

TEST_CASE("vendor styles change appearance but not labels") {
  std::map<char, Dataset> sets;
  for (char v : {'A', 'B', 'C', 'D'}) sets[v] = generate_phantoms(small(3, 6), vendor_style(v));
  for (char v : {'B', 'C', 'D'})
    for (std::size_t i = 0; i < sets['A'].size(); ++i) CHECK(sets[v][i].mask == sets['A'][i].mask);
  CHECK(std::abs(set_mean(sets['D']) - set_mean(sets['A'])) >= 0.15);
  CHECK(set_mean(sets['A']) < set_mean(sets['B']));
  CHECK(set_mean(sets['B']) < set_mean(sets['C']));
  CHECK(set_mean(sets['C']) < set_mean(sets['D']));
}

TEST_CASE("pgm round trips") {
  const fs::path dir = scratch("pgm");
  const TensorF img = testutil::random_tensor<float>({1, 1, 64, 64}, 3, 0, 1);
  save_image_pgm(dir / "img.pgm", img);
  {
    std::ifstream in(dir / "img.pgm", std::ios::binary);
    std::string magic, w, h, maxval;
    in >> magic >> w >> h >> maxval;
    CHECK(magic + " " + w + " " + h + " " + maxval == "P5 64 64 65535");
  }
  const TensorF back = load_image_pgm(dir / "img.pgm");
  CHECK(testutil::max_abs_diff(img, back) <= 1.0 / 65535);

  LabelMask m(1, 16, 12);
  std::mt19937_64 rng(4);
  for (auto& v : m.data) v = static_cast<std::uint8_t>(rng() % 4);
  save_mask_pgm(dir / "m.pgm", m);
  CHECK(load_mask_pgm(dir / "m.pgm") == m);

  CHECK_THROWS_AS(load_image_pgm(dir / "missing.pgm"), MissingArtifactError);
  CHECK_THROWS_AS(load_image_pgm(dir / "m.pgm"), FormatError);  // maxval 255
  {
    std::ofstream bad(dir / "bad.pgm", std::ios::binary);
    bad << "P2\n2 2\n255\n0 0 0 0\n";
  }
  CHECK_THROWS_AS(load_mask_pgm(dir / "bad.pgm"), FormatError);
  {
    std::ofstream cut(dir / "cut.pgm", std::ios::binary);
    cut << "P5\n4 4\n255\n" << std::string(5, '\0');
  }
  CHECK_THROWS_AS(load_mask_pgm(dir / "cut.pgm"), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("dataset manifest round trip") {
  const fs::path dir = scratch("manifest");
  const Dataset d = generate_phantoms(small(5, 2), vendor_style('C'));
  save_dataset(dir, d);
  const Dataset back = load_dataset(dir / "manifest.tsv");
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back[i].case_id == d[i].case_id);
    CHECK(back[i].vendor == 'C');
    CHECK(back[i].mask == d[i].mask);
    CHECK(testutil::max_abs_diff(back[i].image, d[i].image) <= 1.0 / 65535);
  }
  CHECK_THROWS_AS(load_dataset(dir / "nope.tsv"), MissingArtifactError);
  fs::remove_all(dir);
}

TEST_CASE("resize") {
  const TensorF img = testutil::random_tensor<float>({1, 1, 8, 8}, 9, 0, 1);
  CHECK(resize_to(img, 8, 8) == img);
  const TensorF up = resize_to(TensorF({1, 1, 4, 4}, 0.4f), 8, 8);
  for (float v : up.span()) CHECK(v == doctest::Approx(0.4f));
  LabelMask m(1, 8, 8);
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = static_cast<std::uint8_t>((i * 7) % 4);
  for (auto [h, w] : {std::pair{5, 7}, std::pair{16, 16}, std::pair{3, 11}}) {
    const LabelMask r = resize_mask(m, h, w);
    CHECK(r.h == h);
    for (auto v : r.data) CHECK(v < 4);
  }
  CHECK(resize_mask(m, 8, 8) == m);
}

TEST_CASE("augmentation keeps image and mask aligned") {
  const Dataset d = generate_phantoms(small(2, 1), vendor_style('A'));
  std::mt19937_64 rng(1);
  AugmentOptions all;
  all.probability = 1.0;
  TensorF img = d[2].image;
  LabelMask m = d[2].mask;
  const auto names = augment_sample(img, m, rng, all);
  CHECK(names == std::vector<std::string>{"expand", "flip", "rotation", "mirror", "contrast", "brightness"});
  m.validate();
  for (float v : img.span()) CHECK((v >= 0.f && v <= 1.f));

  AugmentOptions geo = all;
  geo.photometric = false;
  for (int k = 0; k < 20; ++k) {
    TensorF i2 = d[2].image;
    LabelMask m2 = d[2].mask;
    for (const auto& n : augment_sample(i2, m2, rng, geo)) CHECK((n != "contrast" && n != "brightness"));
  }

  AugmentOptions none = all;
  none.probability = 0.0;
  TensorF i3 = d[2].image;
  LabelMask m3 = d[2].mask;
  CHECK(augment_sample(i3, m3, rng, none).empty());
  CHECK(i3 == d[2].image);
}
