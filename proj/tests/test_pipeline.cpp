#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "styleinv/checkpoint.hpp"
#include "styleinv/pipeline.hpp"

using namespace styleinv;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config() {
  RunConfig c;
  c.seg.height = c.seg.width = 32;
  c.seg.base_channels = 4;
  c.seg.iterations = 20;
  c.seg.batch_size = 4;
  c.st.base_channels = 4;
  c.st.iterations = 10;
  c.st.batch_size = 2;
  c.pipeline.train_cases = 2;
  c.pipeline.top_k = 2;
  return c;
}

Dataset tiny_data() {
  PhantomOptions o;
  o.n_cases = 3;
  o.slices_per_case = 4;
  o.height = o.width = 32;
  o.seed = 2;
  return generate_vendor_sets(o, "ABCD");
}

std::map<std::string, std::string> read_tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream is(e.path(), std::ios::binary);
    files[fs::relative(e.path(), dir).string()] = {std::istreambuf_iterator<char>(is), {}};
  }
  return files;
}

}  // namespace

TEST_CASE("vendor sets and the pipeline split") {
  const Dataset all = tiny_data();
  CHECK(all.size() == 4 * 3 * 4);
  // Vendors do not share anatomy.
  CHECK_FALSE(all[0].mask == all[12].mask);

  const DataSplit s = split_for_pipeline(all, tiny_config().pipeline);
  CHECK(s.train.size() == 2 * 2 * 4);
  std::set<std::string> train_ids;
  for (const auto& sl : s.train) {
    CHECK((sl.vendor == 'A' || sl.vendor == 'B'));
    train_ids.insert(sl.case_id);
  }
  CHECK(s.test.at('A').size() == 4);
  CHECK(s.test.at('C').size() == 12);
  for (const auto& [v, d] : s.test)
    for (const auto& sl : d) CHECK_FALSE(train_ids.count(sl.case_id));

  PipelineSettings none = tiny_config().pipeline;
  none.train_vendors = "AB";
  none.train_cases = 3;
  none.test_vendors = "AD";
  CHECK_THROWS(split_for_pipeline(all, none));  // no held-out A cases
}

TEST_CASE("exp1 and exp2 run end to end and are reproducible") {
  const RunConfig cfg = tiny_config();
  const DataSplit data = split_for_pipeline(tiny_data(), cfg.pipeline);
  const fs::path root = fs::temp_directory_path() / "styleinv_test_pipeline";
  fs::remove_all(root);

  for (const std::string exp : {"exp1", "exp2"}) {
    const ExperimentResult r = run_experiment(exp, data, cfg);
    CHECK(r.outcomes.size() == experiment_variants(exp).size() * 4);
    for (const auto& o : r.outcomes) {
      CHECK(o.predictions.size() == data.test.at(o.vendor).size());
      CHECK(o.report.cases == 3 - (o.vendor <= 'B' ? 2 : 0));
    }
    if (exp == "exp1") {
      CHECK(r.library.size() == 2 * 4);
    } else {
      CHECK(r.style_slice_id.rfind("A_case", 0) == 0);
      for (const auto& e : r.seg_log)
        for (const auto& a : e.augmentations) CHECK((a != "contrast" && a != "brightness"));
    }
    const auto written = write_experiment(root / (exp + "_a"), r, data);
    for (const auto& v : experiment_variants(exp)) CHECK(fs::exists(root / (exp + "_a") / (v + ".csv")));
    CHECK(load_checkpoint(root / (exp + "_a") / "seg.ckpt", NetKind::seg) == r.seg);

    const ExperimentResult again = run_experiment(exp, data, cfg);
    write_experiment(root / (exp + "_b"), again, data);
    CHECK(read_tree(root / (exp + "_a")) == read_tree(root / (exp + "_b")));

    const auto masks = load_predictions(root / (exp + "_a") / "masks" / experiment_variants(exp)[0], data.test.at('C'));
    CHECK(masks == r.outcome(experiment_variants(exp)[0], 'C').predictions);
  }

  // Identity-only TTA equals the plain prediction.
  RunConfig plain = cfg;
  plain.pipeline.transforms = {GeoTransform::identity};
  const ExperimentResult r = run_experiment("exp1", data, plain);
  for (char v : {'A', 'D'}) CHECK(r.outcome("STSegO-TTA", v).predictions == r.outcome("STSegO", v).predictions);

  CHECK_THROWS(run_experiment("exp3", data, cfg));
  fs::remove_all(root);
}

TEST_CASE("overlay images") {
  const Dataset d = tiny_data();
  const fs::path dir = fs::temp_directory_path() / "styleinv_test_overlay";
  fs::remove_all(dir);
  save_overlay_pgm(dir / "o.pgm", d[1], d[1].mask, 2);
  std::ifstream is(dir / "o.pgm", std::ios::binary);
  std::string magic;
  int w, h, maxval;
  is >> magic >> w >> h >> maxval;
  is.get();
  std::vector<unsigned char> px(static_cast<std::size_t>(w * h));
  is.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  CHECK(magic == "P5");
  CHECK(maxval == 255);
  // Perfect prediction: the predicted contour covers the ground-truth one.
  const auto contour = boundary(class_mask(d[1].mask, 0, 2));
  REQUIRE_FALSE(contour.empty());
  for (const auto& p : contour) CHECK(px[static_cast<std::size_t>(p.y * w + p.x)] == 255);
  fs::remove_all(dir);
}
