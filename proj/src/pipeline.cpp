#include "styleinv/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "styleinv/checkpoint.hpp"

namespace styleinv {

namespace {

constexpr std::size_t kChunk = 16;

template <typename F>
std::vector<LabelMask> per_chunk(const Dataset& data, F&& predict) {
  std::vector<LabelMask> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); i += kChunk) {
    std::vector<const TensorF*> batch;
    for (std::size_t j = i; j < std::min(data.size(), i + kChunk); ++j) batch.push_back(&data[j].image);
    const LabelMask m = predict(stack_images(batch));
    for (int b = 0; b < m.n; ++b) out.push_back(m.slice(b));
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
}

void say(const PipelineProgress& p, const std::string& msg) {
  if (p) p(msg);
}

// Training vendor slices restyled to one seeded vendor-A slice (or the first
// training vendor if A is absent).
std::size_t pick_style_slice(const Dataset& train, std::uint64_t seed) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < train.size(); ++i)
    if (train[i].vendor == 'A') pool.push_back(i);
  if (pool.empty())
    for (std::size_t i = 0; i < train.size(); ++i) pool.push_back(i);
  std::mt19937_64 rng(seed);
  return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
}

std::string slice_id(const Slice& s) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_s%02d", s.index);
  return s.case_id + buf;
}

}  // namespace

DataSplit split_for_pipeline(const Dataset& all, const PipelineSettings& s) {
  DataSplit out;
  std::map<char, int> seen;
  std::map<std::string, bool> is_train;
  for (const auto& id : case_ids(all)) {
    const char v = all[slices_of_case(all, id).front()].vendor;
    const bool train = s.train_vendors.find(v) != std::string::npos && seen[v]++ < s.train_cases;
    is_train[id] = train;
  }
  for (const auto& sl : all) {
    if (is_train[sl.case_id])
      out.train.push_back(sl);
    else if (s.test_vendors.find(sl.vendor) != std::string::npos)
      out.test[sl.vendor].push_back(sl);
  }
  if (out.train.empty()) throw Error("pipeline: no training slices for vendors " + s.train_vendors);
  for (char v : s.test_vendors)
    if (!out.test.count(v)) throw Error(std::string("pipeline: no held-out slices for test vendor ") + v);
  return out;
}

const VariantOutcome& ExperimentResult::outcome(const std::string& variant, char vendor) const {
  for (const auto& o : outcomes)
    if (o.variant == variant && o.vendor == vendor) return o;
  throw Error("no outcome for " + variant + " on vendor " + std::string(1, vendor));
}

std::vector<std::string> experiment_variants(const std::string& experiment) {
  if (experiment == "exp1") return {"SegO", "STSegO", "STSegO-TTA"};
  if (experiment == "exp2") return {"SegST", "SegST-TTA"};
  throw Error("unknown experiment '" + experiment + "' (expected exp1 or exp2)");
}

std::vector<LabelMask> segment_dataset(const ModelParams<float>& seg, const Dataset& data, const SegConfig& cfg) {
  return per_chunk(data, [&](const TensorF& x) { return segment(seg, x, cfg).labels; });
}

std::vector<LabelMask> tta_segment_dataset(const ModelParams<float>& seg, const Dataset& data, const SegConfig& cfg,
                                           const std::vector<GeoTransform>& transforms) {
  return per_chunk(data, [&](const TensorF& x) { return tta_predict(x, seg, cfg, transforms); });
}

MetricsReport evaluate_dataset(const Dataset& data, const std::vector<LabelMask>& predictions) {
  if (predictions.size() != data.size())
    throw ShapeError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(data.size()) + " slices");
  std::vector<LabelMask> preds, gts;
  for (const auto& id : case_ids(data)) {
    std::vector<const LabelMask*> p, g;
    for (std::size_t i : slices_of_case(data, id)) {
      p.push_back(&predictions[i]);
      g.push_back(&data[i].mask);
    }
    preds.push_back(stack_masks(p));
    gts.push_back(stack_masks(g));
  }
  return evaluate_cases(preds, gts);
}

ExperimentResult run_experiment(const std::string& experiment, const DataSplit& data, const RunConfig& cfg,
                                const PipelineProgress& progress) {
  cfg.validate();
  experiment_variants(experiment);
  ExperimentResult r;
  r.experiment = experiment;

  say(progress, "fine-tuning style network");
  STTrainResult st = finetune_reconstruction(data.train, build_st(cfg.st), cfg.st);
  r.st = std::move(st.params);
  r.st_losses = std::move(st.losses);

  auto add = [&](const std::string& variant, char v, const Dataset& truth, std::vector<LabelMask> preds) {
    VariantOutcome o{variant, v, std::move(preds), {}};
    o.report = evaluate_dataset(truth, o.predictions);
    r.outcomes.push_back(std::move(o));
  };

  if (experiment == "exp1") {
    say(progress, "training segmenter on original data");
    SegTrainResult seg = train_seg(data.train, cfg.seg);
    r.seg = std::move(seg.params);
    r.seg_log = std::move(seg.log);
    say(progress, "building style library");
    r.library = build_style_library(data.train, segment_dataset(r.seg, data.train, cfg.seg), cfg.pipeline.top_k);
    for (const auto& [v, test] : data.test) {
      say(progress, std::string("evaluating vendor ") + v);
      Dataset styled = test;
      for (auto& s : styled) s.image = stylize(r.st, s.image, select_style(s.image, r.library).image, cfg.st);
      add("SegO", v, test, segment_dataset(r.seg, test, cfg.seg));
      add("STSegO", v, test, segment_dataset(r.seg, styled, cfg.seg));
      add("STSegO-TTA", v, test, tta_segment_dataset(r.seg, styled, cfg.seg, cfg.pipeline.transforms));
    }
  } else {
    const Slice& style = data.train[pick_style_slice(data.train, cfg.pipeline.style_seed)];
    r.style_slice_id = slice_id(style);
    say(progress, "restyling training data to " + r.style_slice_id);
    const Dataset unified = stylize_dataset(data.train, style.image, r.st, cfg.st);
    SegConfig sc = cfg.seg;
    sc.style_unified = true;
    say(progress, "training segmenter on style-unified data");
    SegTrainResult seg = train_seg(unified, sc);
    r.seg = std::move(seg.params);
    r.seg_log = std::move(seg.log);
    for (const auto& [v, test] : data.test) {
      say(progress, std::string("evaluating vendor ") + v);
      const Dataset styled = stylize_dataset(test, style.image, r.st, cfg.st);
      add("SegST", v, test, segment_dataset(r.seg, styled, sc));
      add("SegST-TTA", v, test, tta_segment_dataset(r.seg, styled, sc, cfg.pipeline.transforms));
    }
  }
  return r;
}

std::string mask_filename(const Slice& s) { return std::string(1, s.vendor) + "/" + slice_id(s) + ".pgm"; }

void save_predictions(const std::filesystem::path& dir, const Dataset& data, const std::vector<LabelMask>& preds) {
  if (preds.size() != data.size()) throw ShapeError("save_predictions: prediction count differs from dataset");
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto path = dir / mask_filename(data[i]);
    std::filesystem::create_directories(path.parent_path());
    save_mask_pgm(path, preds[i]);
  }
}

std::vector<LabelMask> load_predictions(const std::filesystem::path& dir, const Dataset& data) {
  std::vector<LabelMask> out;
  for (const auto& s : data) {
    const auto path = dir / mask_filename(s);
    if (!std::filesystem::exists(path)) throw MissingArtifactError("prediction not found: " + path.string());
    out.push_back(load_mask_pgm(path));
    if (out.back().h != s.mask.h || out.back().w != s.mask.w)
      throw ShapeError(path.string() + ": extent differs from the ground truth");
  }
  return out;
}

void save_overlay_pgm(const std::filesystem::path& path, const Slice& s, const LabelMask& pred, int structure) {
  const int h = s.mask.h, w = s.mask.w;
  std::vector<std::uint8_t> px(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      px[static_cast<std::size_t>(y) * w + x] =
          static_cast<std::uint8_t>(40 + std::lround(170.0 * std::clamp(s.image.at(0, 0, y, x), 0.f, 1.f)));
  for (const auto& p : boundary(class_mask(s.mask, 0, structure))) px[static_cast<std::size_t>(p.y) * w + p.x] = 0;
  for (const auto& p : boundary(class_mask(pred, 0, structure))) px[static_cast<std::size_t>(p.y) * w + p.x] = 255;
  std::ostringstream os;
  os << "P5\n" << w << ' ' << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  write_text(path, os.str());
}

std::string seg_log_csv(const std::vector<TrainLogEntry>& log) {
  std::ostringstream os;
  os.precision(9);
  os << "iteration,loss,lr,augmentations\n";
  for (const auto& e : log) {
    os << e.iteration << ',' << e.loss << ',' << e.lr << ',';
    for (std::size_t i = 0; i < e.augmentations.size(); ++i) os << (i ? ";" : "") << e.augmentations[i];
    os << '\n';
  }
  return os.str();
}

std::string st_log_csv(const std::vector<double>& losses) {
  std::ostringstream os;
  os.precision(9);
  os << "iteration,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) os << i << ',' << losses[i] << '\n';
  return os.str();
}

std::vector<std::string> write_experiment(const std::filesystem::path& dir, const ExperimentResult& r,
                                          const DataSplit& data) {
  std::vector<std::string> written;
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "seg.ckpt", r.seg, NetKind::seg);
  save_checkpoint(dir / "st.ckpt", r.st, NetKind::st);
  write_text(dir / "seg_loss.csv", seg_log_csv(r.seg_log));
  write_text(dir / "st_loss.csv", st_log_csv(r.st_losses));
  written.insert(written.end(), {"seg.ckpt", "st.ckpt", "seg_loss.csv", "st_loss.csv"});
  if (!r.library.empty()) {
    save_style_library(dir / "style_library", r.library);
    written.push_back("style_library/library.tsv");
  }
  for (const auto& variant : experiment_variants(r.experiment)) {
    std::string csv;
    for (const auto& [v, test] : data.test) {
      const VariantOutcome& o = r.outcome(variant, v);
      csv += report_csv(o.report, std::string(1, v), csv.empty());
      save_predictions(dir / "masks" / variant, test, o.predictions);
    }
    write_text(dir / (variant + ".csv"), csv);
    written.push_back(variant + ".csv");
    written.push_back("masks/" + variant);
  }
  return written;
}

void save_run_manifest(const std::filesystem::path& path, const RunManifest& m) {
  nlohmann::ordered_json j;
  j["experiment"] = m.experiment;
  j["data_manifest"] = m.data_manifest;
  j["seeds"] = {{"seg", m.seg_seed}, {"st", m.st_seed}, {"style", m.style_seed}};
  j["config"] = m.config;
  if (!m.style_slice_id.empty()) j["style_slice_id"] = m.style_slice_id;
  if (!m.style_library.empty()) j["style_library"] = m.style_library;
  j["outputs"] = m.outputs;
  write_text(path, j.dump(2) + "\n");
}

RunManifest load_run_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifactError("run manifest not found: " + path.string());
  try {
    const auto j = nlohmann::json::parse(is);
    RunManifest m;
    m.experiment = j.at("experiment").get<std::string>();
    m.data_manifest = j.at("data_manifest").get<std::string>();
    m.seg_seed = j.at("seeds").at("seg").get<std::uint64_t>();
    m.st_seed = j.at("seeds").at("st").get<std::uint64_t>();
    m.style_seed = j.at("seeds").at("style").get<std::uint64_t>();
    m.config = j.at("config").get<KeyValues>();
    m.style_slice_id = j.value("style_slice_id", "");
    m.style_library = j.value("style_library", "");
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Dataset fit_size(Dataset d, int h, int w) {
  for (auto& s : d)
    if (s.mask.h != h || s.mask.w != w) {
      s.image = resize_to(s.image, h, w);
      s.mask = resize_mask(s.mask, h, w);
    }
  return d;
}

ExperimentResult run_pipeline(const RunManifest& m, const std::filesystem::path& out, const PipelineProgress& progress) {
  const RunConfig cfg = config_from_keys(m.config);
  cfg.validate();
  const DataSplit split =
      split_for_pipeline(fit_size(load_dataset(m.data_manifest), cfg.seg.height, cfg.seg.width), cfg.pipeline);
  ExperimentResult r = run_experiment(m.experiment, split, cfg, progress);
  RunManifest done = m;
  done.outputs = write_experiment(out, r, split);
  done.style_slice_id = r.style_slice_id;
  done.style_library = r.library.empty() ? "" : "style_library/library.tsv";
  save_run_manifest(out / "run_manifest.json", done);
  return r;
}

}  // namespace styleinv
