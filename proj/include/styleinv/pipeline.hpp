#pragma once

// End-to-end experiments.
//
// exp1: segmenter trained on the original training vendors. Variants on each
//   test vendor: SegO (raw input), STSegO (input restyled to the nearest
//   library slice) and STSegO-TTA (the same with test-time augmentation).
// exp2: every training and test slice restyled to one seeded vendor-A slice,
//   segmenter trained on that with photometric augmentation off. Variants:
//   SegST and SegST-TTA.

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "styleinv/config.hpp"
#include "styleinv/metrics.hpp"

namespace styleinv {

struct DataSplit {
  Dataset train;
  std::map<char, Dataset> test;
};

/// The first `train_cases` cases of each training vendor train; the rest of
/// those vendors and every case of other test vendors are held out.
DataSplit split_for_pipeline(const Dataset& all, const PipelineSettings& s);

struct VariantOutcome {
  std::string variant;
  char vendor = 'A';
  std::vector<LabelMask> predictions;  // one (1,H,W) mask per test slice
  MetricsReport report;
};

struct ExperimentResult {
  std::string experiment;
  ModelParams<float> seg;
  ModelParams<float> st;
  std::vector<TrainLogEntry> seg_log;
  std::vector<double> st_losses;
  StyleLibrary library;        // exp1
  std::string style_slice_id;  // exp2

  std::vector<VariantOutcome> outcomes;
  const VariantOutcome& outcome(const std::string& variant, char vendor) const;
};

std::vector<std::string> experiment_variants(const std::string& experiment);

using PipelineProgress = std::function<void(const std::string&)>;

/// experiment is "exp1" or "exp2".
ExperimentResult run_experiment(const std::string& experiment, const DataSplit& data, const RunConfig& cfg,
                                const PipelineProgress& progress = {});

/// Argmax masks for every slice, batched.
std::vector<LabelMask> segment_dataset(const ModelParams<float>& seg, const Dataset& data, const SegConfig& cfg);
std::vector<LabelMask> tta_segment_dataset(const ModelParams<float>& seg, const Dataset& data, const SegConfig& cfg,
                                           const std::vector<GeoTransform>& transforms);

/// Groups per-slice predictions by case and evaluates against the slice masks.
MetricsReport evaluate_dataset(const Dataset& data, const std::vector<LabelMask>& predictions);

/// Relative path `<vendor>/<case_id>_sNN.pgm` used for predicted masks.
std::string mask_filename(const Slice& s);
void save_predictions(const std::filesystem::path& dir, const Dataset& data, const std::vector<LabelMask>& preds);
std::vector<LabelMask> load_predictions(const std::filesystem::path& dir, const Dataset& data);

/// 8-bit image of one slice with the ground-truth contour of `structure`
/// drawn black and the predicted contour white.
void save_overlay_pgm(const std::filesystem::path& path, const Slice& s, const LabelMask& pred, int structure);

/// Training losses as CSV.
std::string seg_log_csv(const std::vector<TrainLogEntry>& log);
std::string st_log_csv(const std::vector<double>& losses);

/// Writes checkpoints, logs, the style library (exp1), one report CSV per
/// variant and the predicted masks. Returns the written paths relative to dir.
std::vector<std::string> write_experiment(const std::filesystem::path& dir, const ExperimentResult& r,
                                          const DataSplit& data);

struct RunManifest {
  std::string experiment;
  std::string data_manifest;  // dataset manifest the run read
  KeyValues config;           // full config snapshot
  std::uint64_t seg_seed = 0;
  std::uint64_t st_seed = 0;
  std::uint64_t style_seed = 0;
  std::string style_slice_id;  // exp2
  std::string style_library;   // exp1, relative to the output dir
  std::vector<std::string> outputs;
};

void save_run_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest load_run_manifest(const std::filesystem::path& path);

/// Resizes every slice that does not already have the given extent.
Dataset fit_size(Dataset d, int h, int w);

/// Loads the manifest's data and config, runs the experiment, writes its
/// outputs and `run_manifest.json` into out.
ExperimentResult run_pipeline(const RunManifest& m, const std::filesystem::path& out,
                              const PipelineProgress& progress = {});

}  // namespace styleinv
