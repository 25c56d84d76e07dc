#pragma once

// Flat `key = value` run configuration. Blank lines and text after '#' are
// ignored; unknown keys are errors. Keys and defaults:
//
//   seg.height 64, seg.width 64, seg.base_channels 16, seg.lambda_dice 0.5,
//   seg.lr_initial 1e-3, seg.lr_final 1e-5, seg.lr_drop_at 0.8,
//   seg.iterations 2000, seg.batch_size 8, seg.seed 0,
//   seg.upsample nearest|bilinear, seg.style_unified false
//   aug.probability 0.5, aug.expand_min_scale 0.8, aug.rotation_jitter_deg 15,
//   aug.contrast_range 0.15, aug.brightness_range 0.06
//   st.levels 2, st.base_channels 16, st.iterations 600, st.batch_size 4,
//   st.lr 1e-3, st.seed 0, st.decoder_instance_norm true
//   pipeline.top_k 5, pipeline.transforms identity,hflip,vflip,rot90,
//   pipeline.style_seed 0, pipeline.train_vendors AB, pipeline.train_cases 8,
//   pipeline.test_vendors ABCD

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "styleinv/segnet.hpp"
#include "styleinv/style_transfer.hpp"
#include "styleinv/tta.hpp"

namespace styleinv {

struct PipelineSettings {
  int top_k = 5;
  std::vector<GeoTransform> transforms = default_transforms();
  std::uint64_t style_seed = 0;
  std::string train_vendors = "AB";
  int train_cases = 8;  // per training vendor; later cases of that vendor are held out
  std::string test_vendors = "ABCD";
};

struct RunConfig {
  SegConfig seg;
  STConfig st;
  PipelineSettings pipeline;
  void validate() const;
};

using KeyValues = std::map<std::string, std::string>;

/// Throws FormatError naming `origin` and the line on malformed input.
KeyValues parse_key_values(const std::string& text, const std::string& origin = "config");

/// Applies keys over the defaults. Throws FormatError on unknown keys or bad values.
RunConfig config_from_keys(const KeyValues& kv);
RunConfig load_config(const std::filesystem::path& path);

/// Every key with its current value; parsing it back yields the same config.
KeyValues config_keys(const RunConfig& cfg);
std::string format_config(const RunConfig& cfg);

}  // namespace styleinv
