// Command-line front end. Exit codes: 0 ok, 1 other failure, 2 usage,
// 3 numeric failure, 4 checkpoint kind mismatch, 5 missing artifact.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "styleinv/checkpoint.hpp"
#include "styleinv/kernels.hpp"
#include "styleinv/pipeline.hpp"

using namespace styleinv;
namespace fs = std::filesystem;

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

void log(const std::string& msg) { std::cerr << "[styleinv] " << msg << '\n'; }

fs::path manifest_path(const std::string& data) {
  const fs::path p(data);
  return fs::is_directory(p) ? p / "manifest.tsv" : p;
}

Dataset filter_vendors(Dataset d, const std::string& vendors) {
  if (vendors.empty()) return d;
  std::erase_if(d, [&](const Slice& s) { return vendors.find(s.vendor) == std::string::npos; });
  if (d.empty()) throw UsageError("no slices for vendors " + vendors);
  return d;
}

RunConfig read_config(const std::string& path) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_config(path);
  cfg.validate();
  return cfg;
}

Dataset read_data(const std::string& data, const std::string& vendors, const RunConfig& cfg) {
  return fit_size(filter_vendors(load_dataset(manifest_path(data)), vendors), cfg.seg.height, cfg.seg.width);
}

// Architecture widths follow the checkpoint, not the config.
SegConfig seg_config_for(const ModelParams<float>& p, SegConfig c) {
  c.base_channels = p.get("enc0.conv0.w").dim(0);
  return c;
}

STConfig st_config_for(const ModelParams<float>& p, STConfig c) {
  c.base_channels = p.get("enc0.conv0.w").dim(0);
  c.levels = 0;
  while (p.contains("enc" + std::to_string(c.levels) + ".conv0.w")) ++c.levels;
  c.decoder_instance_norm = p.contains("dec0.conv0.in.gamma");
  return c;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
}

std::string vendors_of(const Dataset& d) {
  std::string v;
  for (const auto& s : d)
    if (v.find(s.vendor) == std::string::npos) v += s.vendor;
  return v;
}

Dataset only_vendor(const Dataset& d, char v) {
  Dataset out;
  for (const auto& s : d)
    if (s.vendor == v) out.push_back(s);
  return out;
}

void report_pipeline(const RunManifest& m, const fs::path& out) {
  const ExperimentResult r = run_pipeline(m, out, log);
  for (const auto& o : r.outcomes)
    log(o.variant + " vendor " + o.vendor + ": Dice AVG " + std::to_string(o.report.avg.dice));
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return 2;
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  if (dynamic_cast<const CheckpointKindError*>(&e)) return 4;
  if (dynamic_cast<const MissingArtifactError*>(&e)) return 5;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  kernels::configure_threads_from_env();

  CLI::App app{"Style-invariant cardiac segmentation on synthetic phantoms"};
  app.require_subcommand(1);

  std::string data, config, out, vendors, ckpt, seg_ckpt, library, style, pred, overlays, transforms, exp, manifest;
  int cases = 8, slices = 6, top_k = 5;
  std::uint64_t seed = 0;
  std::string size = "64x64", vendor_list = "A,B,C,D";
  bool style_unified = false;

  auto* gen = app.add_subcommand("gen-phantoms", "Generate multi-vendor phantom slices");
  gen->add_option("--vendors", vendor_list, "Comma-separated vendor letters")->capture_default_str();
  gen->add_option("--cases", cases, "Cases per vendor")->capture_default_str();
  gen->add_option("--slices", slices, "Slices per case")->capture_default_str();
  gen->add_option("--size", size, "HxW")->capture_default_str();
  gen->add_option("--seed", seed)->capture_default_str();
  gen->add_option("--out", out)->required();

  auto* tseg = app.add_subcommand("train-seg", "Train the U-Net segmenter");
  tseg->add_option("--data", data, "Dataset directory or manifest")->required();
  tseg->add_option("--config", config, "key = value config file");
  tseg->add_option("--vendors", vendors, "Vendor letters to train on (default all)");
  tseg->add_option("--out", out, "Checkpoint path")->required();
  tseg->add_flag("--style-unified", style_unified, "Disable contrast/brightness augmentation");

  auto* tst = app.add_subcommand("train-st", "Fine-tune the style network on reconstruction");
  tst->add_option("--data", data)->required();
  tst->add_option("--config", config);
  tst->add_option("--vendors", vendors);
  tst->add_option("--out", out)->required();

  auto* blib = app.add_subcommand("build-style-lib", "Library of the best-segmented training cases");
  blib->add_option("--data", data)->required();
  blib->add_option("--seg", seg_ckpt, "Segmenter checkpoint")->required();
  blib->add_option("--config", config);
  blib->add_option("--vendors", vendors);
  blib->add_option("--top-k", top_k)->capture_default_str();
  blib->add_option("--out", out, "Library directory")->required();

  auto* sty = app.add_subcommand("stylize", "Restyle a dataset");
  sty->add_option("--data", data)->required();
  sty->add_option("--ckpt", ckpt, "Style checkpoint")->required();
  sty->add_option("--config", config);
  sty->add_option("--vendors", vendors);
  auto* lib_opt = sty->add_option("--library", library, "Style library manifest (nearest style per slice)");
  sty->add_option("--style", style, "Fixed style slice PGM")->excludes(lib_opt);
  sty->add_option("--out", out, "Output dataset directory")->required();

  auto* seg = app.add_subcommand("segment", "Predict masks");
  auto* tta = app.add_subcommand("tta-segment", "Predict masks with test-time augmentation");
  for (auto* c : {seg, tta}) {
    c->add_option("--data", data)->required();
    c->add_option("--ckpt", ckpt, "Segmenter checkpoint")->required();
    c->add_option("--config", config);
    c->add_option("--vendors", vendors);
    c->add_option("--out", out, "Mask directory")->required();
  }
  tta->add_option("--transforms", transforms, "Comma-separated: identity,hflip,vflip,rot90,rot180,rot270");

  auto* eval = app.add_subcommand("evaluate", "Metrics CSV and contour overlays");
  eval->add_option("--data", data)->required();
  eval->add_option("--pred", pred, "Mask directory")->required();
  eval->add_option("--config", config);
  eval->add_option("--vendors", vendors);
  eval->add_option("--out", out, "CSV path")->required();
  eval->add_option("--overlays", overlays, "Directory for contour overlay PGMs");

  auto* pipe = app.add_subcommand("pipeline", "Run exp1 or exp2 end to end");
  auto* exp_opt = pipe->add_option("--exp", exp)->check(CLI::IsMember({"exp1", "exp2"}));
  pipe->add_option("--data", data);
  pipe->add_option("--config", config);
  pipe->add_option("--manifest", manifest, "Rerun from a run manifest")->excludes(exp_opt);
  pipe->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      if (cases < 1 || slices < 1) throw UsageError("--cases and --slices must be positive");
      int h = 0, w = 0;
      char x = 0;
      std::istringstream ss(size);
      if (!(ss >> h >> x >> w) || x != 'x' || h < 16 || w < 16) throw UsageError("--size expects HxW, e.g. 64x64");
      std::string letters;
      for (char c : vendor_list)
        if (c != ',') letters += c;
      for (char c : letters)
        if (c < 'A' || c > 'D') throw UsageError("--vendors expects letters A-D");
      PhantomOptions o{cases, slices, h, w, seed};
      save_dataset(out, generate_vendor_sets(o, letters));
      log("wrote " + std::to_string(letters.size() * cases * slices) + " slices to " + out);
    } else if (*tseg) {
      RunConfig cfg = read_config(config);
      if (style_unified) cfg.seg.style_unified = true;
      const Dataset d = read_data(data, vendors, cfg);
      const SegTrainResult r = train_seg(d, cfg.seg, [&](const TrainLogEntry& e) {
        if (e.iteration % 100 == 0) log("iter " + std::to_string(e.iteration) + " loss " + std::to_string(e.loss));
      });
      save_checkpoint(out, r.params, NetKind::seg);
      write_file(out + ".loss.csv", seg_log_csv(r.log));
    } else if (*tst) {
      const RunConfig cfg = read_config(config);
      const Dataset d = read_data(data, vendors, cfg);
      const STTrainResult r = finetune_reconstruction(d, build_st(cfg.st), cfg.st, [](int it, double loss) {
        if (it % 100 == 0) log("iter " + std::to_string(it) + " loss " + std::to_string(loss));
      });
      save_checkpoint(out, r.params, NetKind::st);
      write_file(out + ".loss.csv", st_log_csv(r.losses));
    } else if (*blib) {
      const RunConfig cfg = read_config(config);
      const ModelParams<float> p = load_checkpoint(seg_ckpt, NetKind::seg);
      const Dataset d = read_data(data, vendors, cfg);
      const StyleLibrary lib = build_style_library(d, segment_dataset(p, d, seg_config_for(p, cfg.seg)), top_k);
      save_style_library(out, lib);
      log("library of " + std::to_string(lib.size()) + " slices in " + out);
    } else if (*sty) {
      const RunConfig cfg = read_config(config);
      const ModelParams<float> p = load_checkpoint(ckpt, NetKind::st);
      const STConfig sc = st_config_for(p, cfg.st);
      Dataset d = read_data(data, vendors, cfg);
      if (!style.empty()) {
        if (!fs::exists(style)) throw MissingArtifactError("style slice not found: " + style);
        d = stylize_dataset(d, resize_to(load_image_pgm(style), cfg.seg.height, cfg.seg.width), p, sc);
      } else {
        if (library.empty()) throw UsageError("stylize needs --library or --style");
        const StyleLibrary lib = load_style_library(library);
        for (auto& s : d) s.image = stylize(p, s.image, select_style(s.image, lib).image, sc);
      }
      save_dataset(out, d);
    } else if (*seg || *tta) {
      const RunConfig cfg = read_config(config);
      const ModelParams<float> p = load_checkpoint(ckpt, NetKind::seg);
      const SegConfig sc = seg_config_for(p, cfg.seg);
      const Dataset d = read_data(data, vendors, cfg);
      const auto masks = *seg ? segment_dataset(p, d, sc)
                              : tta_segment_dataset(p, d, sc,
                                                    transforms.empty() ? cfg.pipeline.transforms
                                                                       : parse_transforms(transforms));
      save_predictions(out, d, masks);
    } else if (*eval) {
      const RunConfig cfg = read_config(config);
      const Dataset d = read_data(data, vendors, cfg);
      const auto preds = load_predictions(pred, d);
      std::string csv;
      for (char v : vendors_of(d)) {
        const Dataset dv = only_vendor(d, v);
        csv += report_csv(evaluate_dataset(dv, load_predictions(pred, dv)), std::string(1, v), csv.empty());
      }
      write_file(out, csv);
      if (!overlays.empty())
        for (std::size_t i = 0; i < d.size(); ++i)
          for (int c = 1; c < kNumClasses; ++c) {
            std::string name = mask_filename(d[i]);
            name = name.substr(0, name.size() - 4) + "_" + structure_name(c) + ".pgm";
            save_overlay_pgm(fs::path(overlays) / name, d[i], preds[i], c);
          }
    } else if (*pipe) {
      RunManifest m;
      if (!manifest.empty()) {
        m = load_run_manifest(manifest);
      } else {
        if (exp.empty() || data.empty()) throw UsageError("pipeline needs --exp and --data, or --manifest");
        const RunConfig cfg = read_config(config);
        m.experiment = exp;
        m.data_manifest = fs::absolute(manifest_path(data)).string();
        m.config = config_keys(cfg);
        m.seg_seed = cfg.seg.seed;
        m.st_seed = cfg.st.seed;
        m.style_seed = cfg.pipeline.style_seed;
      }
      report_pipeline(m, out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}
