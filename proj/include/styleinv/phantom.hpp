#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "styleinv/labels.hpp"
#include "styleinv/tensor.hpp"

namespace styleinv {

/// Appearance of one synthetic "vendor". Applied to the anatomy as
/// gain * base + bias, plus smooth texture, Gaussian blur and white noise.
struct VendorStyle {
  char id = 'A';
  double intensity_gain = 1.0;
  double intensity_bias = 0.0;
  double noise_sigma = 0.02;
  double texture_scale = 0.03;
  double blur_sigma = 0.0;
};

/// Built-in styles A..D; D is the most extreme shift.
VendorStyle vendor_style(char id);

struct Slice {
  TensorF image;  // (1, 1, H, W), intensities in [0, 1]
  LabelMask mask;  // (1, H, W)
  std::string case_id;
  char vendor = 'A';
  int index = 0;  // position in the case's stack
};

using Dataset = std::vector<Slice>;

struct PhantomOptions {
  int n_cases = 1;
  int slices_per_case = 6;
  int height = 64;
  int width = 64;
  std::uint64_t seed = 0;
};

/// Ellipse-based LV / MYO / RV anatomy per case with per-slice deformation,
/// rendered in the given vendor style. Geometry depends only on (seed, case
/// index); appearance noise additionally depends on the vendor.
Dataset generate_phantoms(const PhantomOptions& opts, const VendorStyle& vendor);

/// Concatenated sets for several vendor letters. Each vendor draws its own
/// anatomy, so no case geometry is shared across vendors.
Dataset generate_vendor_sets(const PhantomOptions& opts, const std::string& vendors);

/// Label layout of one slice of one case (no appearance).
LabelMask phantom_labels(std::uint64_t seed, int case_index, int slice_index, int slices_per_case, int height,
                         int width);

/// Bilinear resize (half-pixel centres, edge clamped) of a (N, C, H, W) image.
TensorF resize_to(const TensorF& image, int height, int width);
/// Nearest-neighbour resize of a label mask.
LabelMask resize_mask(const LabelMask& mask, int height, int width);

/// Global mean and population standard deviation of an image.
struct IntensityStats {
  double mean = 0;
  double std = 0;
};
IntensityStats intensity_stats(const TensorF& image);

/// Distinct case ids in first-appearance order, and the slices of each.
std::vector<std::string> case_ids(const Dataset& data);
std::vector<std::size_t> slices_of_case(const Dataset& data, const std::string& case_id);

// --- files -----------------------------------------------------------------

/// 16-bit binary PGM (maxval 65535, big-endian samples), [0,1] mapped linearly.
void save_image_pgm(const std::filesystem::path& path, const TensorF& image);
TensorF load_image_pgm(const std::filesystem::path& path);
/// 8-bit binary PGM (maxval 255) holding class indices 0..3.
void save_mask_pgm(const std::filesystem::path& path, const LabelMask& mask);
LabelMask load_mask_pgm(const std::filesystem::path& path);

/// Tab-separated lines `case_id  vendor  slice_path  mask_path`, paths relative
/// to the manifest's directory.
void save_dataset(const std::filesystem::path& dir, const Dataset& data,
                  const std::string& manifest_name = "manifest.tsv");
Dataset load_dataset(const std::filesystem::path& manifest);

}  // namespace styleinv
