#pragma once

// Overlap and boundary-distance metrics for 2D label masks.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "styleinv/error.hpp"
#include "styleinv/labels.hpp"

namespace styleinv {

struct BinaryMask {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> data;  // 0 or 1, row-major

  BinaryMask() = default;
  BinaryMask(int h_, int w_) : h(h_), w(w_), data(static_cast<std::size_t>(h_) * w_, 0) {}
  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * w + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * w + x]; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
};

/// Pixels of slice b equal to class c.
BinaryMask class_mask(const LabelMask& labels, int b, int c);

struct Overlap {
  double dice = 0;
  double jaccard = 0;
};

/// Fractional Dice and Jaccard. Two empty masks score 1.
Overlap dice_jaccard(const BinaryMask& pred, const BinaryMask& gt);

struct Point {
  int y = 0;
  int x = 0;
  bool operator==(const Point&) const = default;
};

/// Mask pixels with a 4-neighbour outside the mask or outside the image.
std::vector<Point> boundary(const BinaryMask& mask);

/// Thrown by the distance metrics when either mask is empty.
class EmptyMaskError : public Error {
 public:
  using Error::Error;
};

/// Symmetric Hausdorff distance between the boundaries, in pixels.
double hdb(const BinaryMask& pred, const BinaryMask& gt);
/// Average symmetric surface distance between the boundaries, in pixels.
double assd(const BinaryMask& pred, const BinaryMask& gt);

struct StructureMetrics {
  double dice = 0;     // percent
  double jaccard = 0;  // percent
  double hdb = 0;      // pixels
  double assd = 0;     // pixels
  int distance_cases = 0;     // cases contributing to hdb / assd
  int excluded_slices = 0;    // slices skipped for distances (empty prediction or truth)
};

struct MetricsReport {
  std::array<StructureMetrics, 3> structures;  // LV, MYO, RV
  StructureMetrics avg;
  int cases = 0;
};

/// Per slice metrics averaged per case, then arithmetically over cases.
/// preds[i] and gts[i] hold all slices of case i.
MetricsReport evaluate_cases(const std::vector<LabelMask>& preds, const std::vector<LabelMask>& gts);

/// Mean over the three structures of the per-slice Dice, as a fraction.
double mean_structure_dice(const LabelMask& pred, const LabelMask& gt);

/// CSV rows `metric,structure,vendor,value`, AVG then LV, MYO, RV blocks,
/// each block listing Dice, Jac, HDB, ASSD. Values use two decimals.
std::string report_csv(const MetricsReport& report, const std::string& vendor, bool header = true);

}  // namespace styleinv
