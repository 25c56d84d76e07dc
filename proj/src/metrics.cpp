#include "styleinv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace styleinv {

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

BinaryMask class_mask(const LabelMask& labels, int b, int c) {
  if (b < 0 || b >= labels.n) throw ShapeError("class_mask: slice index out of range");
  BinaryMask m(labels.h, labels.w);
  const std::size_t off = static_cast<std::size_t>(b) * labels.plane();
  for (std::size_t i = 0; i < labels.plane(); ++i) m.data[i] = labels.data[off + i] == c ? 1 : 0;
  return m;
}

namespace {

void require_same_shape(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (a.h != b.h || a.w != b.w)
    throw ShapeError(std::string(what) + ": mask extents " + std::to_string(a.h) + "x" + std::to_string(a.w) +
                     " vs " + std::to_string(b.h) + "x" + std::to_string(b.w));
}

using Dist2 = std::int64_t;
constexpr Dist2 kFar = std::numeric_limits<Dist2>::max() / 4;

// One-dimensional squared distance transform (lower envelope of parabolas).
void edt_1d(const std::vector<Dist2>& f, std::vector<Dist2>& d) {
  const int n = static_cast<int>(f.size());
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] >= kFar) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -std::numeric_limits<double>::infinity();
      z[1] = std::numeric_limits<double>::infinity();
      continue;
    }
    auto meet = [&](int p) {
      return (static_cast<double>(f[q] + Dist2(q) * q) - static_cast<double>(f[p] + Dist2(p) * p)) /
             (2.0 * (q - p));
    };
    double s = meet(v[k]);
    while (s <= z[k]) s = meet(v[--k]);
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), kFar);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const Dist2 dq = q - v[j];
    d[q] = f[v[j]] + dq * dq;
  }
}

// Exact squared Euclidean distance from every pixel to the nearest site.
std::vector<Dist2> squared_distance_map(int h, int w, const std::vector<Point>& sites) {
  std::vector<Dist2> grid(static_cast<std::size_t>(h) * w, kFar);
  for (const auto& p : sites) grid[static_cast<std::size_t>(p.y) * w + p.x] = 0;
  std::vector<Dist2> f(h), d(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = grid[static_cast<std::size_t>(y) * w + x];
    edt_1d(f, d);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = d[y];
  }
  f.resize(w);
  d.resize(w);
  for (int y = 0; y < h; ++y) {
    std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(y) * w, w, f.begin());
    edt_1d(f, d);
    std::copy(d.begin(), d.end(), grid.begin() + static_cast<std::ptrdiff_t>(y) * w);
  }
  return grid;
}

// Distances from each point of `from` to the nearest point of `to`.
std::vector<double> surface_distances(const std::vector<Point>& from, const std::vector<Point>& to, int h, int w) {
  const auto grid = squared_distance_map(h, w, to);
  std::vector<double> out;
  out.reserve(from.size());
  for (const auto& p : from) out.push_back(std::sqrt(static_cast<double>(grid[static_cast<std::size_t>(p.y) * w + p.x])));
  return out;
}

struct BoundaryDistances {
  std::vector<double> ab, ba;
};

BoundaryDistances boundary_distances(const BinaryMask& pred, const BinaryMask& gt, const char* what) {
  require_same_shape(pred, gt, what);
  if (pred.empty() || gt.empty()) throw EmptyMaskError(std::string(what) + ": empty mask");
  const auto a = boundary(pred);
  const auto b = boundary(gt);
  return {surface_distances(a, b, pred.h, pred.w), surface_distances(b, a, pred.h, pred.w)};
}

}  // namespace

Overlap dice_jaccard(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_shape(pred, gt, "dice_jaccard");
  std::size_t inter = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    np += pred.data[i];
    ng += gt.data[i];
    inter += pred.data[i] & gt.data[i];
  }
  if (np + ng == 0) return {1.0, 1.0};
  const double uni = static_cast<double>(np + ng - inter);
  return {2.0 * static_cast<double>(inter) / static_cast<double>(np + ng), static_cast<double>(inter) / uni};
}

std::vector<Point> boundary(const BinaryMask& m) {
  std::vector<Point> pts;
  auto inside = [&](int y, int x) { return y >= 0 && y < m.h && x >= 0 && x < m.w && m.at(y, x); };
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x)
      if (m.at(y, x) && !(inside(y - 1, x) && inside(y + 1, x) && inside(y, x - 1) && inside(y, x + 1)))
        pts.push_back({y, x});
  return pts;
}

double hdb(const BinaryMask& pred, const BinaryMask& gt) {
  const auto d = boundary_distances(pred, gt, "hdb");
  return std::max(*std::max_element(d.ab.begin(), d.ab.end()), *std::max_element(d.ba.begin(), d.ba.end()));
}

double assd(const BinaryMask& pred, const BinaryMask& gt) {
  const auto d = boundary_distances(pred, gt, "assd");
  double s = 0;
  for (double v : d.ab) s += v;
  for (double v : d.ba) s += v;
  return s / static_cast<double>(d.ab.size() + d.ba.size());
}

double mean_structure_dice(const LabelMask& pred, const LabelMask& gt) {
  if (pred.n != gt.n || pred.h != gt.h || pred.w != gt.w) throw ShapeError("mean_structure_dice: extents differ");
  double s = 0;
  for (int b = 0; b < pred.n; ++b)
    for (int c = 1; c < kNumClasses; ++c) s += dice_jaccard(class_mask(pred, b, c), class_mask(gt, b, c)).dice;
  return pred.n ? s / (3.0 * pred.n) : 0.0;
}

MetricsReport evaluate_cases(const std::vector<LabelMask>& preds, const std::vector<LabelMask>& gts) {
  if (preds.size() != gts.size())
    throw ShapeError("evaluate_cases: " + std::to_string(preds.size()) + " predictions for " +
                     std::to_string(gts.size()) + " ground-truth cases");
  if (preds.empty()) throw Error("evaluate_cases: no cases");
  MetricsReport r;
  r.cases = static_cast<int>(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const LabelMask& p = preds[i];
    const LabelMask& g = gts[i];
    if (p.n != g.n || p.h != g.h || p.w != g.w || p.n == 0)
      throw ShapeError("evaluate_cases: case " + std::to_string(i) + " prediction and truth extents differ");
    for (int c = 1; c < kNumClasses; ++c) {
      StructureMetrics& sm = r.structures[static_cast<std::size_t>(c - 1)];
      double dice = 0, jac = 0, hd = 0, sd = 0;
      int valid = 0;
      for (int b = 0; b < p.n; ++b) {
        const BinaryMask pm = class_mask(p, b, c), gm = class_mask(g, b, c);
        const Overlap o = dice_jaccard(pm, gm);
        dice += o.dice;
        jac += o.jaccard;
        if (pm.empty() || gm.empty()) {
          ++sm.excluded_slices;
          continue;
        }
        hd += hdb(pm, gm);
        sd += assd(pm, gm);
        ++valid;
      }
      sm.dice += 100.0 * dice / p.n;
      sm.jaccard += 100.0 * jac / p.n;
      if (valid > 0) {
        sm.hdb += hd / valid;
        sm.assd += sd / valid;
        ++sm.distance_cases;
      }
    }
  }
  for (auto& sm : r.structures) {
    sm.dice /= r.cases;
    sm.jaccard /= r.cases;
    if (sm.distance_cases > 0) {
      sm.hdb /= sm.distance_cases;
      sm.assd /= sm.distance_cases;
    }
    r.avg.dice += sm.dice / 3.0;
    r.avg.jaccard += sm.jaccard / 3.0;
    r.avg.hdb += sm.hdb / 3.0;
    r.avg.assd += sm.assd / 3.0;
    r.avg.distance_cases += sm.distance_cases;
    r.avg.excluded_slices += sm.excluded_slices;
  }
  return r;
}

std::string report_csv(const MetricsReport& report, const std::string& vendor, bool header) {
  std::ostringstream os;
  if (header) os << "metric,structure,vendor,value\n";
  const std::pair<const char*, const StructureMetrics*> blocks[] = {
      {"AVG", &report.avg}, {"LV", &report.structures[0]}, {"MYO", &report.structures[1]}, {"RV", &report.structures[2]}};
  char buf[64];
  for (const auto& [name, sm] : blocks) {
    const std::pair<const char*, double> rows[] = {
        {"Dice", sm->dice}, {"Jac", sm->jaccard}, {"HDB", sm->hdb}, {"ASSD", sm->assd}};
    for (const auto& [metric, v] : rows) {
      std::snprintf(buf, sizeof buf, "%.2f", v);
      os << metric << ',' << name << ',' << vendor << ',' << buf << '\n';
    }
  }
  return os.str();
}

}  // namespace styleinv
