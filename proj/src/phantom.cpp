#include "styleinv/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace styleinv {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Anatomy of one case, in units of the shorter image side.
struct CaseGeometry {
  double cy, cx;          // heart centre
  double lv_ry, lv_rx;    // LV radii
  double angle;           // LV orientation
  double wall;            // myocardial thickness
  double rv_dir;          // direction from LV centre to RV centre
  double rv_ra, rv_rb;    // RV radii (tangential, radial)
  double body_ry, body_rx;
  double texture_seed;
};

CaseGeometry sample_geometry(std::uint64_t seed, int case_index) {
  std::mt19937_64 rng(mix(seed, static_cast<std::uint64_t>(case_index)));
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  CaseGeometry g;
  g.cy = 0.5 + u(-0.05, 0.05);
  g.cx = 0.52 + u(-0.05, 0.05);
  const double r = u(0.11, 0.15);
  const double aspect = u(0.85, 1.15);
  g.lv_ry = r * aspect;
  g.lv_rx = r / aspect;
  g.angle = u(0, std::numbers::pi);
  g.wall = u(0.055, 0.075);
  g.rv_dir = std::numbers::pi + u(-0.45, 0.45);
  g.rv_ra = u(0.17, 0.22);
  g.rv_rb = u(0.10, 0.13);
  g.body_ry = u(0.40, 0.46);
  g.body_rx = u(0.36, 0.44);
  g.texture_seed = u(0, 1);
  return g;
}

// Normalised elliptic radius of (y, x) about (cy, cx) with radii (ry, rx) rotated by angle.
double ellipse_r(double y, double x, double cy, double cx, double ry, double rx, double angle) {
  const double dy = y - cy, dx = x - cx;
  const double c = std::cos(angle), s = std::sin(angle);
  const double u = c * dy + s * dx, v = -s * dy + c * dx;
  return std::sqrt((u / ry) * (u / ry) + (v / rx) * (v / rx));
}

struct SliceGeometry {
  CaseGeometry g;
  double scale;
  double dy, dx;
};

SliceGeometry slice_geometry(std::uint64_t seed, int case_index, int slice_index, int slices_per_case) {
  SliceGeometry s{sample_geometry(seed, case_index), 1.0, 0, 0};
  const double t = slices_per_case > 1 ? static_cast<double>(slice_index) / (slices_per_case - 1) : 0.0;
  std::mt19937_64 rng(mix(mix(seed, static_cast<std::uint64_t>(case_index)), 1000 + slice_index));
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  // Base-to-apex shrinkage with small per-slice wobble.
  s.scale = (1.0 - 0.35 * t) * u(0.95, 1.05);
  s.dy = u(-0.015, 0.015);
  s.dx = u(-0.015, 0.015);
  return s;
}

// Class at normalised coordinates; 255 marks "outside body".
std::uint8_t classify(const SliceGeometry& s, double y, double x, bool* in_body) {
  const CaseGeometry& g = s.g;
  const double cy = g.cy + s.dy, cx = g.cx + s.dx;
  *in_body = ellipse_r(y, x, 0.5, 0.5, g.body_ry, g.body_rx, 0.0) <= 1.0;
  const double ry = g.lv_ry * s.scale, rx = g.lv_rx * s.scale;
  if (ellipse_r(y, x, cy, cx, ry, rx, g.angle) <= 1.0) return 1;
  const double wall = g.wall * (0.8 + 0.2 * s.scale);
  const double my = ry + wall, mx = rx + wall;
  if (ellipse_r(y, x, cy, cx, my, mx, g.angle) <= 1.0) return 2;
  // RV crescent: ellipse hugging the septal side, minus a margin around the myocardium.
  const double dist = std::max(my, mx) + 0.35 * g.rv_rb * s.scale;
  const double rcy = cy + dist * std::sin(g.rv_dir), rcx = cx + dist * std::cos(g.rv_dir);
  const double ra = g.rv_ra * s.scale, rb = g.rv_rb * s.scale;
  if (ellipse_r(y, x, rcy, rcx, ra, rb, g.rv_dir) <= 1.0 &&
      ellipse_r(y, x, cy, cx, my + 0.02, mx + 0.02, g.angle) > 1.0)
    return 3;
  return 0;
}

void gaussian_blur(std::vector<double>& img, int h, int w, double sigma) {
  if (sigma <= 0) return;
  const int r = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double ks = 0;
  for (int i = -r; i <= r; ++i) ks += k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= ks;
  std::vector<double> tmp(img.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i) s += k[static_cast<std::size_t>(i + r)] * img[static_cast<std::size_t>(y) * w + std::clamp(x + i, 0, w - 1)];
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i) s += k[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
      img[static_cast<std::size_t>(y) * w + x] = s;
    }
}

// Tissue intensities before vendor rendering.
constexpr double kBaseIntensity[4] = {0.28, 0.85, 0.38, 0.78};  // tissue, LV blood, MYO, RV blood

}  // namespace

VendorStyle vendor_style(char id) {
  switch (id) {
    case 'A': return {'A', 1.00, 0.00, 0.020, 0.030, 0.0};
    case 'B': return {'B', 0.85, 0.06, 0.030, 0.040, 0.5};
    case 'C': return {'C', 0.70, 0.16, 0.030, 0.050, 0.7};
    case 'D': return {'D', 0.50, 0.34, 0.045, 0.060, 1.0};
    default: throw Error(std::string("unknown vendor '") + id + "'");
  }
}

Dataset generate_vendor_sets(const PhantomOptions& opts, const std::string& vendors) {
  Dataset out;
  for (char v : vendors) {
    PhantomOptions o = opts;
    o.seed = opts.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(v - 'A' + 1));
    const Dataset d = generate_phantoms(o, vendor_style(v));
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

LabelMask phantom_labels(std::uint64_t seed, int case_index, int slice_index, int slices_per_case, int height,
                         int width) {
  const SliceGeometry s = slice_geometry(seed, case_index, slice_index, slices_per_case);
  const double side = std::min(height, width);
  LabelMask m(1, height, width);
  bool in_body = false;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double ny = (y + 0.5 - (height - side) / 2) / side, nx = (x + 0.5 - (width - side) / 2) / side;
      m.at(0, y, x) = classify(s, ny, nx, &in_body);
    }
  return m;
}

Dataset generate_phantoms(const PhantomOptions& o, const VendorStyle& v) {
  if (o.n_cases < 1 || o.slices_per_case < 1) throw Error("generate_phantoms: need at least one case and slice");
  if (o.height <= 0 || o.width <= 0 || o.height % 16 != 0 || o.width % 16 != 0)
    throw ShapeError("generate_phantoms: extents must be positive multiples of 16, got " +
                     std::to_string(o.height) + "x" + std::to_string(o.width));
  const int h = o.height, w = o.width;
  const double side = std::min(h, w);
  Dataset out;
  out.reserve(static_cast<std::size_t>(o.n_cases) * o.slices_per_case);
  for (int c = 0; c < o.n_cases; ++c) {
    std::ostringstream cid;
    cid << v.id << "_case" << (c < 10 ? "00" : c < 100 ? "0" : "") << c;
    for (int k = 0; k < o.slices_per_case; ++k) {
      const SliceGeometry s = slice_geometry(o.seed, c, k, o.slices_per_case);
      std::mt19937_64 rng(mix(mix(mix(o.seed, static_cast<std::uint64_t>(c)), static_cast<std::uint64_t>(k)),
                              static_cast<std::uint64_t>(v.id)));
      std::normal_distribution<double> gauss(0.0, 1.0);
      Slice sl;
      sl.mask = LabelMask(1, h, w);
      sl.case_id = cid.str();
      sl.vendor = v.id;
      sl.index = k;
      std::vector<double> base(static_cast<std::size_t>(h) * w), texture(base.size());
      for (auto& t : texture) t = gauss(rng);
      gaussian_blur(texture, h, w, 1.5);
      double tv = 0;
      for (double t : texture) tv += t * t;
      const double tnorm = 1.0 / std::sqrt(tv / static_cast<double>(texture.size()) + 1e-12);
      bool in_body = false;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double ny = (y + 0.5 - (h - side) / 2) / side, nx = (x + 0.5 - (w - side) / 2) / side;
          const std::uint8_t cls = classify(s, ny, nx, &in_body);
          sl.mask.at(0, y, x) = cls;
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          base[i] = (in_body || cls != 0) ? kBaseIntensity[cls] + v.texture_scale * texture[i] * tnorm : 0.0;
        }
      gaussian_blur(base, h, w, v.blur_sigma);
      sl.image = TensorF({1, 1, h, w});
      for (std::size_t i = 0; i < base.size(); ++i) {
        const double val = v.intensity_gain * base[i] + v.intensity_bias + v.noise_sigma * gauss(rng);
        sl.image[i] = static_cast<float>(std::clamp(val, 0.0, 1.0));
      }
      out.push_back(std::move(sl));
    }
  }
  return out;
}

TensorF resize_to(const TensorF& image, int height, int width) {
  if (height <= 0 || width <= 0) throw ShapeError("resize_to: non-positive target extent");
  if (image.rank() != 4) throw ShapeError("resize_to: expected NCHW image, got " + shape_str(image.shape()));
  const int n = image.dim(0), c = image.dim(1), h = image.dim(2), w = image.dim(3);
  if (h == height && w == width) return image;
  TensorF out({n, c, height, width});
  const double sy = static_cast<double>(h) / height, sx = static_cast<double>(w) / width;
  for (int p = 0; p < n * c; ++p)
    for (int y = 0; y < height; ++y) {
      const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
      const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, h - 1);
      const double ay = fy - y0;
      for (int x = 0; x < width; ++x) {
        const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
        const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, w - 1);
        const double ax = fx - x0;
        const float* src = image.data() + static_cast<std::size_t>(p) * h * w;
        const double v = (1 - ay) * ((1 - ax) * src[y0 * w + x0] + ax * src[y0 * w + x1]) +
                         ay * ((1 - ax) * src[y1 * w + x0] + ax * src[y1 * w + x1]);
        out[(static_cast<std::size_t>(p) * height + y) * width + x] = static_cast<float>(v);
      }
    }
  return out;
}

LabelMask resize_mask(const LabelMask& mask, int height, int width) {
  if (height <= 0 || width <= 0) throw ShapeError("resize_mask: non-positive target extent");
  LabelMask out(mask.n, height, width);
  for (int b = 0; b < mask.n; ++b)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const int sy = std::min(mask.h - 1, static_cast<int>((y + 0.5) * mask.h / height));
        const int sx = std::min(mask.w - 1, static_cast<int>((x + 0.5) * mask.w / width));
        out.at(b, y, x) = mask.at(b, sy, sx);
      }
  return out;
}

IntensityStats intensity_stats(const TensorF& image) {
  if (image.numel() == 0) return {};
  double s = 0;
  for (float v : image.span()) s += v;
  const double mu = s / static_cast<double>(image.numel());
  double ss = 0;
  for (float v : image.span()) ss += (v - mu) * (v - mu);
  return {mu, std::sqrt(ss / static_cast<double>(image.numel()))};
}

std::vector<std::string> case_ids(const Dataset& data) {
  std::vector<std::string> ids;
  for (const auto& s : data)
    if (std::find(ids.begin(), ids.end(), s.case_id) == ids.end()) ids.push_back(s.case_id);
  return ids;
}

std::vector<std::size_t> slices_of_case(const Dataset& data, const std::string& case_id) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data[i].case_id == case_id) idx.push_back(i);
  return idx;
}

// --- PGM --------------------------------------------------------------------

namespace {

struct PgmHeader {
  int width = 0, height = 0, maxval = 0;
};

PgmHeader read_header(std::istream& in, const std::filesystem::path& path) {
  auto token = [&]() {
    std::string t;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(ch);
    }
    return t;
  };
  if (token() != "P5") throw FormatError(path.string() + ": not a binary PGM (P5)");
  PgmHeader h;
  try {
    h.width = std::stoi(token());
    h.height = std::stoi(token());
    h.maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": malformed PGM header");
  }
  if (h.width <= 0 || h.height <= 0) throw FormatError(path.string() + ": malformed PGM extents");
  return h;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::pair<int, int> image_extent(const TensorF& image) {
  if (image.rank() == 2) return {image.dim(0), image.dim(1)};
  if (image.rank() == 4 && image.dim(0) == 1 && image.dim(1) == 1) return {image.dim(2), image.dim(3)};
  throw ShapeError("save_image_pgm: expected a single-channel slice, got " + shape_str(image.shape()));
}

}  // namespace

void save_image_pgm(const std::filesystem::path& path, const TensorF& image) {
  const auto [h, w] = image_extent(image);
  auto out = open_out(path);
  out << "P5\n" << w << ' ' << h << "\n65535\n";
  std::vector<unsigned char> buf(static_cast<std::size_t>(h) * w * 2);
  for (std::size_t i = 0; i < image.numel(); ++i) {
    const double v = std::clamp(static_cast<double>(image[i]), 0.0, 1.0);
    const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    buf[2 * i] = static_cast<unsigned char>(q >> 8);
    buf[2 * i + 1] = static_cast<unsigned char>(q & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

TensorF load_image_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  const PgmHeader h = read_header(in, path);
  if (h.maxval != 65535) throw FormatError(path.string() + ": expected maxval 65535, got " + std::to_string(h.maxval));
  std::vector<unsigned char> buf(static_cast<std::size_t>(h.width) * h.height * 2);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw FormatError(path.string() + ": truncated pixel data");
  TensorF t({1, 1, h.height, h.width});
  for (std::size_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<float>(((buf[2 * i] << 8) | buf[2 * i + 1]) / 65535.0);
  return t;
}

void save_mask_pgm(const std::filesystem::path& path, const LabelMask& mask) {
  if (mask.n != 1) throw ShapeError("save_mask_pgm: expected a single-slice mask");
  mask.validate();
  auto out = open_out(path);
  out << "P5\n" << mask.w << ' ' << mask.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(mask.data.data()), static_cast<std::streamsize>(mask.data.size()));
}

LabelMask load_mask_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  const PgmHeader h = read_header(in, path);
  if (h.maxval != 255) throw FormatError(path.string() + ": expected maxval 255, got " + std::to_string(h.maxval));
  LabelMask m(1, h.height, h.width);
  in.read(reinterpret_cast<char*>(m.data.data()), static_cast<std::streamsize>(m.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(m.data.size())) throw FormatError(path.string() + ": truncated pixel data");
  m.validate();
  return m;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data, const std::string& manifest_name) {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  for (const auto& s : data) {
    std::ostringstream stem;
    stem << s.vendor << '/' << s.case_id << "_s" << (s.index < 10 ? "0" : "") << s.index;
    const std::string img = stem.str() + ".pgm", msk = stem.str() + "_mask.pgm";
    save_image_pgm(dir / img, s.image);
    save_mask_pgm(dir / msk, s.mask);
    manifest << s.case_id << '\t' << s.vendor << '\t' << img << '\t' << msk << '\n';
  }
  auto out = open_out(dir / manifest_name);
  out << manifest.str();
}

Dataset load_dataset(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw MissingArtifactError("cannot open manifest " + manifest.string());
  const auto root = manifest.parent_path();
  Dataset data;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 4 || cols[1].size() != 1)
      throw FormatError(manifest.string() + ":" + std::to_string(lineno) + ": expected case_id, vendor, slice, mask");
    Slice s;
    s.case_id = cols[0];
    s.vendor = cols[1][0];
    s.image = load_image_pgm(root / cols[2]);
    s.mask = load_mask_pgm(root / cols[3]);
    if (s.mask.h != s.image.dim(2) || s.mask.w != s.image.dim(3))
      throw FormatError(manifest.string() + ":" + std::to_string(lineno) + ": image and mask extents differ");
    if (!data.empty() && (s.mask.h != data.front().mask.h || s.mask.w != data.front().mask.w))
      throw FormatError(manifest.string() + ":" + std::to_string(lineno) + ": slice extent differs from the dataset");
    s.index = static_cast<int>(slices_of_case(data, s.case_id).size());
    data.push_back(std::move(s));
  }
  return data;
}

}  // namespace styleinv
