#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pcreg/errors.hpp"
#include "pcreg/geometry.hpp"
#include "pcreg/ply.hpp"
#include "pcreg/rng.hpp"

namespace pcreg {

enum class SamplingMode { OnceSampled, TwiceSampled };
enum class CropManner { None, PRNet, RPMNet };
enum class Split { Train, Val, Test };

inline std::string to_string(SamplingMode m) { return m == SamplingMode::OnceSampled ? "OS" : "TS"; }
inline std::string to_string(CropManner c) {
  switch (c) {
    case CropManner::None: return "none";
    case CropManner::PRNet: return "prnet";
    case CropManner::RPMNet: return "rpmnet";
  }
  return "none";
}
inline std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

inline SamplingMode parse_sampling_mode(const std::string& s) {
  if (s == "OS" || s == "os") return SamplingMode::OnceSampled;
  if (s == "TS" || s == "ts") return SamplingMode::TwiceSampled;
  throw InvalidArgument("unknown sampling mode '" + s + "' (expected OS or TS)");
}
inline CropManner parse_crop_manner(const std::string& s) {
  if (s == "none") return CropManner::None;
  if (s == "prnet") return CropManner::PRNet;
  if (s == "rpmnet") return CropManner::RPMNet;
  throw InvalidArgument("unknown crop manner '" + s + "' (expected none, prnet or rpmnet)");
}
inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw InvalidArgument("unknown split '" + s + "'");
}

struct Shape {
  std::string id;
  PointCloud cloud;
};

/// Where shapes come from. `path` is either a directory laid out as
/// <root>/<category>/<split>/*.ply or the token "procedural".
struct ShapeSourceConfig {
  std::string path = "procedural";
  std::uint64_t seed = 7;
  int samples_per_shape = 2048;
  int procedural_train = 64;
  int procedural_val = 16;
  int procedural_test = 16;
  // Axisymmetric categories dropped when ingesting a ModelNet-style tree.
  std::vector<std::string> excluded_categories = {"bottle", "bowl", "cone", "cup",
                                                  "flower_pot", "lamp", "tent", "vase"};
};

struct DataConfig {
  int num_points = 1024;
  double keep_fraction = 0.7;
  CropManner crop = CropManner::RPMNet;
  SamplingMode mode = SamplingMode::OnceSampled;
  double noise_sigma = 0.0;
  double noise_clip = 0.05;
  double max_angle_deg = 45.0;
  double max_translation = 0.5;
  double viewpoint_radius = 2.0;
};

struct RegistrationPair {
  PointCloud source;
  PointCloud reference;
  RigidTransform gt;  // maps source -> reference
  SamplingMode mode = SamplingMode::OnceSampled;
  CropManner crop = CropManner::None;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::string shape_id;
};

/// Centers the bounding box at the origin and scales so max |coordinate| = 1.
inline PointMatrix normalize_unit_cube(PointMatrix pts) {
  const Eigen::RowVector3d lo = pts.colwise().minCoeff();
  const Eigen::RowVector3d hi = pts.colwise().maxCoeff();
  pts.rowwise() -= (lo + hi) / 2.0;
  const double extent = pts.cwiseAbs().maxCoeff();
  if (extent > 0.0) pts /= extent;
  return pts;
}

namespace procedural {

struct Triangle {
  Vec3 a, b, c;
  [[nodiscard]] double area() const { return 0.5 * (b - a).cross(c - a).norm(); }
};

inline Vec3 sample_triangle(const Triangle& t, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r1 = u(rng), r2 = u(rng);
  if (r1 + r2 > 1.0) {
    r1 = 1.0 - r1;
    r2 = 1.0 - r2;
  }
  return t.a + r1 * (t.b - t.a) + r2 * (t.c - t.a);
}

inline void add_box_faces(const Vec3& lo, const Vec3& hi, std::vector<Triangle>& tris) {
  auto corner = [&](int i) { return Vec3(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(), i & 4 ? hi.z() : lo.z()); };
  static constexpr std::array<std::array<int, 4>, 6> faces = {
      {{0, 1, 3, 2}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 3, 7, 6}, {0, 2, 6, 4}, {1, 3, 7, 5}}};
  for (const auto& f : faces) {
    tris.push_back({corner(f[0]), corner(f[1]), corner(f[2])});
    tris.push_back({corner(f[0]), corner(f[2]), corner(f[3])});
  }
}

inline PointMatrix sample_triangles(const std::vector<Triangle>& tris, int count, Rng& rng,
                                    const std::function<bool(const Vec3&)>& reject = {}) {
  std::vector<double> areas;
  areas.reserve(tris.size());
  for (const auto& t : tris) areas.push_back(t.area());
  std::discrete_distribution<std::size_t> pick(areas.begin(), areas.end());
  PointMatrix pts(count, 3);
  for (int i = 0; i < count;) {
    const Vec3 p = sample_triangle(tris[pick(rng)], rng);
    if (reject && reject(p)) continue;
    pts.row(i++) = p.transpose();
  }
  return pts;
}

inline PointMatrix box(Rng& rng, int count) {
  std::uniform_real_distribution<double> dim(0.3, 1.0);
  const Vec3 half(dim(rng), dim(rng), dim(rng));
  std::vector<Triangle> tris;
  add_box_faces(-half, half, tris);
  return sample_triangles(tris, count, rng);
}

/// Lateral surface of an elliptic cylinder; the end caps are not sampled.
inline PointMatrix open_cylinder(Rng& rng, int count) {
  std::uniform_real_distribution<double> dim(0.3, 1.0);
  const double a = dim(rng), b = dim(rng) * 0.8, h = dim(rng);
  std::uniform_real_distribution<double> theta(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> height(-h, h);
  PointMatrix pts(count, 3);
  for (int i = 0; i < count; ++i) {
    const double th = theta(rng);
    pts.row(i) << a * std::cos(th), b * std::sin(th), height(rng);
  }
  return pts;
}

/// Union of two slabs meeting at a right angle; points buried inside the
/// other slab are rejected so only the outer surface is sampled.
inline PointMatrix l_bracket(Rng& rng, int count) {
  std::uniform_real_distribution<double> len(0.6, 1.0), thick(0.1, 0.3), depth(0.3, 0.8);
  const double lx = len(rng), lz = len(rng), t1 = thick(rng), t2 = thick(rng), d = depth(rng);
  const Vec3 lo1(0, 0, 0), hi1(lx, d, t1);
  const Vec3 lo2(0, 0, 0), hi2(t2, d, lz);
  std::vector<Triangle> tris;
  add_box_faces(lo1, hi1, tris);
  add_box_faces(lo2, hi2, tris);
  auto strictly_inside = [](const Vec3& p, const Vec3& lo, const Vec3& hi) {
    return (p.array() > lo.array() + 1e-9).all() && (p.array() < hi.array() - 1e-9).all();
  };
  return sample_triangles(tris, count, rng, [&](const Vec3& p) {
    return strictly_inside(p, lo1, hi1) || strictly_inside(p, lo2, hi2);
  });
}

/// Surface of the convex hull of a handful of random points (brute-force
/// facet enumeration; fine for a dozen vertices).
inline PointMatrix convex_hull(Rng& rng, int count) {
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  std::uniform_int_distribution<int> nverts(8, 14);
  std::vector<Vec3> v(nverts(rng));
  for (auto& p : v) p = Vec3(coord(rng), coord(rng), coord(rng));
  std::vector<Triangle> tris;
  const int n = static_cast<int>(v.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      for (int k = j + 1; k < n; ++k) {
        const Vec3 normal = (v[j] - v[i]).cross(v[k] - v[i]);
        if (normal.norm() < 1e-12) continue;
        int above = 0, below = 0;
        for (int m = 0; m < n; ++m) {
          if (m == i || m == j || m == k) continue;
          const double s = normal.dot(v[m] - v[i]);
          if (s > 1e-12) ++above;
          if (s < -1e-12) ++below;
        }
        if (above == 0 || below == 0) tris.push_back({v[i], v[j], v[k]});
      }
    }
  }
  return sample_triangles(tris, count, rng);
}

inline PointCloud make_shape(int kind, Rng& rng, int count) {
  PointMatrix pts;
  switch (kind % 4) {
    case 0: pts = box(rng, count); break;
    case 1: pts = open_cylinder(rng, count); break;
    case 2: pts = l_bracket(rng, count); break;
    default: pts = convex_hull(rng, count); break;
  }
  return PointCloud(normalize_unit_cube(std::move(pts)));
}

}  // namespace procedural

inline std::vector<Shape> load_shapes(const ShapeSourceConfig& cfg, Split split) {
  if (cfg.samples_per_shape < 1) throw InvalidArgument("samples_per_shape must be positive");
  std::vector<Shape> shapes;
  if (cfg.path == "procedural") {
    const int count = split == Split::Train ? cfg.procedural_train
                      : split == Split::Val ? cfg.procedural_val
                                            : cfg.procedural_test;
    if (count < 1) throw InvalidArgument("procedural split '" + to_string(split) + "' is empty");
    const std::uint64_t split_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(split) + 1);
    for (int i = 0; i < count; ++i) {
      Rng rng(derive_seed(split_seed, i));
      shapes.push_back({"procedural/" + to_string(split) + "/" + std::to_string(i),
                        procedural::make_shape(i, rng, cfg.samples_per_shape)});
    }
    return shapes;
  }

  namespace fs = std::filesystem;
  const fs::path root(cfg.path);
  if (!fs::is_directory(root)) throw IngestError("shape directory does not exist: " + cfg.path);
  std::vector<fs::path> categories;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) categories.push_back(entry.path());
  }
  std::sort(categories.begin(), categories.end());
  for (const auto& cat : categories) {
    const std::string name = cat.filename().string();
    if (std::find(cfg.excluded_categories.begin(), cfg.excluded_categories.end(), name) !=
        cfg.excluded_categories.end()) {
      continue;
    }
    const fs::path dir = cat / to_string(split);
    if (!fs::is_directory(dir)) continue;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".ply") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      PointCloud raw = ply::read(f);
      shapes.push_back({name + "/" + to_string(split) + "/" + f.filename().string(),
                        PointCloud(normalize_unit_cube(raw.points()))});
    }
  }
  if (shapes.empty()) throw IngestError("no shapes found for split '" + to_string(split) + "' under " + cfg.path);
  return shapes;
}

inline PointMatrix select_rows(const PointMatrix& pts, const std::vector<Eigen::Index>& rows) {
  PointMatrix out(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pts.row(rows[i]);
  return out;
}

/// n indices drawn without replacement (partial Fisher-Yates).
inline std::vector<Eigen::Index> random_subset(Eigen::Index total, Eigen::Index n, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(total));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i < n; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, total - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(static_cast<std::size_t>(n));
  return idx;
}

/// OS: both clouds are the same n-subset. TS: two independent n-subsets.
inline std::pair<PointCloud, PointCloud> sample_pair(const PointCloud& shape, SamplingMode mode, int n, Rng& rng) {
  if (n < 1 || n > shape.size()) {
    throw InvalidArgument("sample_pair: requested " + std::to_string(n) + " points but shape has " +
                          std::to_string(shape.size()));
  }
  PointCloud first(select_rows(shape.points(), random_subset(shape.size(), n, rng)));
  if (mode == SamplingMode::OnceSampled) return {first, first};
  PointCloud second(select_rows(shape.points(), random_subset(shape.size(), n, rng)));
  return {std::move(first), std::move(second)};
}

/// ceil(keep_fraction * n), tolerant of representation error in the product.
inline Eigen::Index crop_count(double keep_fraction, Eigen::Index n) {
  return static_cast<Eigen::Index>(std::ceil(keep_fraction * static_cast<double>(n) - 1e-9));
}

struct CropInfo {
  Vec3 direction = Vec3::Zero();  // plane normal (rpmnet) or unit viewpoint direction (prnet)
  Vec3 viewpoint = Vec3::Zero();
  double offset = 0.0;            // rpmnet: every kept point has direction . p >= offset
};

/// Keeps a contiguous spatial region of ceil(keep_fraction * N) points.
/// prnet: nearest neighbours of a random viewpoint on a sphere of radius
/// `viewpoint_radius`; rpmnet: one side of a random plane. Kept points stay
/// in their original order.
inline PointCloud crop_partial(const PointCloud& cloud, CropManner manner, double keep_fraction, Rng& rng,
                               CropInfo* info = nullptr, double viewpoint_radius = 2.0) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw InvalidArgument("keep_fraction must lie in (0, 1]");
  const Eigen::Index n = cloud.size();
  const Eigen::Index keep = crop_count(keep_fraction, n);
  if (keep < 3) throw InvalidArgument("crop_partial: fewer than 3 points would survive the crop");
  if (manner == CropManner::None || keep_fraction == 1.0) return cloud;

  const Vec3 dir = random_unit_vector(rng);
  std::vector<double> score(static_cast<std::size_t>(n));
  const auto& pts = cloud.points();
  CropInfo local;
  local.direction = dir;
  if (manner == CropManner::PRNet) {
    local.viewpoint = viewpoint_radius * dir;
    for (Eigen::Index i = 0; i < n; ++i) score[i] = -(pts.row(i).transpose() - local.viewpoint).squaredNorm();
  } else {
    for (Eigen::Index i = 0; i < n; ++i) score[i] = dir.dot(pts.row(i).transpose());
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return score[a] > score[b]; });
  order.resize(static_cast<std::size_t>(keep));
  local.offset = manner == CropManner::RPMNet ? score[order.back()] : 0.0;
  std::sort(order.begin(), order.end());
  if (info) *info = local;
  return PointCloud(select_rows(pts, order));
}

/// Per-coordinate i.i.d. N(0, sigma^2) noise clipped to [-clip, clip].
inline PointCloud add_noise(const PointCloud& cloud, double sigma, double clip, Rng& rng) {
  if (sigma < 0.0) throw InvalidArgument("add_noise: sigma must be nonnegative");
  if (!(clip > 0.0)) throw InvalidArgument("add_noise: clip must be positive");
  if (sigma == 0.0) return cloud;
  std::normal_distribution<double> normal(0.0, sigma);
  PointMatrix pts = cloud.points();
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    for (int j = 0; j < 3; ++j) pts(i, j) += std::clamp(normal(rng), -clip, clip);
  }
  return PointCloud(std::move(pts));
}

/// Builds one partial-to-partial pair. The shared sample is transformed by
/// gt to give the reference side, then each side is cropped and perturbed
/// independently. Pure function of (shape, config, seed).
inline RegistrationPair make_pair(const Shape& shape, const DataConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  RegistrationPair pair;
  pair.gt = random_transform(rng, cfg.max_angle_deg, cfg.max_translation);
  auto [x_base, y_base] = sample_pair(shape.cloud, cfg.mode, cfg.num_points, rng);
  PointCloud y_moved = apply(pair.gt, y_base);
  PointCloud x = crop_partial(x_base, cfg.crop, cfg.keep_fraction, rng, nullptr, cfg.viewpoint_radius);
  PointCloud y = crop_partial(y_moved, cfg.crop, cfg.keep_fraction, rng, nullptr, cfg.viewpoint_radius);
  if (cfg.noise_sigma > 0.0) {
    x = add_noise(x, cfg.noise_sigma, cfg.noise_clip, rng);
    y = add_noise(y, cfg.noise_sigma, cfg.noise_clip, rng);
  }
  pair.source = std::move(x);
  pair.reference = std::move(y);
  pair.mode = cfg.mode;
  pair.crop = cfg.crop;
  pair.noise_sigma = cfg.noise_sigma;
  pair.seed = seed;
  pair.shape_id = shape.id;
  return pair;
}

}  // namespace pcreg
