#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pcreg/config.hpp"
#include "pcreg/data.hpp"
#include "pcreg/errors.hpp"
#include "pcreg/rng.hpp"

namespace pcreg {

inline constexpr int kManifestVersion = 1;

struct PairRecord {
  int index = 0;
  std::string shape_id;
  int shape_index = 0;
  std::uint64_t seed = 0;
  SamplingMode mode = SamplingMode::OnceSampled;
  CropManner crop = CropManner::RPMNet;
  double noise_sigma = 0.0;
  Split split = Split::Train;
  RigidTransform gt;

  bool operator==(const PairRecord& o) const {
    return index == o.index && shape_id == o.shape_id && shape_index == o.shape_index && seed == o.seed &&
           mode == o.mode && crop == o.crop && noise_sigma == o.noise_sigma && split == o.split &&
           gt.rotation == o.gt.rotation && gt.translation == o.gt.translation;
  }
};

struct DatasetManifest {
  int format_version = kManifestVersion;
  std::uint64_t seed = 0;
  Split split = Split::Train;
  ShapeSourceConfig shapes;
  DataConfig data;
  std::vector<PairRecord> pairs;

  bool operator==(const DatasetManifest& o) const {
    return format_version == o.format_version && seed == o.seed && split == o.split &&
           to_json(shapes) == to_json(o.shapes) && to_json(data) == to_json(o.data) && pairs == o.pairs;
  }
};

/// Pair i uses rng seed derive_seed(seed, i) and shape i mod |shapes|.
inline DatasetManifest build_manifest(const std::vector<Shape>& shapes, const ShapeSourceConfig& shape_cfg,
                                      const DataConfig& data, Split split, std::uint64_t seed, int count) {
  if (shapes.empty()) throw InvalidArgument("build_manifest: no shapes");
  if (count < 1) throw InvalidArgument("build_manifest: count must be positive");
  DatasetManifest m;
  m.seed = seed;
  m.split = split;
  m.shapes = shape_cfg;
  m.data = data;
  for (int i = 0; i < count; ++i) {
    PairRecord r;
    r.index = i;
    r.shape_index = i % static_cast<int>(shapes.size());
    r.shape_id = shapes[static_cast<std::size_t>(r.shape_index)].id;
    r.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    r.mode = data.mode;
    r.crop = data.crop;
    r.noise_sigma = data.noise_sigma;
    r.split = split;
    r.gt = make_pair(shapes[static_cast<std::size_t>(r.shape_index)], data, r.seed).gt;
    m.pairs.push_back(r);
  }
  return m;
}

inline RegistrationPair regenerate_pair(const DatasetManifest& m, const std::vector<Shape>& shapes,
                                        const PairRecord& r) {
  if (r.shape_index < 0 || r.shape_index >= static_cast<int>(shapes.size())) {
    throw ManifestError("pair " + std::to_string(r.index) + ": shape index out of range");
  }
  const Shape& shape = shapes[static_cast<std::size_t>(r.shape_index)];
  if (shape.id != r.shape_id) {
    throw ManifestError("pair " + std::to_string(r.index) + ": expected shape '" + r.shape_id + "' but found '" +
                        shape.id + "'");
  }
  DataConfig cfg = m.data;
  cfg.mode = r.mode;
  cfg.crop = r.crop;
  cfg.noise_sigma = r.noise_sigma;
  return make_pair(shape, cfg, r.seed);
}

inline std::vector<RegistrationPair> regenerate_pairs(const DatasetManifest& m) {
  const auto shapes = load_shapes(m.shapes, m.split);
  std::vector<RegistrationPair> out;
  out.reserve(m.pairs.size());
  for (const auto& r : m.pairs) out.push_back(regenerate_pair(m, shapes, r));
  return out;
}

inline Json transform_json(const RigidTransform& t) {
  return Json{{"quaternion", {t.rotation.w, t.rotation.x, t.rotation.y, t.rotation.z}},
              {"translation", {t.translation.x(), t.translation.y(), t.translation.z()}}};
}

inline RigidTransform transform_from_json(const Json& j) {
  const auto q = j.at("quaternion").get<std::vector<double>>();
  const auto t = j.at("translation").get<std::vector<double>>();
  if (q.size() != 4 || t.size() != 3) throw ManifestError("transform: expected 4 quaternion and 3 translation values");
  return {Quaternion{q[0], q[1], q[2], q[3]}, Vec3(t[0], t[1], t[2])};
}

inline Json to_json(const DatasetManifest& m) {
  Json pairs = Json::array();
  for (const auto& r : m.pairs) {
    pairs.push_back(Json{{"index", r.index},
                         {"shape_id", r.shape_id},
                         {"shape_index", r.shape_index},
                         {"seed", r.seed},
                         {"mode", to_string(r.mode)},
                         {"crop", to_string(r.crop)},
                         {"noise_sigma", r.noise_sigma},
                         {"split", to_string(r.split)},
                         {"gt", transform_json(r.gt)}});
  }
  return Json{{"format_version", m.format_version},
              {"seed", m.seed},
              {"split", to_string(m.split)},
              {"shapes", to_json(m.shapes)},
              {"data", to_json(m.data)},
              {"pairs", pairs}};
}

inline DatasetManifest manifest_from_json(const Json& j) {
  DatasetManifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != kManifestVersion) {
      throw ManifestError("unsupported manifest format_version " + std::to_string(m.format_version) + " (expected " +
                          std::to_string(kManifestVersion) + ")");
    }
    m.seed = j.at("seed").get<std::uint64_t>();
    m.split = parse_split(j.at("split").get<std::string>());
    from_json(j.at("shapes"), m.shapes);
    from_json(j.at("data"), m.data);
    for (const auto& p : j.at("pairs")) {
      PairRecord r;
      r.index = p.at("index").get<int>();
      r.shape_id = p.at("shape_id").get<std::string>();
      r.shape_index = p.at("shape_index").get<int>();
      r.seed = p.at("seed").get<std::uint64_t>();
      r.mode = parse_sampling_mode(p.at("mode").get<std::string>());
      r.crop = parse_crop_manner(p.at("crop").get<std::string>());
      r.noise_sigma = p.at("noise_sigma").get<double>();
      r.split = parse_split(p.at("split").get<std::string>());
      r.gt = transform_from_json(p.at("gt"));
      m.pairs.push_back(r);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("malformed manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw ManifestError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

inline void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  write_json_file(path, to_json(m));
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  Json j;
  try {
    j = read_json_file(path);
  } catch (const ConfigError& e) {
    throw ManifestError(e.what());
  }
  return manifest_from_json(j);
}

}  // namespace pcreg
