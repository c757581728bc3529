#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pcreg/errors.hpp"
#include "pcreg/geometry.hpp"

namespace pcreg::ply {

namespace detail {

struct Element {
  std::string name;
  long count = 0;
  std::vector<std::string> properties;
  bool has_list = false;
};

}  // namespace detail

/// Reads the x/y/z vertex properties of an ASCII PLY file. Other elements
/// (faces, edges) are skipped. Values are parsed with float32 semantics.
inline PointCloud read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open PLY file: " + path.string());
  auto fail = [&](const std::string& what) { return IngestError(path.string() + ": " + what); };

  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw fail("missing 'ply' magic");

  std::vector<detail::Element> elements;
  bool ascii = false;
  for (;;) {
    if (!std::getline(in, line)) throw fail("unterminated header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      ascii = fmt == "ascii";
    } else if (key == "element") {
      detail::Element e;
      ls >> e.name >> e.count;
      if (!ls || e.count < 0) throw fail("bad element line '" + line + "'");
      elements.push_back(e);
    } else if (key == "property") {
      if (elements.empty()) throw fail("property before element");
      std::string type;
      ls >> type;
      if (type == "list") {
        elements.back().has_list = true;
        std::string count_type, item_type;
        ls >> count_type >> item_type;
      }
      std::string name;
      ls >> name;
      elements.back().properties.push_back(name);
    } else if (key == "end_header") {
      break;
    }
  }
  if (!ascii) throw fail("only ASCII PLY is supported");

  PointMatrix points;
  bool found_vertex = false;
  for (const auto& e : elements) {
    if (e.name != "vertex") {
      for (long i = 0; i < e.count; ++i) {
        if (!std::getline(in, line)) throw fail("truncated element '" + e.name + "'");
      }
      continue;
    }
    found_vertex = true;
    int ix = -1, iy = -1, iz = -1;
    for (int i = 0; i < static_cast<int>(e.properties.size()); ++i) {
      if (e.properties[i] == "x") ix = i;
      if (e.properties[i] == "y") iy = i;
      if (e.properties[i] == "z") iz = i;
    }
    if (ix < 0 || iy < 0 || iz < 0) throw fail("vertex element lacks x/y/z");
    points.resize(e.count, 3);
    std::vector<double> values(e.properties.size());
    for (long i = 0; i < e.count; ++i) {
      if (!std::getline(in, line)) throw fail("truncated vertex list at vertex " + std::to_string(i));
      std::istringstream ls(line);
      for (auto& v : values) {
        if (!(ls >> v)) throw fail("malformed vertex " + std::to_string(i));
      }
      points(i, 0) = static_cast<float>(values[ix]);
      points(i, 1) = static_cast<float>(values[iy]);
      points(i, 2) = static_cast<float>(values[iz]);
    }
  }
  if (!found_vertex || points.rows() == 0) throw fail("no vertices");
  try {
    return PointCloud(std::move(points));
  } catch (const Error& e) {
    throw fail(e.what());
  }
}

/// Writes an ASCII PLY with float x/y/z properties. Output is a pure
/// function of the cloud, so equal clouds give byte-identical files.
inline void write(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write PLY file: " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  char buf[96];
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points();
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g\n", static_cast<double>(static_cast<float>(p(i, 0))),
                  static_cast<double>(static_cast<float>(p(i, 1))), static_cast<double>(static_cast<float>(p(i, 2))));
    out << buf;
  }
  if (!out) throw Error("failed while writing PLY file: " + path.string());
}

}  // namespace pcreg::ply
