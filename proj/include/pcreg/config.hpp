#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pcreg/data.hpp"
#include "pcreg/errors.hpp"
#include "pcreg/icp.hpp"
#include "pcreg/losses.hpp"
#include "pcreg/model.hpp"
#include "pcreg/rng.hpp"
#include "pcreg/train_config.hpp"

namespace pcreg {

using Json = nlohmann::ordered_json;

struct EvalConfig {
  std::string method = "learned";  // learned | icp
  Split split = Split::Test;
  int pairs = 64;
  IcpConfig icp;
};

/// Everything a run needs, serialized as one JSON document with sections
/// data, model, loss, train, eval.
struct RunConfig {
  std::string profile = "paper";
  std::uint64_t seed = 0;
  ShapeSourceConfig shapes;
  DataConfig data;
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  EvalConfig eval;
  int generate_pairs = 64;
  Split generate_split = Split::Train;

  void validate() const {
    model.validate();
    loss.validate();
    train.validate();
    eval.icp.validate();
    if (data.num_points < 3) throw ConfigError("data: num_points must be >= 3");
    if (!(data.keep_fraction > 0.0 && data.keep_fraction <= 1.0)) throw ConfigError("data: keep_fraction in (0, 1]");
    if (data.noise_sigma < 0.0 || data.noise_clip < 0.0) throw ConfigError("data: noise must be nonnegative");
    if (eval.pairs < 1 || generate_pairs < 1) throw ConfigError("pair counts must be positive");
    if (eval.method != "learned" && eval.method != "icp") throw ConfigError("eval: method must be learned or icp");
  }
};

namespace detail {

/// Reads known keys from one JSON object and rejects anything else.
class StrictReader {
 public:
  StrictReader(const Json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError(section_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(section_ + "." + key + ": " + e.what());
    }
  }

  template <typename T, typename Parse>
  void get_enum(const char* key, T& out, Parse parse) {
    std::string s;
    get(key, s);
    if (j_.contains(key)) {
      try {
        out = parse(s);
      } catch (const Error& e) {
        throw ConfigError(section_ + "." + key + ": " + e.what());
      }
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown key '" + section_ + "." + k + "'");
    }
  }

 private:
  const Json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline Json to_json(const ShapeSourceConfig& c) {
  return Json{{"path", c.path},
              {"seed", c.seed},
              {"samples_per_shape", c.samples_per_shape},
              {"procedural_train", c.procedural_train},
              {"procedural_val", c.procedural_val},
              {"procedural_test", c.procedural_test},
              {"excluded_categories", c.excluded_categories}};
}

inline void from_json(const Json& j, ShapeSourceConfig& c) {
  detail::StrictReader r(j, "data.shapes");
  r.get("path", c.path);
  r.get("seed", c.seed);
  r.get("samples_per_shape", c.samples_per_shape);
  r.get("procedural_train", c.procedural_train);
  r.get("procedural_val", c.procedural_val);
  r.get("procedural_test", c.procedural_test);
  r.get("excluded_categories", c.excluded_categories);
  r.finish();
}

inline Json to_json(const DataConfig& c) {
  return Json{{"num_points", c.num_points},       {"keep_fraction", c.keep_fraction},
              {"crop", to_string(c.crop)},        {"mode", to_string(c.mode)},
              {"noise_sigma", c.noise_sigma},     {"noise_clip", c.noise_clip},
              {"max_angle_deg", c.max_angle_deg}, {"max_translation", c.max_translation},
              {"viewpoint_radius", c.viewpoint_radius}};
}

inline void read_data_fields(detail::StrictReader& r, DataConfig& c) {
  r.get("num_points", c.num_points);
  r.get("keep_fraction", c.keep_fraction);
  r.get_enum("crop", c.crop, parse_crop_manner);
  r.get_enum("mode", c.mode, parse_sampling_mode);
  r.get("noise_sigma", c.noise_sigma);
  r.get("noise_clip", c.noise_clip);
  r.get("max_angle_deg", c.max_angle_deg);
  r.get("max_translation", c.max_translation);
  r.get("viewpoint_radius", c.viewpoint_radius);
}

inline void from_json(const Json& j, DataConfig& c) {
  detail::StrictReader r(j, "data");
  read_data_fields(r, c);
  r.finish();
}

inline Json to_json(const ModelConfig& c) {
  return Json{{"block_channels", c.block_channels},
              {"pfi_positions", c.pfi_positions},
              {"gfi_hidden", c.gfi_hidden},
              {"gfi_out", c.gfi_out},
              {"rotation_head", c.rotation_head},
              {"translation_head", c.translation_head},
              {"iterations", c.iterations},
              {"detach_iterations", c.detach_iterations},
              {"enable_pfi", c.enable_pfi},
              {"enable_gfi", c.enable_gfi},
              {"dual_branch", c.dual_branch},
              {"layer_norm", c.layer_norm},
              {"init_seed", c.init_seed}};
}

inline void from_json(const Json& j, ModelConfig& c) {
  detail::StrictReader r(j, "model");
  r.get("block_channels", c.block_channels);
  r.get("pfi_positions", c.pfi_positions);
  r.get("gfi_hidden", c.gfi_hidden);
  r.get("gfi_out", c.gfi_out);
  r.get("rotation_head", c.rotation_head);
  r.get("translation_head", c.translation_head);
  r.get("iterations", c.iterations);
  r.get("detach_iterations", c.detach_iterations);
  r.get("enable_pfi", c.enable_pfi);
  r.get("enable_gfi", c.enable_gfi);
  r.get("dual_branch", c.dual_branch);
  r.get("layer_norm", c.layer_norm);
  r.get("init_seed", c.init_seed);
  r.finish();
}

inline Json to_json(const LossConfig& c) {
  return Json{{"delta", c.delta},
              {"lambda_t", c.lambda_t},
              {"beta", c.beta},
              {"gamma", c.gamma},
              {"dropout_ratio", c.dropout_ratio},
              {"tsl_hinge_at_zero", c.tsl_hinge_at_zero},
              {"dropout_per_element", c.dropout_per_element}};
}

inline void from_json(const Json& j, LossConfig& c) {
  detail::StrictReader r(j, "loss");
  r.get("delta", c.delta);
  r.get("lambda_t", c.lambda_t);
  r.get("beta", c.beta);
  r.get("gamma", c.gamma);
  r.get("dropout_ratio", c.dropout_ratio);
  r.get("tsl_hinge_at_zero", c.tsl_hinge_at_zero);
  r.get("dropout_per_element", c.dropout_per_element);
  r.finish();
}

inline Json to_json(const TrainConfig& c) {
  return Json{{"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"steps", c.steps},
              {"seed", c.seed},
              {"enable_tsl", c.enable_tsl},
              {"enable_pfdl", c.enable_pfdl},
              {"perturbation_every", c.perturbation_every},
              {"fixed_pairs", c.fixed_pairs},
              {"checkpoint_every", c.checkpoint_every},
              {"log_every", c.log_every},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_epsilon", c.adam_epsilon}};
}

inline void from_json(const Json& j, TrainConfig& c) {
  detail::StrictReader r(j, "train");
  r.get("learning_rate", c.learning_rate);
  r.get("batch_size", c.batch_size);
  r.get("steps", c.steps);
  r.get("seed", c.seed);
  r.get("enable_tsl", c.enable_tsl);
  r.get("enable_pfdl", c.enable_pfdl);
  r.get("perturbation_every", c.perturbation_every);
  r.get("fixed_pairs", c.fixed_pairs);
  r.get("checkpoint_every", c.checkpoint_every);
  r.get("log_every", c.log_every);
  r.get("adam_beta1", c.adam_beta1);
  r.get("adam_beta2", c.adam_beta2);
  r.get("adam_epsilon", c.adam_epsilon);
  r.finish();
}

inline Json to_json(const IcpConfig& c) {
  Json j{{"max_iterations", c.max_iterations}, {"convergence_tol", c.convergence_tol}};
  if (std::isfinite(c.max_correspondence_distance)) {
    j["max_correspondence_distance"] = c.max_correspondence_distance;
  } else {
    j["max_correspondence_distance"] = nullptr;
  }
  return j;
}

inline void from_json(const Json& j, IcpConfig& c) {
  detail::StrictReader r(j, "eval.icp");
  r.get("max_iterations", c.max_iterations);
  r.get("convergence_tol", c.convergence_tol);
  if (const Json* d = r.child("max_correspondence_distance")) {
    if (d->is_null()) {
      c.max_correspondence_distance = std::numeric_limits<double>::infinity();
    } else if (d->is_number()) {
      c.max_correspondence_distance = d->get<double>();
    } else {
      throw ConfigError("eval.icp.max_correspondence_distance: expected a number or null");
    }
  }
  r.finish();
}

inline Json to_json(const EvalConfig& c) {
  return Json{{"method", c.method}, {"split", to_string(c.split)}, {"pairs", c.pairs}, {"icp", to_json(c.icp)}};
}

inline void from_json(const Json& j, EvalConfig& c) {
  detail::StrictReader r(j, "eval");
  r.get("method", c.method);
  r.get_enum("split", c.split, parse_split);
  r.get("pairs", c.pairs);
  if (const Json* icp = r.child("icp")) from_json(*icp, c.icp);
  r.finish();
}

inline Json to_json(const RunConfig& c) {
  Json data = to_json(c.data);
  data["shapes"] = to_json(c.shapes);
  data["generate_pairs"] = c.generate_pairs;
  data["generate_split"] = to_string(c.generate_split);
  return Json{{"profile", c.profile},         {"seed", c.seed},           {"data", data},
              {"model", to_json(c.model)},    {"loss", to_json(c.loss)},  {"train", to_json(c.train)},
              {"eval", to_json(c.eval)}};
}

/// Overlays `j` onto `c`; keys absent from `j` keep their current values.
inline void apply_json(const Json& j, RunConfig& c) {
  detail::StrictReader r(j, "config");
  std::string profile = c.profile;
  r.get("profile", profile);
  if (profile != c.profile) throw ConfigError("config: profile '" + profile + "' must be selected before loading");
  r.get("seed", c.seed);
  if (const Json* d = r.child("data")) {
    detail::StrictReader dr(*d, "data");
    read_data_fields(dr, c.data);
    if (const Json* s = dr.child("shapes")) from_json(*s, c.shapes);
    dr.get("generate_pairs", c.generate_pairs);
    dr.get_enum("generate_split", c.generate_split, parse_split);
    dr.finish();
  }
  if (const Json* m = r.child("model")) from_json(*m, c.model);
  if (const Json* l = r.child("loss")) from_json(*l, c.loss);
  if (const Json* t = r.child("train")) from_json(*t, c.train);
  if (const Json* e = r.child("eval")) from_json(*e, c.eval);
  r.finish();
}

/// Defaults for a named profile: "paper" (full widths and schedule),
/// "desk" (single-machine scale) or "test" (tiny, for smoke runs).
inline RunConfig profile_defaults(const std::string& name) {
  RunConfig c;
  c.profile = name;
  if (name == "paper") return c;
  if (name == "desk") {
    c.model = ModelConfig::desk_profile();
    c.data.num_points = 256;
    c.train.learning_rate = 1e-3;
    c.train.batch_size = 8;
    c.train.steps = 2000;
    c.train.perturbation_every = 1;
    c.eval.pairs = 16;
    return c;
  }
  if (name == "test") {
    c.model = ModelConfig::test_profile();
    c.model.iterations = 2;
    c.data.num_points = 64;
    c.shapes.samples_per_shape = 256;
    c.shapes.procedural_train = 8;
    c.shapes.procedural_val = 4;
    c.shapes.procedural_test = 4;
    c.train.learning_rate = 1e-3;
    c.train.batch_size = 2;
    c.train.steps = 4;
    c.eval.pairs = 4;
    c.generate_pairs = 4;
    return c;
  }
  throw ConfigError("unknown profile '" + name + "' (expected paper, desk or test)");
}

inline Json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path.string());
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

/// Applies a dotted override such as "train.steps=10". The value is parsed
/// as JSON when possible and taken as a string otherwise.
inline void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  Json patch = Json::object();
  Json* cur = &patch;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) cur = &(*cur)[parts[i]];
  (*cur)[parts.back()] = value;
  apply_json(patch, c);
}

/// Resolves a run configuration: profile defaults (explicit profile, else
/// the file's "profile", else "paper"), then the file, then overrides.
inline RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                                 const std::optional<std::string>& profile,
                                 const std::vector<std::string>& overrides = {}) {
  Json j = file ? read_json_file(*file) : Json::object();
  std::string name = "paper";
  if (j.is_object() && j.contains("profile") && j["profile"].is_string()) name = j["profile"].get<std::string>();
  if (profile) {
    if (j.is_object() && j.contains("profile") && j["profile"] != *profile) {
      throw ConfigError("config file selects profile '" + j["profile"].get<std::string>() + "' but '" + *profile +
                        "' was requested");
    }
    name = *profile;
  }
  RunConfig c = profile_defaults(name);
  apply_json(j, c);
  for (const auto& o : overrides) apply_override(c, o);
  c.validate();
  return c;
}

/// Hash of every hyper-parameter that changes what training computes;
/// step counts and cadences are left out so a run can be extended.
inline std::uint64_t training_config_hash(const ModelConfig& m, const LossConfig& l, const TrainConfig& t) {
  Json tj = to_json(t);
  tj.erase("steps");
  tj.erase("checkpoint_every");
  tj.erase("log_every");
  const Json j{{"model", to_json(m)}, {"loss", to_json(l)}, {"train", tj}};
  return fnv1a(j.dump());
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace pcreg
