#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"

#include "eldm/data_model.hpp"
#include "eldm/error.hpp"
#include "eldm/log.hpp"

namespace eldm::cli {

using json = nlohmann::ordered_json;

struct TaskSpec {
  std::string type;  ///< canonical subcommand name
  std::string name;  ///< output file prefix
  json params;       ///< every parameter, defaults filled in
};

struct InputSpec {
  std::string path;
  char delimiter = ',';
  std::string row_id_column;
  Schema schema;
};

struct PipelineConfig {
  std::optional<InputSpec> input;
  Scaling scaling = Scaling::autoscale;
  bool centered = true;
  std::string output_dir = "eldm_out";
  std::uint64_t seed = 0;
  std::vector<std::string> report_formats{"csv"};
  std::vector<TaskSpec> tasks;
  json resolved = json::object();    ///< config echo with defaults filled in
  json provenance = json::object();  ///< path -> "config" | "default" | "flag"
};

/// Command-line values that take precedence over the config file.
struct Overrides {
  std::string subcommand = "run";
  std::optional<std::string> input;
  std::optional<std::string> output;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> scaling;
  std::optional<bool> centered;
  std::optional<std::int64_t> q;
  std::optional<std::int64_t> k;
  std::vector<std::string> sets;  ///< dotted.path=value
};

inline const std::vector<std::string>& task_types() {
  static const std::vector<std::string> types{"pca", "vqpca", "fpca", "nmf", "ae", "rotate",
                                              "procrustes", "gpr", "classify", "synth"};
  return types;
}

inline std::optional<std::string> canonical_task_type(std::string_view t) {
  if (t == "autoencoder") return "ae";
  if (t == "varimax") return "rotate";
  if (t == "generate-synthetic") return "synth";
  for (const auto& s : task_types()) {
    if (s == t) return s;
  }
  return std::nullopt;
}

inline bool task_accepts_q(std::string_view t) {
  return t == "pca" || t == "vqpca" || t == "fpca" || t == "nmf" || t == "rotate" || t == "gpr";
}

inline bool task_accepts_k(std::string_view t) { return t == "vqpca" || t == "fpca"; }

namespace detail {

[[noreturn]] inline void bad(const std::string& path, const std::string& msg) { throw ConfigError(path + ": " + msg); }

template <class T>
constexpr const char* type_name() {
  if constexpr (std::is_same_v<T, bool>) return "a boolean";
  else if constexpr (std::is_integral_v<T>) return "an integer";
  else if constexpr (std::is_floating_point_v<T>) return "a number";
  else if constexpr (std::is_same_v<T, std::string>) return "a string";
  else if constexpr (std::is_same_v<T, std::vector<std::string>>) return "a list of strings";
  else return "a list of integers";
}

template <class T>
T convert(const json& v, const std::string& path) {
  bool ok = false;
  if constexpr (std::is_same_v<T, bool>) ok = v.is_boolean();
  else if constexpr (std::is_unsigned_v<T>) ok = v.is_number_unsigned();
  else if constexpr (std::is_integral_v<T>) ok = v.is_number_integer();
  else if constexpr (std::is_floating_point_v<T>) ok = v.is_number();
  else if constexpr (std::is_same_v<T, std::string>) ok = v.is_string();
  else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
    ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); });
  } else {
    ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number_integer(); });
  }
  if (!ok) bad(path, std::string("expected ") + type_name<T>());
  return v.get<T>();
}

/// One JSON object of the config. Every key read through get/require is
/// echoed with its provenance; close() rejects keys nobody asked for.
class Section {
 public:
  Section(const json& src, std::string path, json& echo, PipelineConfig& cfg, const std::set<std::string>& flagged)
      : src_(src), path_(std::move(path)), echo_(echo), cfg_(cfg), flagged_(flagged) {
    if (!src_.is_object()) bad(path_.empty() ? "config" : path_, "expected an object");
  }

  std::string path(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }

  bool has(const std::string& key) const { return src_.contains(key); }

  template <class T>
  T get(const std::string& key, const T& fallback) {
    seen_.insert(key);
    const std::string p = path(key);
    T v = fallback;
    if (src_.contains(key)) {
      v = convert<T>(src_.at(key), p);
      cfg_.provenance[p] = flagged_.count(p) ? "flag" : "config";
    } else {
      cfg_.provenance[p] = "default";
      logger()->info("default {} = {}", p, json(v).dump());
    }
    echo_[key] = v;
    return v;
  }

  template <class T>
  T require(const std::string& key) {
    if (!src_.contains(key)) bad(path(key), "required key is missing");
    return get<T>(key, T{});
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return src_.at(key);
  }

  void close() const {
    for (auto it = src_.begin(); it != src_.end(); ++it) {
      if (!seen_.count(it.key())) bad(path(it.key()), "unknown key");
    }
  }

 private:
  const json& src_;
  std::string path_;
  json& echo_;
  PipelineConfig& cfg_;
  const std::set<std::string>& flagged_;
  std::set<std::string> seen_;
};

template <class T>
void at_least(const std::string& path, T v, T lo) {
  if (v < lo) bad(path, fmt::format("must be at least {}, got {}", lo, v));
}

inline void positive(const std::string& path, double v) {
  if (!(v > 0.0)) bad(path, fmt::format("must be positive, got {}", v));
}

inline void open_unit(const std::string& path, double v) {
  if (!(v > 0.0 && v < 1.0)) bad(path, fmt::format("must lie in (0, 1), got {}", v));
}

inline void parse_task_params(Section& s, const std::string& type, std::uint64_t seed) {
  using I = std::int64_t;
  auto q = [&](I def) { at_least(s.path("q"), s.get<I>("q", def), I{1}); };
  auto k = [&](I def) { at_least(s.path("k"), s.get<I>("k", def), I{1}); };
  if (type == "pca") {
    q(2);
    s.get<std::string>("sources", "");
    s.get<bool>("save_model", true);
  } else if (type == "vqpca") {
    k(2);
    q(2);
    const auto init = s.get<std::string>("init", "random");
    if (init != "random" && init != "kmeans") bad(s.path("init"), "must be 'random' or 'kmeans'");
    at_least(s.path("max_iter"), s.get<I>("max_iter", 500), I{1});
    positive(s.path("tol_centroid"), s.get<double>("tol_centroid", 1e-8));
    positive(s.path("tol_error"), s.get<double>("tol_error", 1e-6));
    s.get<std::uint64_t>("seed", seed);
  } else if (type == "fpca") {
    const I kk = s.get<I>("k", 2);
    at_least(s.path("k"), kk, I{2});
    q(2);
    open_unit(s.path("z_st"), s.require<double>("z_st"));
    const auto z_column = s.get<std::string>("z_column", "");
    const auto fuel = s.get<std::vector<std::string>>("fuel", {});
    if (z_column.empty() && fuel.empty()) bad(s.path("z_column"), "set z_column or list the fuel species in fuel");
    s.get<std::string>("oxidizer", "O2");
    positive(s.path("fuel_stream"), s.get<double>("fuel_stream", 1.0));
    positive(s.path("oxidizer_stream"), s.get<double>("oxidizer_stream", 0.232));
  } else if (type == "nmf") {
    q(2);
    at_least(s.path("max_iter"), s.get<I>("max_iter", 2000), I{1});
    positive(s.path("tol"), s.get<double>("tol", 1e-8));
    s.get<bool>("subtract_minimum", false);
    s.get<std::uint64_t>("seed", seed);
  } else if (type == "ae") {
    const auto hidden = s.get<std::vector<I>>("hidden", {32, 8, 2, 8, 32});
    if (hidden.empty()) bad(s.path("hidden"), "needs at least one layer");
    for (I h : hidden) at_least(s.path("hidden"), h, I{1});
    parse_activation(s.get<std::string>("activation", "selu"));
    at_least(s.path("epochs"), s.get<I>("epochs", 100), I{0});
    positive(s.path("learning_rate"), s.get<double>("learning_rate", 1e-3));
    at_least(s.path("batch_size"), s.get<I>("batch_size", 32), I{1});
    s.get<std::uint64_t>("seed", seed);
  } else if (type == "rotate") {
    const I qq = s.get<I>("q", 2);
    at_least(s.path("q"), qq, I{2});
    s.get<bool>("kaiser", false);
    at_least(s.path("max_sweeps"), s.get<I>("max_sweeps", 100), I{1});
    positive(s.path("tol"), s.get<double>("tol", 1e-10));
  } else if (type == "procrustes") {
    s.require<std::string>("target");
    s.require<std::string>("source");
    s.get<bool>("allow_scaling", true);
    s.get<bool>("allow_reflection", true);
  } else if (type == "gpr") {
    q(2);
    s.get<std::vector<std::string>>("targets", {});
    s.get<std::string>("sources", "");
    at_least(s.path("max_train"), s.get<I>("max_train", 500), I{3});
    at_least(s.path("search_points"), s.get<I>("search_points", 200), I{3});
    const double jitter = s.get<double>("jitter", 1e-8);
    if (!(jitter >= 0.0)) bad(s.path("jitter"), "must be nonnegative");
    const double ell = s.get<double>("length_scale", 0.0);
    const double s2 = s.get<double>("signal_variance", 0.0);
    if (ell < 0.0 || s2 < 0.0) bad(s.path("length_scale"), "kernel parameters must be positive (0 selects by search)");
    if ((ell > 0.0) != (s2 > 0.0)) bad(s.path("length_scale"), "set both length_scale and signal_variance, or neither");
    s.get<std::uint64_t>("seed", seed);
  } else if (type == "classify") {
    s.require<std::string>("model");
    s.get<std::string>("data", "");
  } else if (type == "synth") {
    at_least(s.path("n_points"), s.get<I>("n_points", 2000), I{10});
    open_unit(s.path("z_st"), s.get<double>("z_st", 0.42));
    const double noise = s.get<double>("noise_level", 0.0);
    if (!(noise >= 0.0)) bad(s.path("noise_level"), "must be nonnegative");
    s.get<double>("time", 0.0);
    s.get<std::uint64_t>("seed", seed);
    if (s.get<std::string>("file", "synthetic.csv").empty()) bad(s.path("file"), "must not be empty");
  }
}

inline std::string canonical_path(const std::vector<std::string>& segments) {
  std::string out;
  for (const auto& seg : segments) {
    const bool index = !seg.empty() && std::all_of(seg.begin(), seg.end(), [](char c) { return c >= '0' && c <= '9'; });
    if (index) out += "[" + seg + "]";
    else out += (out.empty() ? "" : ".") + seg;
  }
  return out;
}

inline void apply_set(json& raw, const std::string& assignment, std::set<std::string>& flagged) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  std::vector<std::string> segments;
  for (std::size_t start = 0;;) {
    const auto dot = key.find('.', start);
    segments.push_back(key.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json* node = &raw;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& seg = segments[i];
    if (seg.empty()) throw ConfigError("--set: empty path segment in '" + key + "'");
    const bool last = i + 1 == segments.size();
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(seg);
      } catch (const std::exception&) {
        throw ConfigError("--set: '" + seg + "' is not a list index in '" + key + "'");
      }
      if (idx >= node->size()) throw ConfigError("--set: index " + seg + " out of range in '" + key + "'");
      node = &(*node)[idx];
    } else {
      if (!node->is_object()) *node = json::object();
      node = &(*node)[seg];
    }
    if (last) {
      json value = json::parse(text, nullptr, false);
      *node = value.is_discarded() ? json(text) : value;
    }
  }
  flagged.insert(canonical_path(segments));
}

inline void apply_overrides(json& raw, const Overrides& o, std::set<std::string>& flagged) {
  if (!raw.is_object()) throw ConfigError("config: top level must be an object");
  auto set = [&](std::initializer_list<std::string> path, json value) {
    json* node = &raw;
    std::vector<std::string> segs(path);
    for (const auto& s : segs) {
      if (!node->is_object()) *node = json::object();
      node = &(*node)[s];
    }
    *node = std::move(value);
    flagged.insert(canonical_path(segs));
  };
  if (o.input) set({"input", "path"}, *o.input);
  if (o.output) set({"output_dir"}, *o.output);
  if (o.seed) set({"seed"}, *o.seed);
  if (o.scaling) set({"preprocessing", "scaling"}, *o.scaling);
  if (o.centered) set({"preprocessing", "centered"}, *o.centered);

  if (o.subcommand != "run") {
    json selected = json::array();
    if (raw.contains("tasks") && raw["tasks"].is_array()) {
      for (const auto& t : raw["tasks"]) {
        if (t.is_object() && t.contains("type") && t["type"].is_string() &&
            canonical_task_type(t["type"].get<std::string>()) == o.subcommand) {
          selected.push_back(t);
        }
      }
    }
    if (selected.empty()) {
      selected.push_back(json{{"type", o.subcommand}});
      flagged.insert("tasks[0].type");
    }
    raw["tasks"] = selected;
  }
  if ((o.q || o.k) && raw.contains("tasks") && raw["tasks"].is_array()) {
    auto& tasks = raw["tasks"];
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (!tasks[i].is_object() || !tasks[i].contains("type") || !tasks[i]["type"].is_string()) continue;
      const auto type = canonical_task_type(tasks[i]["type"].get<std::string>()).value_or("");
      if (o.q && task_accepts_q(type)) {
        tasks[i]["q"] = *o.q;
        flagged.insert(fmt::format("tasks[{}].q", i));
      }
      if (o.k && task_accepts_k(type)) {
        tasks[i]["k"] = *o.k;
        flagged.insert(fmt::format("tasks[{}].k", i));
      }
    }
  }
  for (const auto& s : o.sets) apply_set(raw, s, flagged);
}

}  // namespace detail

/// Parses and validates a JSON pipeline config (comments allowed), applying
/// command-line overrides first so that flags win.
inline PipelineConfig parse_config(std::string_view text, const Overrides& overrides = {}) {
  json raw;
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    raw = json::object();
  } else {
    try {
      raw = json::parse(text, nullptr, true, true);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
  std::set<std::string> flagged;
  detail::apply_overrides(raw, overrides, flagged);

  PipelineConfig cfg;
  json& echo = cfg.resolved;
  detail::Section top(raw, "", echo, cfg, flagged);

  if (top.has("input")) {
    echo["input"] = json::object();
    detail::Section in(top.raw("input"), "input", echo["input"], cfg, flagged);
    InputSpec spec;
    spec.path = in.require<std::string>("path");
    if (spec.path.empty()) detail::bad("input.path", "must not be empty");
    const auto delim = in.get<std::string>("delimiter", ",");
    if (delim.size() != 1) detail::bad("input.delimiter", "must be a single character");
    spec.delimiter = delim[0];
    spec.row_id_column = in.get<std::string>("row_id_column", "");
    if (in.has("schema")) {
      const json& schema = in.raw("schema");
      if (!schema.is_object()) detail::bad("input.schema", "expected an object of column: role");
      for (auto it = schema.begin(); it != schema.end(); ++it) {
        const std::string p = "input.schema." + it.key();
        if (!it.value().is_string()) detail::bad(p, "expected a role string");
        try {
          spec.schema[it.key()] = parse_column_role(it.value().get<std::string>());
        } catch (const ConfigError& e) {
          detail::bad(p, e.what());
        }
      }
      echo["input"]["schema"] = schema;
      cfg.provenance["input.schema"] = "config";
    } else {
      echo["input"]["schema"] = json::object();
      cfg.provenance["input.schema"] = "default";
    }
    in.close();
    cfg.input = spec;
  }

  json pre_src = top.has("preprocessing") ? top.raw("preprocessing") : json::object();
  echo["preprocessing"] = json::object();
  {
    detail::Section pre(pre_src, "preprocessing", echo["preprocessing"], cfg, flagged);
    const auto scaling = pre.get<std::string>("scaling", "auto");
    try {
      cfg.scaling = parse_scaling(scaling);
    } catch (const ConfigError& e) {
      detail::bad("preprocessing.scaling", e.what());
    }
    cfg.centered = pre.get<bool>("centered", true);
    pre.close();
  }

  cfg.output_dir = top.get<std::string>("output_dir", "eldm_out");
  if (cfg.output_dir.empty()) detail::bad("output_dir", "must not be empty");
  cfg.seed = top.get<std::uint64_t>("seed", 0);
  cfg.report_formats = top.get<std::vector<std::string>>("report_formats", {"csv"});
  for (const auto& f : cfg.report_formats) {
    if (f != "csv" && f != "json") detail::bad("report_formats", "unknown format '" + f + "' (csv, json)");
  }
  if (std::find(cfg.report_formats.begin(), cfg.report_formats.end(), "csv") == cfg.report_formats.end()) {
    detail::bad("report_formats", "must include csv");
  }

  if (!top.has("tasks")) detail::bad("tasks", "required key is missing");
  const json& tasks = top.raw("tasks");
  if (!tasks.is_array() || tasks.empty()) detail::bad("tasks", "expected a non-empty list of tasks");
  echo["tasks"] = json::array();
  std::set<std::string> names;
  std::map<std::string, int> type_count;
  for (const auto& t : tasks) {
    if (t.is_object() && t.contains("type") && t["type"].is_string()) {
      ++type_count[canonical_task_type(t["type"].get<std::string>()).value_or("")];
    }
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const std::string path = fmt::format("tasks[{}]", i);
    echo["tasks"].push_back(json::object());
    detail::Section s(tasks[i], path, echo["tasks"].back(), cfg, flagged);
    const auto type_text = s.require<std::string>("type");
    const auto type = canonical_task_type(type_text);
    if (!type) detail::bad(path + ".type", "unknown task type '" + type_text + "'");
    echo["tasks"].back()["type"] = *type;
    const std::string def_name = type_count[*type] > 1 ? fmt::format("{}{}", *type, i) : *type;
    TaskSpec spec;
    spec.type = *type;
    spec.name = s.get<std::string>("name", def_name);
    if (spec.name.empty() || spec.name.find_first_of("/\\") != std::string::npos) {
      detail::bad(path + ".name", "must be a plain file prefix");
    }
    if (!names.insert(spec.name).second) detail::bad(path + ".name", "duplicate task name '" + spec.name + "'");
    detail::parse_task_params(s, spec.type, cfg.seed);
    s.close();
    spec.params = echo["tasks"].back();
    cfg.tasks.push_back(std::move(spec));
  }
  top.close();
  return cfg;
}

inline PipelineConfig parse_config_file(const std::filesystem::path& path, const Overrides& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text, overrides);
}

}  // namespace eldm::cli
