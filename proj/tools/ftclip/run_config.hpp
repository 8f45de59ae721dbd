#pragma once

// Declarative run configuration for the ftclip CLI. Schema (all keys optional except "model"):
//
// {
//   "model": "path/to/model.ftc",
//   "dataset": {"kind": "synthetic", "seed": 2024, "count": 600, "shape": [1,28,28], "classes": 10}
//            | {"kind": "cifar10", "files": ["data_batch_5.bin", ...]}
//            | {"kind": "records", "files": [...], "shape": [C,H,W], "classes": K},
//   "split":   {"calibration_fraction": 0.1, "seed": S},
//   "sweep":   {"fault_rates": [0, ...], "trials_per_rate": 50, "scope": "network" | "layer:<graph index>",
//               "base_seed": S, "weights_only": false, "x_scale": "linear" | "index"},
//   "tune":    {"max_iterations": 10, "min_iterations": 3, "delta": 0.01, "layer_order": [...],
//               "scope": "layer" | "network", "fault_rates": [...], "trials_per_rate": 10, "base_seed": S},
//   "output_dir": "out",
//   "seed": 1,
//   "threads": 0
// }
//
// Relative paths resolve against the config file's directory. Seeds not given explicitly
// default to the top-level "seed".

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ftclip/ftclip.hpp"

namespace ftclip::cli {

using nlohmann::json;
namespace fs = std::filesystem;

/// Exit status categories.
enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kInternalError = 4 };

/// An error carrying its process exit code.
class CliError : public std::runtime_error {
 public:
  CliError(int code, const std::string& what) : std::runtime_error(what), code_(code) {}
  int code() const noexcept { return code_; }

 private:
  int code_;
};

struct DatasetSpec {
  enum class Kind { synthetic, cifar10, records };
  Kind kind = Kind::synthetic;
  std::uint64_t seed = 2024;
  std::size_t count = 600;
  Shape shape{1, 28, 28};
  std::size_t classes = 10;
  std::vector<std::string> files;
};

struct RunConfig {
  std::string model_path;
  DatasetSpec dataset;
  double calibration_fraction = 0.1;
  std::optional<std::uint64_t> split_seed;
  SweepConfig sweep;
  std::optional<std::uint64_t> sweep_seed;
  TuneConfig tune;
  std::optional<std::uint64_t> tune_seed;
  std::string output_dir = "out";
  std::uint64_t seed = 1;
  unsigned threads = 0;

  std::uint64_t effective_split_seed() const { return split_seed.value_or(seed); }

  SweepConfig effective_sweep() const {
    SweepConfig s = sweep;
    s.base_seed = sweep_seed.value_or(seed);
    return s;
  }

  TuneConfig effective_tune() const {
    TuneConfig t = tune;
    t.sweep.base_seed = tune_seed.value_or(seed);
    return t;
  }
};

inline FaultScope parse_scope(const std::string& s) {
  if (s == "network") return FaultScope::network();
  if (s.rfind("layer:", 0) == 0) {
    try {
      return FaultScope::single(std::stoul(s.substr(6)));
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("bad fault scope '" + s + "' (expected network or layer:<index>)");
}

inline std::string resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path.string() : (base / path).lexically_normal().string();
}

inline RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  RunConfig c;
  try {
    if (j.contains("model")) c.model_path = resolve(base_dir, j["model"].get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j["output_dir"].get<std::string>());
    if (j.contains("dataset")) {
      const auto& d = j["dataset"];
      const auto kind = d.value("kind", std::string("synthetic"));
      if (kind == "synthetic") {
        c.dataset.kind = DatasetSpec::Kind::synthetic;
        c.dataset.seed = d.value("seed", c.dataset.seed);
        c.dataset.count = d.value("count", c.dataset.count);
        if (d.contains("shape")) c.dataset.shape = d["shape"].get<Shape>();
        c.dataset.classes = d.value("classes", c.dataset.classes);
      } else if (kind == "cifar10" || kind == "records") {
        c.dataset.kind = kind == "cifar10" ? DatasetSpec::Kind::cifar10 : DatasetSpec::Kind::records;
        for (const auto& f : d.at("files")) c.dataset.files.push_back(resolve(base_dir, f.get<std::string>()));
        if (kind == "cifar10") {
          c.dataset.shape = kCifar10Shape;
          c.dataset.classes = kCifar10Classes;
        } else {
          c.dataset.shape = d.at("shape").get<Shape>();
          c.dataset.classes = d.at("classes").get<std::size_t>();
        }
      } else {
        throw ConfigError("unknown dataset kind '" + kind + "'");
      }
    }
    if (j.contains("split")) {
      c.calibration_fraction = j["split"].value("calibration_fraction", c.calibration_fraction);
      if (j["split"].contains("seed")) c.split_seed = j["split"]["seed"].get<std::uint64_t>();
    }
    if (j.contains("sweep")) {
      const auto& s = j["sweep"];
      if (s.contains("fault_rates")) c.sweep.fault_rates = s["fault_rates"].get<std::vector<double>>();
      c.sweep.trials_per_rate = s.value("trials_per_rate", c.sweep.trials_per_rate);
      if (s.contains("scope")) c.sweep.scope = parse_scope(s["scope"].get<std::string>());
      if (s.contains("base_seed")) c.sweep_seed = s["base_seed"].get<std::uint64_t>();
      c.sweep.weights_only = s.value("weights_only", c.sweep.weights_only);
      if (s.contains("x_scale")) c.sweep.x_scale = parse_xscale(s["x_scale"].get<std::string>());
    }
    c.tune.sweep.x_scale = c.sweep.x_scale;
    c.tune.sweep.weights_only = c.sweep.weights_only;
    if (j.contains("tune")) {
      const auto& t = j["tune"];
      c.tune.max_iterations = t.value("max_iterations", c.tune.max_iterations);
      c.tune.min_iterations = t.value("min_iterations", c.tune.min_iterations);
      c.tune.delta = t.value("delta", c.tune.delta);
      if (t.contains("layer_order")) c.tune.layer_order = t["layer_order"].get<std::vector<std::size_t>>();
      if (t.contains("scope")) {
        const auto scope = t["scope"].get<std::string>();
        if (scope == "layer") c.tune.scope = TuneScope::layer;
        else if (scope == "network") c.tune.scope = TuneScope::network;
        else throw ConfigError("tune scope must be layer or network, got '" + scope + "'");
      }
      if (t.contains("fault_rates")) c.tune.sweep.fault_rates = t["fault_rates"].get<std::vector<double>>();
      c.tune.sweep.trials_per_rate = t.value("trials_per_rate", c.tune.sweep.trials_per_rate);
      if (t.contains("base_seed")) c.tune_seed = t["base_seed"].get<std::uint64_t>();
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j, fs::path(path).parent_path());
}

inline std::string scope_string(const FaultScope& s) {
  return s.kind == FaultScope::Kind::network ? "network" : "layer:" + std::to_string(s.layer);
}

/// Canonical form of everything that can change an artifact. Threads and output paths are left
/// out: they never change results.
inline json canonical_json(const RunConfig& c) {
  json d;
  switch (c.dataset.kind) {
    case DatasetSpec::Kind::synthetic:
      d = {{"kind", "synthetic"}, {"seed", c.dataset.seed}, {"count", c.dataset.count},
           {"shape", c.dataset.shape}, {"classes", c.dataset.classes}};
      break;
    case DatasetSpec::Kind::cifar10:
    case DatasetSpec::Kind::records: {
      std::vector<std::string> names;
      for (const auto& f : c.dataset.files) names.push_back(fs::path(f).filename().string());
      d = {{"kind", c.dataset.kind == DatasetSpec::Kind::cifar10 ? "cifar10" : "records"}, {"files", names},
           {"shape", c.dataset.shape}, {"classes", c.dataset.classes}};
      break;
    }
  }
  const SweepConfig s = c.effective_sweep();
  const TuneConfig t = c.effective_tune();
  return {{"model", fs::path(c.model_path).filename().string()},
          {"dataset", d},
          {"split", {{"calibration_fraction", c.calibration_fraction}, {"seed", c.effective_split_seed()}}},
          {"sweep",
           {{"fault_rates", s.fault_rates}, {"trials_per_rate", s.trials_per_rate}, {"scope", scope_string(s.scope)},
            {"base_seed", s.base_seed}, {"weights_only", s.weights_only}, {"x_scale", to_string(s.x_scale)}}},
          {"tune",
           {{"max_iterations", t.max_iterations}, {"min_iterations", t.min_iterations}, {"delta", t.delta},
            {"layer_order", t.layer_order}, {"scope", t.scope == TuneScope::layer ? "layer" : "network"},
            {"fault_rates", t.sweep.fault_rates}, {"trials_per_rate", t.sweep.trials_per_rate},
            {"base_seed", t.sweep.base_seed}}},
          {"seed", c.seed}};
}

/// 64-bit FNV-1a, hex.
inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ftclip::cli
