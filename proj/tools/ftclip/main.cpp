// ftclip: fault-injection sweeps and clip-threshold tuning for stored-weight DNN models.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ftclip/ftclip.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ftclip::cli {
namespace {

struct CommonOptions {
  std::string config_path;
  std::string model;
  std::string output;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

struct Context {
  RunConfig cfg;
  std::string config_hash;
  std::vector<std::string> argv;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_path, "Run configuration (JSON)")->required();
  cmd->add_option("--model", o.model, "Override the model path");
  cmd->add_option("-o,--output", o.output, "Override the output directory");
  cmd->add_option("--seed", o.seed, "Override the master seed (and every derived seed)");
  cmd->add_option("-j,--threads", o.threads, "Worker threads (0 = all cores)");
}

Context make_context(const CommonOptions& o, const std::vector<std::string>& argv) {
  Context ctx;
  ctx.cfg = load_run_config(o.config_path);
  if (!o.model.empty()) ctx.cfg.model_path = o.model;
  if (!o.output.empty()) ctx.cfg.output_dir = o.output;
  if (o.seed) {
    ctx.cfg.seed = *o.seed;
    ctx.cfg.split_seed.reset();
    ctx.cfg.sweep_seed.reset();
    ctx.cfg.tune_seed.reset();
  }
  if (o.threads) ctx.cfg.threads = *o.threads;
  ctx.argv = argv;
  return ctx;
}

void finalize_hash(Context& ctx) { ctx.config_hash = fnv1a_hex(canonical_json(ctx.cfg).dump()); }

json provenance(const Context& ctx) {
  return {{"config_hash", ctx.config_hash}, {"seed", ctx.cfg.seed}, {"tool_version", FTCLIP_VERSION}};
}

Model load_model_checked(const std::string& path) {
  if (path.empty()) throw CliError(kConfigError, "no model path configured");
  if (!fs::exists(path)) throw CliError(kConfigError, "model file not found: " + path);
  return load_model(path);
}

Dataset load_dataset(const DatasetSpec& d) {
  if (d.kind == DatasetSpec::Kind::synthetic) return make_synthetic_set(d.seed, d.count, d.shape, d.classes);
  Dataset all;
  for (const auto& f : d.files) {
    if (!fs::exists(f)) throw CliError(kConfigError, "dataset file not found: " + f);
    Dataset part;
    if (d.kind == DatasetSpec::Kind::cifar10) {
      part = load_cifar10_batch(f);
    } else {
      const auto bytes = read_file_bytes(f);
      part = parse_label_records(bytes, d.shape, d.classes);
    }
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  if (all.empty()) throw DataFormatError("dataset is empty");
  return all;
}

struct Splits {
  Dataset calibration;
  Dataset evaluation;
};

Splits load_splits(const RunConfig& cfg, const Model& model) {
  const Dataset all = load_dataset(cfg.dataset);
  if (all.front().image.shape() != model.input_shape) {
    throw DataFormatError("dataset image shape " + shape_to_string(all.front().image.shape()) +
                          " does not match model input " + shape_to_string(model.input_shape));
  }
  for (const auto& s : all) {
    if (s.label >= model.classes) throw DataFormatError("label " + std::to_string(s.label) + " >= model class count");
  }
  const SplitSpec split = SplitSpec::make(all.size(), cfg.calibration_fraction, cfg.effective_split_seed());
  split.validate(all.size());
  return {select(all, split.calibration), select(all, split.evaluation)};
}

void require_nonempty(const Dataset& d, const char* what) {
  if (d.empty()) throw DataFormatError(std::string(what) + " split is empty");
}

fs::path ensure_output(const RunConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  return cfg.output_dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CliError(kConfigError, "cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// Timestamps live only here so the artifacts themselves stay rerun-stable.
void append_log(const Context& ctx, const std::string& command) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  std::ofstream log(fs::path(ctx.cfg.output_dir) / "run.log", std::ios::app);
  log << stamp << ' ' << command << " config_hash=" << ctx.config_hash << " threads=" << resolve_threads(ctx.cfg.threads)
      << " argv=";
  for (const auto& a : ctx.argv) log << ' ' << a;
  log << '\n';
}

json thresholds_json(const Model& m) {
  json out = json::array();
  for (const auto& t : m.thresholds()) {
    if (t) out.push_back(static_cast<double>(*t));
    else out.push_back(nullptr);
  }
  return out;
}

// ---------------------------------------------------------------------------------------------

int cmd_profile(Context& ctx) {
  finalize_hash(ctx);
  const Model model = load_model_checked(ctx.cfg.model_path);
  const Splits splits = load_splits(ctx.cfg, model);
  require_nonempty(splits.calibration, "calibration");
  const auto out_dir = ensure_output(ctx.cfg);
  const ActivationProfile prof = profile(model, splits.calibration, ctx.cfg.threads);
  json j = to_json(prof);
  j["provenance"] = provenance(ctx);
  write_json(out_dir / "profile.json", j);
  append_log(ctx, "profile");
  for (const auto& l : prof.layers) std::cout << l.name << " act_max=" << l.act_max << '\n';
  return kOk;
}

int cmd_sweep(Context& ctx, const std::string& clip, const std::string& tuned_model, bool svg,
              std::optional<std::size_t> trials, std::vector<double> rates) {
  if (trials) ctx.cfg.sweep.trials_per_rate = *trials;
  if (!rates.empty()) ctx.cfg.sweep.fault_rates = std::move(rates);
  ctx.cfg.sweep.validate();
  finalize_hash(ctx);
  const Model stored = load_model_checked(clip == "tuned" && !tuned_model.empty() ? tuned_model : ctx.cfg.model_path);
  const Splits splits = load_splits(ctx.cfg, stored);
  require_nonempty(splits.evaluation, "evaluation");

  Model model;
  if (clip == "none") {
    model = strip_thresholds(stored);
  } else if (clip == "actmax") {
    require_nonempty(splits.calibration, "calibration");
    const auto prof = profile(strip_thresholds(stored), splits.calibration, ctx.cfg.threads);
    auto t = prof.act_max();
    for (auto& v : t) v = std::max(v, 0.0f);
    model = set_thresholds(stored, t);
  } else if (clip == "tuned") {
    const auto th = stored.thresholds();
    if (th.empty() || std::any_of(th.begin(), th.end(), [](const auto& t) { return !t.has_value(); })) {
      throw CliError(kConfigError, "--clip tuned needs a model with clip thresholds (run `ftclip tune` and pass "
                                   "--tuned-model)");
    }
    model = stored;
  } else {
    throw CliError(kConfigError, "unknown clip mode '" + clip + "' (expected none, actmax or tuned)");
  }

  const SweepConfig sweep = ctx.cfg.effective_sweep();
  const SweepResult res = run_sweep(model, sweep, splits.evaluation, ctx.cfg.threads);
  // A single-rate sweep has no area under its curve.
  const std::optional<AucResult> auc =
      res.rates.size() >= 2 ? std::optional(compute_auc(res, sweep.x_scale)) : std::nullopt;

  const auto out_dir = ensure_output(ctx.cfg);
  std::ostringstream csv;
  csv << "# config_hash=" << ctx.config_hash << " seed=" << ctx.cfg.seed << " tool_version=" << FTCLIP_VERSION
      << " clip=" << clip << '\n';
  write_sweep_csv(csv, res);
  write_text(out_dir / "sweep.csv", csv.str());

  json j = to_json(res);
  j["clip"] = clip;
  j["thresholds"] = thresholds_json(model);
  j["scope"] = scope_string(sweep.scope);
  j["x_scale"] = to_string(sweep.x_scale);
  j["auc"] = auc ? to_json(*auc) : nlohmann::json(nullptr);
  j["provenance"] = provenance(ctx);
  write_json(out_dir / "sweep.json", j);
  if (svg) {
    std::ostringstream os;
    write_sweep_svg(os, {{clip, &res}}, "accuracy vs fault rate (clip=" + clip + ")");
    write_text(out_dir / "sweep.svg", os.str());
  }
  append_log(ctx, "sweep --clip " + clip);
  std::cout << "baseline_accuracy=" << res.baseline;
  if (auc) std::cout << " auc=" << auc->auc;
  std::cout << '\n';
  return kOk;
}

int cmd_tune(Context& ctx, std::optional<int> n, std::optional<int> m, std::optional<double> delta) {
  if (n) ctx.cfg.tune.max_iterations = *n;
  if (m) ctx.cfg.tune.min_iterations = *m;
  if (delta) ctx.cfg.tune.delta = *delta;
  const TuneConfig tune = ctx.cfg.effective_tune();
  tune.validate();
  finalize_hash(ctx);
  const Model model = strip_thresholds(load_model_checked(ctx.cfg.model_path));
  const auto out_dir = ensure_output(ctx.cfg);
  const std::uint32_t checksum = param_checksum(model);

  TunedNetwork tuned{model, {}};
  json prof_json = json::object();
  if (model.activation_layers().empty()) {
    std::cerr << "warning: nothing to tune (model has no activation layers)\n";
  } else {
    const Splits splits = load_splits(ctx.cfg, model);
    require_nonempty(splits.calibration, "calibration");
    const ActivationProfile prof = profile(model, splits.calibration, ctx.cfg.threads);
    prof_json = to_json(prof);
    tuned = tune_network(model, prof, tune, splits.calibration, ctx.cfg.threads);
  }
  if (param_checksum(tuned.model) != checksum) {
    throw CliError(kInternalError, "invariant violated: tuning changed parameter words");
  }

  tuned.model.metadata["config_hash"] = ctx.config_hash;
  tuned.model.metadata["seed"] = std::to_string(ctx.cfg.seed);
  tuned.model.metadata["tool_version"] = FTCLIP_VERSION;
  save_model(tuned.model, (out_dir / "tuned.ftc").string());

  json traces = json::array();
  for (const auto& t : tuned.traces) traces.push_back(to_json(t));
  write_json(out_dir / "traces.json",
             {{"thresholds", thresholds_json(tuned.model)}, {"traces", traces}, {"provenance", provenance(ctx)}});
  if (!prof_json.empty()) {
    prof_json["provenance"] = provenance(ctx);
    write_json(out_dir / "profile.json", prof_json);
  }
  append_log(ctx, "tune");
  for (const auto& t : tuned.traces) {
    std::cout << t.layer_name << " act_max=" << t.act_max << " T=" << t.threshold
              << " iterations=" << t.iterations.size() << " exit=" << to_string(t.exit_reason) << '\n';
  }
  return kOk;
}

int cmd_inject(Context& ctx, double rate, std::optional<std::size_t> layer, bool emit_mask,
               const std::string& mask_file, std::uint64_t trial) {
  finalize_hash(ctx);
  const Model model = load_model_checked(ctx.cfg.model_path);
  const Splits splits = load_splits(ctx.cfg, model);
  require_nonempty(splits.evaluation, "evaluation");
  const FaultScope scope = layer ? FaultScope::single(*layer) : FaultScope::network();
  try {
    scope_layers(model, scope);
  } catch (const FaultError& e) {
    throw CliError(kConfigError, e.what());
  }
  if (!(rate >= 0.0 && rate <= 1.0)) throw CliError(kConfigError, "--rate must be in [0, 1]");

  FaultMask mask;
  if (!mask_file.empty()) {
    std::ifstream in(mask_file);
    if (!in) throw CliError(kConfigError, "mask file not found: " + mask_file);
    mask = read_mask_jsonl(in);
    try {
      validate_mask(model, mask);
    } catch (const FaultError& e) {
      throw CliError(kDataError, std::string("mask does not fit model: ") + e.what());
    }
  } else {
    mask = draw_mask(model, {rate, scope, ctx.cfg.effective_sweep().base_seed, trial, ctx.cfg.sweep.weights_only});
  }
  const AccuracyReport clean = evaluate_accuracy(model, nullptr, splits.evaluation, ctx.cfg.threads);
  const AccuracyReport faulty = evaluate_accuracy(model, &mask, splits.evaluation, ctx.cfg.threads);

  const auto out_dir = ensure_output(ctx.cfg);
  if (emit_mask) {
    std::ostringstream os;
    write_mask_jsonl(os, mask);
    write_text(out_dir / "mask.jsonl", os.str());
  }
  json j = {{"rate", rate},
            {"scope", scope_string(scope)},
            {"trial", trial},
            {"mask_source", mask_file.empty() ? "drawn" : "file"},
            {"flips", mask.size()},
            {"bits_in_scope", bits_in_scope(model, scope, ctx.cfg.sweep.weights_only)},
            {"baseline_accuracy", clean.accuracy()},
            {"accuracy", faulty.accuracy()},
            {"correct", faulty.correct},
            {"total", faulty.total},
            {"degenerate_logits", faulty.degenerate},
            {"provenance", provenance(ctx)}};
  write_json(out_dir / "inject.json", j);
  append_log(ctx, "inject");
  std::cout << "flips=" << mask.size() << " baseline_accuracy=" << clean.accuracy()
            << " accuracy=" << faulty.accuracy() << '\n';
  return kOk;
}

int cmd_synth(std::uint64_t seed, std::size_t count, const Shape& shape, std::size_t classes, const std::string& out) {
  const Dataset data = make_synthetic_set(seed, count, shape, classes);
  const auto bytes = encode_label_records(data);
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw CliError(kConfigError, "cannot write " + out);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  std::cout << "wrote " << count << " records to " << out << '\n';
  return kOk;
}

int cmd_info(const std::string& path) {
  const Model model = load_model_checked(path);
  std::cout << model_manifest(model).dump(2) << '\n';
  std::cout << "param_words=" << model.total_words() << " crc32=" << std::hex << param_checksum(model) << std::dec
            << '\n';
  return kOk;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Bit-flip fault injection and clipped-activation hardening for DNN models"};
  app.set_version_flag("--version", std::string(FTCLIP_VERSION));
  app.require_subcommand(1);
  const std::vector<std::string> args(argv, argv + argc);

  CommonOptions common;

  auto* profile_cmd = app.add_subcommand("profile", "Profile activation statistics on the calibration split");
  add_common(profile_cmd, common);

  std::string clip = "none", tuned_model;
  bool svg = false;
  std::optional<std::size_t> trials;
  std::vector<double> rates;
  auto* sweep_cmd = app.add_subcommand("sweep", "Accuracy vs fault-rate sweep and AUC on the evaluation split");
  add_common(sweep_cmd, common);
  sweep_cmd->add_option("--clip", clip, "Model variant: none | actmax | tuned");
  sweep_cmd->add_option("--tuned-model", tuned_model, "Model with tuned thresholds (for --clip tuned)");
  sweep_cmd->add_option("--trials", trials, "Trials per fault rate");
  sweep_cmd->add_option("--rates", rates, "Fault-rate grid (comma separated, starts at 0)")->delimiter(',');
  sweep_cmd->add_flag("--svg", svg, "Also write sweep.svg");

  std::optional<int> max_iter, min_iter;
  std::optional<double> delta;
  auto* tune_cmd = app.add_subcommand("tune", "Profile, clip at act_max, then tune per-layer thresholds");
  add_common(tune_cmd, common);
  tune_cmd->add_option("-N,--max-iterations", max_iter, "Maximum search iterations per layer");
  tune_cmd->add_option("-M,--min-iterations", min_iter, "Iterations before the plateau exit may fire");
  tune_cmd->add_option("--delta", delta, "AUC plateau tolerance");

  double rate = 0.0;
  std::optional<std::size_t> layer;
  bool network = false, emit_mask = false;
  std::string mask_file;
  std::uint64_t trial = 0;
  auto* inject_cmd = app.add_subcommand("inject", "Single fault campaign on the evaluation split");
  add_common(inject_cmd, common);
  inject_cmd->add_option("--rate", rate, "Per-bit flip probability");
  auto* layer_opt = inject_cmd->add_option("--layer", layer, "Graph index of the conv/fc layer to target");
  auto* network_opt = inject_cmd->add_flag("--network", network, "Target every parametric layer (default)");
  layer_opt->excludes(network_opt);
  inject_cmd->add_flag("--emit-mask", emit_mask, "Write the realized mask to mask.jsonl");
  inject_cmd->add_option("--mask-file", mask_file, "Replay a mask.jsonl instead of drawing one");
  inject_cmd->add_option("--trial", trial, "Trial id used for drawing the mask");

  std::uint64_t synth_seed = 2024;
  std::size_t synth_count = 1000, synth_classes = 10;
  Shape synth_shape{1, 28, 28};
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic labeled set in label+pixel record layout");
  synth_cmd->add_option("--seed", synth_seed);
  synth_cmd->add_option("--count", synth_count);
  synth_cmd->add_option("--shape", synth_shape)->delimiter(',')->expected(3);
  synth_cmd->add_option("--classes", synth_classes);
  synth_cmd->add_option("--out", synth_out)->required();

  std::string info_path;
  auto* info_cmd = app.add_subcommand("info", "Print a model's manifest");
  info_cmd->add_option("model", info_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth_seed, synth_count, synth_shape, synth_classes, synth_out);
    if (*info_cmd) return cmd_info(info_path);
    Context ctx = make_context(common, args);
    if (*profile_cmd) return cmd_profile(ctx);
    if (*sweep_cmd) return cmd_sweep(ctx, clip, tuned_model, svg, trials, rates);
    if (*tune_cmd) return cmd_tune(ctx, max_iter, min_iter, delta);
    if (*inject_cmd) return cmd_inject(ctx, rate, layer, emit_mask, mask_file, trial);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DataFormatError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const ModelFormatError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return e.code() == ModelFormatError::Code::io ? kConfigError : kDataError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
  return kInternalError;
}

}  // namespace ftclip::cli

int main(int argc, char** argv) { return ftclip::cli::run(argc, argv); }
