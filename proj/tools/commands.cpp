#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedhar/evaluation.hpp"
#include "fedhar/experiment.hpp"
#include "fedhar/models.hpp"
#include "fedhar/pose_dataset.hpp"
#include "fedhar/synth.hpp"
#include "fedhar/training.hpp"

namespace fedhar::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config: return kConfig;
    case ErrorKind::data:
    case ErrorKind::dimension:
    case ErrorKind::partition: return kData;
    case ErrorKind::numeric_health: return kNumericHealth;
    case ErrorKind::io: return kIo;
    case ErrorKind::evaluation: return kEvaluation;
    case ErrorKind::aggregation: return kAggregation;
  }
  return kInternal;
}

namespace {

struct GlobalFlags {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> parallel_clients;
};

fs::path require_out(const GlobalFlags& g, const char* what) {
  if (!g.out) throw ConfigError(std::string("--out is required for ") + what);
  return *g.out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

/// Manifest for single-file outputs: <file>.manifest.json beside it.
void write_file_manifest(std::string_view command, const json& config, const json& seeds,
                         const std::vector<fs::path>& inputs, const fs::path& output) {
  const auto dir = output.has_parent_path() ? output.parent_path() : fs::path(".");
  const auto manifest = build_manifest(command, config, seeds, inputs, {output}, dir);
  write_text(fs::path(output.string() + ".manifest.json"), manifest.dump(2) + "\n");
}

// --- synth ----------------------------------------------------------------------

struct SynthArgs {
  SynthSpec spec;
};

int cmd_synth(const SynthArgs& a, const GlobalFlags& g, std::ostream& out) {
  const auto path = require_out(g, "synth");
  const auto seed = g.seed.value_or(0);
  const auto frames = synthesize_dataset(a.spec, seed);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    write_frames(f, frames);
    if (!f) throw IoError("failed writing " + path.string());
  }
  const json config = {{"subjects", a.spec.subjects},
                       {"recordings_per_subject", a.spec.recordings_per_subject},
                       {"frames_per_recording", a.spec.frames_per_recording},
                       {"min_segment", a.spec.min_segment},
                       {"max_segment", a.spec.max_segment},
                       {"style_strength", a.spec.style_strength},
                       {"placement_jitter", a.spec.placement_jitter},
                       {"class_skew", a.spec.class_skew},
                       {"noise", a.spec.noise},
                       {"low_confidence_rate", a.spec.low_confidence_rate},
                       {"image_width", a.spec.image_width},
                       {"image_height", a.spec.image_height}};
  write_file_manifest("synth", config, {{"synthesis", seed}}, {}, path);
  out << "wrote " << frames.size() << " frames for " << a.spec.subjects << " subjects to "
      << path.string() << '\n';
  return kOk;
}

// --- prepare --------------------------------------------------------------------

struct PrepareArgs {
  std::string input;
  double width = 640.0;
  double height = 480.0;
};

int cmd_prepare(const PrepareArgs& a, const GlobalFlags& g, std::ostream& out) {
  const auto path = require_out(g, "prepare");
  if (fs::absolute(path) == fs::absolute(a.input)) {
    throw ConfigError("prepare: --out must differ from --input");
  }
  PrepareOptions options;
  options.image_width = a.width;
  options.image_height = a.height;
  options.seed = g.seed.value_or(0);
  const auto clients = prepare_clients(load_frames(a.input), options);
  const auto tagged = tag_splits(clients);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    write_windows(f, tagged);
    if (!f) throw IoError("failed writing " + path.string());
  }
  const json config = {{"input", a.input}, {"image_width", a.width}, {"image_height", a.height}};
  write_file_manifest("prepare", config, {{"split", options.seed}}, {a.input}, path);
  for (const auto& c : clients) {
    out << c.client_id << ": train " << c.train.size() << ", val " << c.val.size() << ", test "
        << c.test.size() << '\n';
    for (const auto& w : c.warnings) out << "  warning: " << w << '\n';
  }
  return kOk;
}

// --- train ----------------------------------------------------------------------

struct TrainArgs {
  std::string config;
};

int cmd_train(const TrainArgs& a, const GlobalFlags& g, std::ostream& out) {
  auto config = load_experiment_config(a.config);
  if (g.seed) config.seed = *g.seed;
  if (g.out) config.output_dir = *g.out;
  if (g.parallel_clients) config.parallel_clients = *g.parallel_clients;
  config.validate();
  for (const auto& w : config.budget_warnings()) out << "warning: " << w << '\n';

  const auto result = run_experiment(config);
  write_run_outputs(config, result, config.output_dir);

  const auto& r = result.report;
  out << r.paradigm << '/' << to_string(r.model) << ": global test accuracy "
      << r.global_test_accuracy << " on " << r.global_test_size << " windows\n";
  if (r.external) {
    out << "external client " << r.external->client_id << ": accuracy " << r.external->accuracy
        << '\n';
  }
  out << "outputs in " << config.output_dir.string() << '\n';
  return kOk;
}

// --- eval -----------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string model;
  std::string data;
  std::string split = "test";
  std::string client;
};

std::vector<WindowSample> select_windows(std::span<const TaggedWindow> tagged,
                                         const std::string& split, const std::string& client) {
  if (split != "train" && split != "val" && split != "test" && split != "all") {
    throw ConfigError("unknown split '" + split + "' (valid: train, val, test, all)");
  }
  std::vector<WindowSample> out;
  for (const auto& t : tagged) {
    if (split != "all" && t.split != split) continue;
    if (!client.empty() && t.window.client_id != client) continue;
    out.push_back(t.window);
  }
  if (out.empty()) throw DataError("no windows match split '" + split + "'" +
                                   (client.empty() ? "" : " and client " + client));
  return out;
}

int cmd_eval(const EvalArgs& a, const GlobalFlags& g, std::ostream& out) {
  const auto dir = require_out(g, "eval");
  const auto kind = parse_model_kind(a.model);
  if (!kind) throw ConfigError("unknown model '" + a.model + "' (valid: lstm, transformer)");
  const auto ckpt = load_checkpoint(a.checkpoint);
  if (ckpt.config.kind != *kind) {
    throw ConfigError("checkpoint " + a.checkpoint + " holds a " +
                      std::string(to_string(ckpt.config.kind)) + " model, not " + a.model);
  }
  const auto windows = select_windows(load_windows(a.data), a.split, a.client);
  const auto ev = evaluate(ckpt.params, ckpt.config, windows);
  const auto preds = predict_all(ckpt.params, ckpt.config, windows);

  json predictions = json::array();
  for (std::size_t i = 0; i < windows.size(); ++i) {
    predictions.push_back({{"window", windows[i].id()},
                           {"label", std::string(to_string(windows[i].label))},
                           {"predicted", std::string(to_string(preds[i].label))},
                           {"confidence", preds[i].confidence}});
  }
  json rows = json::array();
  for (const auto& row : ev.confusion.counts) rows.push_back(row);
  const json result = {{"schema_version", kReportSchemaVersion},
                       {"model", a.model},
                       {"split", a.split},
                       {"client", a.client},
                       {"windows", windows.size()},
                       {"accuracy", ev.accuracy},
                       {"loss", ev.loss},
                       {"per_class_accuracy", ev.confusion.per_class_accuracy()},
                       {"confusion", rows},
                       {"predictions", predictions}};
  write_text(dir / "eval.json", result.dump(2) + "\n");
  {
    std::ofstream f(dir / "confusion.csv");
    if (!f) throw IoError("cannot write " + (dir / "confusion.csv").string());
    write_confusion_csv(f, ev.confusion);
  }
  const json config = {{"checkpoint", a.checkpoint}, {"model", a.model}, {"data", a.data},
                       {"split", a.split}, {"client", a.client}};
  write_manifest(build_manifest("eval", config, {{"checkpoint", ckpt.seed}},
                                {a.checkpoint, a.data}, {dir / "confusion.csv", dir / "eval.json"},
                                dir),
                 dir);
  out << "accuracy " << ev.accuracy << " on " << windows.size() << " windows\n";
  return kOk;
}

// --- matrix ---------------------------------------------------------------------

struct MatrixArgs {
  std::vector<std::string> checkpoints;
  std::string data;
};

int cmd_matrix(const MatrixArgs& a, const GlobalFlags& g, std::ostream& out) {
  const auto dir = require_out(g, "matrix");
  const auto clients = untag_splits(load_windows(a.data));
  if (a.checkpoints.size() != clients.size()) {
    throw ConfigError("matrix: " + std::to_string(a.checkpoints.size()) + " checkpoints for " +
                      std::to_string(clients.size()) + " clients (one per client, in client order)");
  }
  std::vector<nn::ParameterSet> models;
  std::optional<ModelConfig> model;
  for (const auto& path : a.checkpoints) {
    auto ckpt = load_checkpoint(path);
    if (model && to_json(*model) != to_json(ckpt.config)) {
      throw ConfigError("matrix: checkpoint " + path + " has a different model configuration");
    }
    model = ckpt.config;
    models.push_back(std::move(ckpt.params));
  }
  const auto global = compile_global_test(clients);
  const auto matrix = cross_client_eval(models, *model, clients, global.windows);

  fs::create_directories(dir);
  {
    std::ofstream f(dir / "cross_client.csv");
    if (!f) throw IoError("cannot write " + (dir / "cross_client.csv").string());
    write_cross_client_csv(f, matrix);
  }
  std::vector<fs::path> inputs;
  for (const auto& c : a.checkpoints) inputs.emplace_back(c);
  inputs.emplace_back(a.data);
  json config = {{"checkpoints", a.checkpoints}, {"data", a.data}};
  write_manifest(build_manifest("matrix", config, json::object(), inputs,
                                {dir / "cross_client.csv"}, dir),
                 dir);
  for (const auto& w : global.warnings) out << "warning: " << w << '\n';
  write_cross_client_csv(out, matrix);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Federated pose-sequence gesture recognition simulator", "fedhar"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags global;
  app.add_option("--seed", global.seed, "Seed for synthesis, splitting and training");
  app.add_option("--out", global.out, "Output file (synth, prepare) or directory");
  app.add_option("--parallel-clients", global.parallel_clients,
                 "Clients trained concurrently (results do not depend on it)")
      ->check(CLI::PositiveNumber);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate synthetic COCO-17 keypoint recordings");
  s->add_option("--subjects", synth.spec.subjects)->capture_default_str();
  s->add_option("--recordings", synth.spec.recordings_per_subject)->capture_default_str();
  s->add_option("--frames", synth.spec.frames_per_recording)->capture_default_str();
  s->add_option("--style-strength", synth.spec.style_strength)->capture_default_str();
  s->add_option("--placement-jitter", synth.spec.placement_jitter)->capture_default_str();
  s->add_option("--class-skew", synth.spec.class_skew)->capture_default_str();
  s->add_option("--noise", synth.spec.noise)->capture_default_str();

  PrepareArgs prepare;
  auto* p = app.add_subcommand("prepare", "Raw keypoint frames to split 20-frame windows");
  p->add_option("--input", prepare.input, "Raw frames (JSON lines)")->required();
  p->add_option("--image-width", prepare.width)->capture_default_str();
  p->add_option("--image-height", prepare.height)->capture_default_str();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Run one experiment from an INI config");
  t->add_option("--config", train.config)->required();

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on prepared windows");
  e->add_option("--checkpoint", eval.checkpoint)->required();
  e->add_option("--model", eval.model, "Expected model kind (lstm, transformer)")->required();
  e->add_option("--data", eval.data, "Prepared windows (JSON lines)")->required();
  e->add_option("--split", eval.split, "train, val, test or all")->capture_default_str();
  e->add_option("--client", eval.client, "Restrict to one client");

  MatrixArgs matrix;
  auto* m = app.add_subcommand("matrix", "Cross-client accuracy matrix of per-client models");
  m->add_option("--checkpoint", matrix.checkpoints, "One per client, in client order")
      ->required();
  m->add_option("--data", matrix.data, "Prepared windows (JSON lines)")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, global, out);
    if (p->parsed()) return cmd_prepare(prepare, global, out);
    if (t->parsed()) return cmd_train(train, global, out);
    if (e->parsed()) return cmd_eval(eval, global, out);
    if (m->parsed()) return cmd_matrix(matrix, global, out);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return exit_code_for(ex.kind());
  } catch (const fs::filesystem_error& ex) {
    err << "error: " << ex.what() << '\n';
    return kIo;
  } catch (const std::exception& ex) {
    err << "internal error: " << ex.what() << '\n';
    return kInternal;
  }
  return kUsage;
}

}  // namespace fedhar::cli
