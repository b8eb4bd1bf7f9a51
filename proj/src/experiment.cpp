#include "fedhar/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include "fedhar/error.hpp"
#include "fedhar/federation.hpp"
#include "fedhar/rng.hpp"

namespace fedhar {

using nlohmann::json;
namespace pt = boost::property_tree;

namespace {

constexpr std::array<std::string_view, 4> kParadigmNames = {"centralized", "local", "fedavg",
                                                            "fedensemble"};

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"experiment", {"paradigm", "model", "seed", "output", "parallel_clients"}},
      {"data",
       {"source", "path", "seed", "image_width", "image_height", "external_client", "subjects",
        "recordings_per_subject", "frames_per_recording", "min_segment", "max_segment",
        "style_strength", "placement_jitter", "class_skew", "noise", "low_confidence_rate"}},
      {"federation", {"rounds", "local_epochs", "partitions"}},
      {"training", {"batch_size", "lr", "max_epochs", "patience"}},
      {"model", {"hidden", "layers", "d_model", "heads", "encoder_layers", "feedforward_dim"}},
  };
  return keys;
}

std::string join(const auto& names) {
  std::string out;
  for (const auto& n : names) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

template <typename T>
T read(const pt::ptree& tree, const std::string& key, T fallback) {
  const auto node = tree.get_optional<std::string>(key);
  if (!node) return fallback;
  std::istringstream in(*node);
  T value{};
  in >> value;
  if (!in || !(in >> std::ws).eof()) {
    throw ConfigError("config key " + key + ": cannot parse '" + *node + "'");
  }
  if constexpr (std::is_unsigned_v<T>) {
    if (node->find('-') != std::string::npos) {
      throw ConfigError("config key " + key + " must be non-negative");
    }
  }
  return value;
}

std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::size_t> histogram_vector(const std::array<std::size_t, kNumClasses>& h) {
  return {h.begin(), h.end()};
}

}  // namespace

std::string_view to_string(Paradigm p) noexcept {
  return kParadigmNames[static_cast<std::size_t>(p)];
}

std::optional<Paradigm> parse_paradigm(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kParadigmNames.size(); ++i) {
    if (kParadigmNames[i] == name) return static_cast<Paradigm>(i);
  }
  return std::nullopt;
}

std::string_view to_string(DataSource s) noexcept {
  switch (s) {
    case DataSource::synthetic: return "synthetic";
    case DataSource::raw: return "raw";
    case DataSource::windows: return "windows";
  }
  return "synthetic";
}

void ExperimentConfig::validate() const {
  model.validate();
  training.validate();
  if (source != DataSource::synthetic && data_path.empty()) {
    throw ConfigError("data.path is required for source " + std::string(to_string(source)));
  }
  if (source == DataSource::synthetic) {
    if (synth.subjects == 0) throw ConfigError("data.subjects must be at least 1");
    if (synth.min_segment == 0 || synth.max_segment < synth.min_segment) {
      throw ConfigError("data.min_segment/max_segment must satisfy 0 < min <= max");
    }
  }
  if (!(image_width > 0.0) || !(image_height > 0.0)) {
    throw ConfigError("data.image_width and data.image_height must be positive");
  }
  if (paradigm == Paradigm::fedensemble && partitions < 2) {
    throw ConfigError("federation.partitions must be at least 2 for fedensemble");
  }
  if ((paradigm == Paradigm::fedavg || paradigm == Paradigm::fedensemble) && rounds == 0) {
    throw ConfigError("federation.rounds must be at least 1");
  }
  if (paradigm == Paradigm::centralized || paradigm == Paradigm::local) {
    if (training.max_epochs == 0) throw ConfigError("training.max_epochs must be at least 1");
  }
}

std::vector<std::string> ExperimentConfig::budget_warnings() const {
  std::vector<std::string> out;
  if (paradigm != Paradigm::fedavg && paradigm != Paradigm::fedensemble) return out;
  if (rounds * local_epochs != training.max_epochs) {
    out.push_back("budget parity: rounds x local_epochs = " + std::to_string(rounds) + " x " +
                  std::to_string(local_epochs) + " = " + std::to_string(rounds * local_epochs) +
                  " differs from max_epochs = " + std::to_string(training.max_epochs));
  }
  return out;
}

ExperimentConfig parse_experiment_config(std::istream& in, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  const auto& keys = known_keys();
  for (const auto& [section, body] : tree) {
    const auto it = keys.find(section);
    if (it == keys.end()) {
      std::vector<std::string> names;
      for (const auto& [n, _] : keys) names.push_back(n);
      throw ConfigError("config: unknown section [" + section + "] (valid: " + join(names) + ")");
    }
    for (const auto& [key, _] : body) {
      if (!it->second.contains(key)) {
        throw ConfigError("config: unknown key " + section + "." + key +
                          " (valid: " + join(it->second) + ")");
      }
    }
  }

  ExperimentConfig c;
  const auto paradigm = tree.get<std::string>("experiment.paradigm", "fedavg");
  const auto p = parse_paradigm(paradigm);
  if (!p) {
    throw ConfigError("unknown paradigm '" + paradigm + "' (valid: " + join(kParadigmNames) + ")");
  }
  c.paradigm = *p;
  const auto model = tree.get<std::string>("experiment.model", "lstm");
  const auto kind = parse_model_kind(model);
  if (!kind) throw ConfigError("unknown model '" + model + "' (valid: lstm, transformer)");
  c.model.kind = *kind;
  c.seed = read<std::uint64_t>(tree, "experiment.seed", c.seed);
  c.output_dir = tree.get<std::string>("experiment.output", c.output_dir.string());
  c.parallel_clients = read<std::size_t>(tree, "experiment.parallel_clients", c.parallel_clients);

  const auto source = tree.get<std::string>("data.source", "synthetic");
  if (source == "synthetic") c.source = DataSource::synthetic;
  else if (source == "raw") c.source = DataSource::raw;
  else if (source == "windows") c.source = DataSource::windows;
  else throw ConfigError("unknown data.source '" + source + "' (valid: synthetic, raw, windows)");
  if (const auto path = tree.get_optional<std::string>("data.path"); path && !path->empty()) {
    c.data_path = *path;
    if (c.data_path.is_relative() && !base_dir.empty()) c.data_path = base_dir / c.data_path;
  }
  if (tree.get_optional<std::string>("data.seed")) c.data_seed = read<std::uint64_t>(tree, "data.seed", 0);
  c.image_width = read(tree, "data.image_width", c.image_width);
  c.image_height = read(tree, "data.image_height", c.image_height);
  c.external_client = tree.get<std::string>("data.external_client", "");

  auto& s = c.synth;
  s.subjects = read(tree, "data.subjects", s.subjects);
  s.recordings_per_subject = read(tree, "data.recordings_per_subject", s.recordings_per_subject);
  s.frames_per_recording = read(tree, "data.frames_per_recording", s.frames_per_recording);
  s.min_segment = read(tree, "data.min_segment", s.min_segment);
  s.max_segment = read(tree, "data.max_segment", s.max_segment);
  s.style_strength = read(tree, "data.style_strength", s.style_strength);
  s.placement_jitter = read(tree, "data.placement_jitter", s.placement_jitter);
  s.class_skew = read(tree, "data.class_skew", s.class_skew);
  s.noise = read(tree, "data.noise", s.noise);
  s.low_confidence_rate = read(tree, "data.low_confidence_rate", s.low_confidence_rate);
  s.image_width = c.image_width;
  s.image_height = c.image_height;

  c.rounds = read(tree, "federation.rounds", c.rounds);
  c.local_epochs = read(tree, "federation.local_epochs", c.local_epochs);
  c.partitions = read(tree, "federation.partitions", c.partitions);

  c.training.batch_size = read(tree, "training.batch_size", c.training.batch_size);
  c.training.lr = read(tree, "training.lr", c.training.lr);
  c.training.max_epochs = read(tree, "training.max_epochs", c.training.max_epochs);
  c.training.patience = read(tree, "training.patience", c.training.patience);

  c.model.lstm.hidden = read(tree, "model.hidden", c.model.lstm.hidden);
  c.model.lstm.layers = read(tree, "model.layers", c.model.lstm.layers);
  c.model.transformer.d_model = read(tree, "model.d_model", c.model.transformer.d_model);
  c.model.transformer.heads = read(tree, "model.heads", c.model.transformer.heads);
  c.model.transformer.encoder_layers =
      read(tree, "model.encoder_layers", c.model.transformer.encoder_layers);
  c.model.transformer.feedforward_dim =
      read(tree, "model.feedforward_dim", c.model.transformer.feedforward_dim);

  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_experiment_config(in, path.parent_path());
}

std::string to_ini(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "[experiment]\n"
    << "paradigm = " << to_string(c.paradigm) << '\n'
    << "model = " << to_string(c.model.kind) << '\n'
    << "seed = " << c.seed << '\n'
    << "output = " << c.output_dir.string() << '\n'
    << "parallel_clients = " << c.parallel_clients << "\n\n";
  o << "[data]\n"
    << "source = " << to_string(c.source) << '\n';
  if (!c.data_path.empty()) o << "path = " << c.data_path.string() << '\n';
  if (c.data_seed) o << "seed = " << *c.data_seed << '\n';
  o << "image_width = " << exact(c.image_width) << '\n'
    << "image_height = " << exact(c.image_height) << '\n';
  if (!c.external_client.empty()) o << "external_client = " << c.external_client << '\n';
  if (c.source == DataSource::synthetic) {
    const auto& s = c.synth;
    o << "subjects = " << s.subjects << '\n'
      << "recordings_per_subject = " << s.recordings_per_subject << '\n'
      << "frames_per_recording = " << s.frames_per_recording << '\n'
      << "min_segment = " << s.min_segment << '\n'
      << "max_segment = " << s.max_segment << '\n'
      << "style_strength = " << exact(s.style_strength) << '\n'
      << "placement_jitter = " << exact(s.placement_jitter) << '\n'
      << "class_skew = " << exact(s.class_skew) << '\n'
      << "noise = " << exact(s.noise) << '\n'
      << "low_confidence_rate = " << exact(s.low_confidence_rate) << '\n';
  }
  o << "\n[federation]\n"
    << "rounds = " << c.rounds << '\n'
    << "local_epochs = " << c.local_epochs << '\n'
    << "partitions = " << c.partitions << "\n\n";
  o << "[training]\n"
    << "batch_size = " << c.training.batch_size << '\n'
    << "lr = " << exact(c.training.lr) << '\n'
    << "max_epochs = " << c.training.max_epochs << '\n'
    << "patience = " << c.training.patience << "\n\n";
  o << "[model]\n"
    << "hidden = " << c.model.lstm.hidden << '\n'
    << "layers = " << c.model.lstm.layers << '\n'
    << "d_model = " << c.model.transformer.d_model << '\n'
    << "heads = " << c.model.transformer.heads << '\n'
    << "encoder_layers = " << c.model.transformer.encoder_layers << '\n'
    << "feedforward_dim = " << c.model.transformer.feedforward_dim << '\n';
  return o.str();
}

json to_json(const ExperimentConfig& c) {
  json data = {{"source", to_string(c.source)},
               {"image_width", c.image_width},
               {"image_height", c.image_height},
               {"seed", c.effective_data_seed()},
               {"external_client", c.external_client}};
  if (!c.data_path.empty()) data["path"] = c.data_path.string();
  if (c.source == DataSource::synthetic) {
    const auto& s = c.synth;
    data["synthetic"] = {{"subjects", s.subjects},
                         {"recordings_per_subject", s.recordings_per_subject},
                         {"frames_per_recording", s.frames_per_recording},
                         {"min_segment", s.min_segment},
                         {"max_segment", s.max_segment},
                         {"style_strength", s.style_strength},
                         {"placement_jitter", s.placement_jitter},
                         {"class_skew", s.class_skew},
                         {"noise", s.noise},
                         {"low_confidence_rate", s.low_confidence_rate}};
  }
  return {{"paradigm", to_string(c.paradigm)},
          {"model", to_json(c.model)},
          {"seed", c.seed},
          {"data", data},
          {"federation",
           {{"rounds", c.rounds}, {"local_epochs", c.local_epochs}, {"partitions", c.partitions}}},
          {"training",
           {{"batch_size", c.training.batch_size},
            {"lr", c.training.lr},
            {"max_epochs", c.training.max_epochs},
            {"patience", c.training.patience}}}};
}

ExperimentData load_experiment_data(const ExperimentConfig& config) {
  std::vector<ClientDataset> all;
  const auto data_seed = config.effective_data_seed();
  if (config.source == DataSource::windows) {
    all = untag_splits(load_windows(config.data_path));
  } else {
    const auto frames = config.source == DataSource::synthetic
                            ? synthesize_dataset(config.synth, data_seed)
                            : load_frames(config.data_path);
    PrepareOptions options;
    options.image_width = config.image_width;
    options.image_height = config.image_height;
    options.seed = data_seed;
    all = prepare_clients(frames, options);
  }

  ExperimentData data;
  for (auto& c : all) {
    data.warnings.insert(data.warnings.end(), c.warnings.begin(), c.warnings.end());
    if (!config.external_client.empty() && c.client_id == config.external_client) {
      data.external = std::move(c);
    } else {
      data.clients.push_back(std::move(c));
    }
  }
  if (!config.external_client.empty() && !data.external) {
    throw DataError("external client " + config.external_client + " not found in data");
  }
  if (data.clients.empty()) throw DataError("no training clients in data");
  return data;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  return run_experiment(config, load_experiment_data(config));
}

ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentData& data) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();

  ExperimentResult result;
  auto& report = result.report;
  report.paradigm = std::string(to_string(config.paradigm));
  report.model = config.model.kind;
  report.config = to_json(config);
  report.seeds = {{"experiment", config.seed},
                  {"data", config.effective_data_seed()},
                  {"model_init", config.seed}};
  report.warnings = data.warnings;
  for (auto& w : config.budget_warnings()) report.warnings.push_back(std::move(w));

  const auto global = compile_global_test(data.clients);
  for (const auto& w : global.warnings) report.warnings.push_back(w);
  if (global.windows.empty()) throw DataError("global test set is empty");

  const auto pooled = pool_clients(data.clients);
  require_disjoint(pooled.train, global.windows, "global test");
  require_disjoint(pooled.val, global.windows, "global test");
  for (const auto& c : data.clients) report.class_distribution[c.client_id] = class_histogram(c.train);

  TrainConfig train = config.training;
  train.seed = config.seed;
  FederationConfig fed;
  fed.rounds = config.rounds;
  fed.local_epochs = config.local_epochs;
  fed.batch_size = config.training.batch_size;
  fed.lr = config.training.lr;
  fed.model = config.model;
  fed.seed = config.seed;
  fed.parallel_clients = config.parallel_clients;

  auto provenance = [&](const std::string& what) {
    return json{{"paradigm", report.paradigm}, {"trained_on", what}, {"config", report.config}};
  };

  std::optional<nn::ParameterSet> final_model;
  std::vector<std::string> training_clients;
  for (const auto& c : data.clients) training_clients.push_back(c.client_id);

  switch (config.paradigm) {
    case Paradigm::centralized: {
      auto run = run_centralized(pooled, config.model, train);
      report.local_epochs["centralized"] = run.trace.epochs.size();
      report.traces["centralized"] = run.trace;
      final_model = run.best_params;
      break;
    }
    case Paradigm::local: {
      auto runs = run_local_baseline(data.clients, config.model, train, config.parallel_clients);
      std::vector<nn::ParameterSet> models;
      for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& id = data.clients[i].client_id;
        report.local_epochs[id] = runs[i].trace.epochs.size();
        report.traces[id] = runs[i].trace;
        models.push_back(runs[i].best_params);
        result.checkpoints.push_back(
            {"local_" + id, {config.model, config.seed, provenance(id), runs[i].best_params}});
      }
      report.cross_client = cross_client_eval(models, config.model, data.clients, global.windows);

      double loss = 0.0;
      for (const auto& m : models) {
        const auto ev = evaluate(m, config.model, global.windows);
        loss += ev.loss;
        for (std::size_t r = 0; r < kNumClasses; ++r)
          for (std::size_t k = 0; k < kNumClasses; ++k)
            report.confusion.counts[r][k] += ev.confusion.counts[r][k];
      }
      report.global_test_loss = loss / static_cast<double>(models.size());
      report.global_test_accuracy = report.confusion.accuracy();
      report.per_class_accuracy = report.confusion.per_class_accuracy();
      report.global_test_size = global.windows.size();
      report.notes["global_test_accuracy"] = "mean over local models (pooled confusion)";
      break;
    }
    case Paradigm::fedavg: {
      auto observer = evaluate_each_round(config.model, pooled.val, global.windows);
      auto run = run_federated(data.clients, fed, observer);
      report.rounds = run.records;
      final_model = run.state.weights;
      break;
    }
    case Paradigm::fedensemble: {
      auto run = run_fedensemble(pooled.train, config.partitions, fed,
                                 evaluate_each_round(config.model, pooled.val, global.windows));
      report.rounds = run.run.records;
      final_model = run.run.state.weights;
      json parts = json::object();
      for (const auto& p : run.partitions) {
        std::set<std::string> subjects;
        for (const auto& w : p.train) subjects.insert(w.client_id);
        for (const auto& w : p.val) subjects.insert(w.client_id);
        parts[p.client_id] = {{"train", p.train.size()},
                              {"val", p.val.size()},
                              {"subjects", std::vector<std::string>(subjects.begin(), subjects.end())},
                              {"classes", histogram_vector(class_histogram(p.train))}};
      }
      report.notes["partitions"] = parts;
      break;
    }
  }

  if (!report.rounds.empty()) {
    for (const auto& r : report.rounds) {
      for (const auto& c : r.clients) report.local_epochs[c.client_id] += c.local_epochs;
    }
  }

  if (final_model) {
    const auto ev = evaluate(*final_model, config.model, global.windows);
    report.global_test_accuracy = ev.accuracy;
    report.global_test_loss = ev.loss;
    report.global_test_size = global.windows.size();
    report.confusion = ev.confusion;
    report.per_class_accuracy = ev.confusion.per_class_accuracy();
    result.checkpoints.push_back(
        {"global", {config.model, config.seed, provenance(join(training_clients)), *final_model}});
    if (data.external) {
      require_disjoint(pooled.train, data.external->test, "external client");
      report.external =
          external_client_eval(*final_model, config.model, *data.external, training_clients);
    }
  } else if (data.external) {
    report.warnings.push_back("external client evaluation skipped: local paradigm has no single model");
  }

  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw IoError("sha256 unavailable");
  }
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest.data(), &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

json build_manifest(std::string_view command, const json& config, const json& seeds,
                    const std::vector<std::filesystem::path>& inputs,
                    const std::vector<std::filesystem::path>& artifacts,
                    const std::filesystem::path& dir) {
  json in = json::object();
  for (const auto& p : inputs) in[p.string()] = sha256_file(p);
  json out = json::object();
  for (const auto& p : artifacts) {
    out[std::filesystem::relative(p, dir).generic_string()] = sha256_file(p);
  }
  return {{"format", "fedhar.manifest"},
          {"version", 1},
          {"command", std::string(command)},
          {"config", config},
          {"seeds", seeds},
          {"inputs", in},
          {"artifacts", out}};
}

void write_manifest(const json& manifest, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / "manifest.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

json write_run_outputs(const ExperimentConfig& config, const ExperimentResult& result,
                       const std::filesystem::path& dir) {
  try {
    std::filesystem::create_directories(dir);
  } catch (const std::filesystem::filesystem_error& e) {
    throw IoError(e.what());
  }
  std::vector<std::filesystem::path> artifacts;

  const auto config_path = dir / "config.ini";
  {
    std::ofstream out(config_path);
    if (!out) throw IoError("cannot write " + config_path.string());
    out << to_ini(config);
  }
  artifacts.push_back(config_path);

  export_report(result.report, dir / "report.json");
  artifacts.push_back(dir / "report.json");
  for (auto& p : write_report_tables(result.report, dir)) artifacts.push_back(std::move(p));

  for (const auto& named : result.checkpoints) {
    const auto path = dir / "checkpoints" / (named.name + ".ckpt.json");
    std::filesystem::create_directories(path.parent_path());
    save_checkpoint(named.checkpoint, path);
    artifacts.push_back(path);
  }

  const auto plots = dir / "plots";
  if (render_plots(result.report, plots)) {
    for (const auto& entry : std::filesystem::directory_iterator(plots)) {
      if (entry.is_regular_file()) artifacts.push_back(entry.path());
    }
  }
  std::sort(artifacts.begin(), artifacts.end());

  std::vector<std::filesystem::path> inputs;
  if (!config.data_path.empty()) inputs.push_back(config.data_path);
  auto manifest = build_manifest("train", to_json(config), result.report.seeds, inputs, artifacts, dir);
  manifest["config_ini"] = to_ini(config);
  write_manifest(manifest, dir);
  return manifest;
}

}  // namespace fedhar
