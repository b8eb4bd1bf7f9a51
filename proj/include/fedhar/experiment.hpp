#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fedhar/evaluation.hpp"
#include "fedhar/models.hpp"
#include "fedhar/pose_dataset.hpp"
#include "fedhar/synth.hpp"
#include "fedhar/training.hpp"

namespace fedhar {

enum class Paradigm { centralized, local, fedavg, fedensemble };

std::string_view to_string(Paradigm p) noexcept;
std::optional<Paradigm> parse_paradigm(std::string_view name) noexcept;

enum class DataSource { synthetic, raw, windows };

std::string_view to_string(DataSource s) noexcept;

/// Everything needed to re-run one experiment. Parsed from an INI file with
/// sections [experiment], [data], [federation], [training], [model].
struct ExperimentConfig {
  Paradigm paradigm = Paradigm::fedavg;
  ModelConfig model{};

  DataSource source = DataSource::synthetic;
  std::filesystem::path data_path;  ///< raw frames or prepared windows
  SynthSpec synth{};
  double image_width = 640.0;
  double image_height = 480.0;
  std::optional<std::uint64_t> data_seed;  ///< defaults to seed
  std::string external_client;  ///< held out from training when non-empty

  std::size_t rounds = 20;
  std::size_t local_epochs = 25;
  std::size_t partitions = 5;  ///< FedEnsemble K

  TrainConfig training{};  ///< seed is ignored; `seed` below is used

  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/experiment";
  std::size_t parallel_clients = 1;

  void validate() const;
  std::uint64_t effective_data_seed() const noexcept { return data_seed.value_or(seed); }
  /// Budget-parity warnings: rounds x local_epochs against max_epochs.
  std::vector<std::string> budget_warnings() const;
};

ExperimentConfig parse_experiment_config(std::istream& in,
                                         const std::filesystem::path& base_dir = {});
/// Relative data paths resolve against the config file's directory.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Canonical INI text; parse_experiment_config(to_ini(c)) == c.
std::string to_ini(const ExperimentConfig& config);
/// Config echo for reports. Omits the output directory.
nlohmann::json to_json(const ExperimentConfig& config);

struct ExperimentData {
  std::vector<ClientDataset> clients;  ///< training clients, lexicographic
  std::optional<ClientDataset> external;
  std::vector<std::string> warnings;
};

ExperimentData load_experiment_data(const ExperimentConfig& config);

struct NamedCheckpoint {
  std::string name;  ///< file stem, e.g. "global" or "local_s1"
  Checkpoint checkpoint;
};

struct ExperimentResult {
  ExperimentReport report;
  std::vector<NamedCheckpoint> checkpoints;
};

ExperimentResult run_experiment(const ExperimentConfig& config);
ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentData& data);

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Writes report.json, CSV tables, plots, checkpoints, config.ini and
/// manifest.json under `dir`. Returns the manifest.
nlohmann::json write_run_outputs(const ExperimentConfig& config, const ExperimentResult& result,
                                 const std::filesystem::path& dir);

/// Manifest over arbitrary artifacts: config echo, seeds and SHA-256 of
/// every listed file (paths stored relative to `dir`).
nlohmann::json build_manifest(std::string_view command, const nlohmann::json& config,
                              const nlohmann::json& seeds,
                              const std::vector<std::filesystem::path>& inputs,
                              const std::vector<std::filesystem::path>& artifacts,
                              const std::filesystem::path& dir);

void write_manifest(const nlohmann::json& manifest, const std::filesystem::path& dir);

}  // namespace fedhar
