#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "fedhar/confusion.hpp"
#include "fedhar/federation.hpp"
#include "fedhar/models.hpp"
#include "fedhar/pose_dataset.hpp"
#include "fedhar/training.hpp"

namespace fedhar {

inline constexpr int kReportSchemaVersion = 1;

struct GlobalTestSet {
  std::vector<WindowSample> windows;
  std::vector<std::string> warnings;
};

/// Concatenates client test splits in client order; clients with an empty
/// test split are skipped with a warning.
GlobalTestSet compile_global_test(std::span<const ClientDataset> clients);

/// Accuracy of model i on client j's test split; the last column is the
/// global test set.
struct CrossClientMatrix {
  std::vector<std::string> clients;
  Eigen::MatrixXd accuracy;  // K x (K + 1)
};

CrossClientMatrix cross_client_eval(std::span<const nn::ParameterSet> models,
                                    const ModelConfig& model,
                                    std::span<const ClientDataset> clients,
                                    std::span<const WindowSample> global_test);

struct WindowPrediction {
  std::string window_id;
  GestureLabel label = GestureLabel::down;
  GestureLabel predicted = GestureLabel::down;
  double confidence = 0.0;
};

struct ExternalEvaluation {
  std::string client_id;
  double accuracy = 0.0;
  ConfusionMatrix confusion;
  std::vector<WindowPrediction> predictions;
};

/// Evaluates on every window of an unseen subject. Throws EvaluationError
/// if that subject (or any of its windows) took part in training.
ExternalEvaluation external_client_eval(const nn::ParameterSet& params, const ModelConfig& model,
                                        const ClientDataset& external,
                                        std::span<const std::string> training_clients);

/// Throws EvaluationError naming the first window id present in both sets.
void require_disjoint(std::span<const WindowSample> training,
                      std::span<const WindowSample> held_out, const std::string& context);

// --- reports ------------------------------------------------------------------

struct ExperimentReport {
  int schema_version = kReportSchemaVersion;
  std::string paradigm;
  ModelKind model = ModelKind::lstm;
  double global_test_accuracy = 0.0;
  double global_test_loss = 0.0;
  std::size_t global_test_size = 0;
  std::array<double, kNumClasses> per_class_accuracy{};
  ConfusionMatrix confusion;
  std::optional<CrossClientMatrix> cross_client;
  std::optional<ExternalEvaluation> external;
  std::vector<RoundRecord> rounds;
  std::map<std::string, TrainTrace> traces;  // by run name ("centralized", client id)
  std::map<std::string, std::array<std::size_t, kNumClasses>> class_distribution;
  std::map<std::string, std::size_t> local_epochs;  // per client (or "centralized")
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, std::uint64_t> seeds;
  std::vector<std::string> warnings;
  nlohmann::json notes = nlohmann::json::object();
  double wall_clock_seconds = 0.0;
};

nlohmann::json to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const nlohmann::json& j);

void export_report(const ExperimentReport& report, const std::filesystem::path& path);
ExperimentReport import_report(const std::filesystem::path& path);

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& confusion);
void write_cross_client_csv(std::ostream& out, const CrossClientMatrix& matrix);
void write_round_log(std::ostream& out, std::span<const RoundRecord> rounds);

/// CSV tables next to the report: confusion, cross-client matrix, round
/// history, training traces and class distribution. Returns written files.
std::vector<std::filesystem::path> write_report_tables(const ExperimentReport& report,
                                                       const std::filesystem::path& dir);

/// SVG figures (class distribution, cross-client heatmap, round accuracy).
/// Best effort: failures are swallowed and reported through the return
/// value only.
bool render_plots(const ExperimentReport& report, const std::filesystem::path& dir) noexcept;

}  // namespace fedhar
