#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fedhar/gesture.hpp"
#include "fedhar/nn/parameters.hpp"
#include "fedhar/pose_dataset.hpp"

namespace fedhar {

enum class ModelKind { lstm, transformer };

std::string_view to_string(ModelKind kind) noexcept;
std::optional<ModelKind> parse_model_kind(std::string_view name) noexcept;

struct LstmClassifierConfig {
  std::size_t input_dim = kFrameDim;
  std::size_t hidden = 128;
  std::size_t layers = 2;
  std::size_t classes = kNumClasses;
};

struct TransformerClassifierConfig {
  std::size_t input_dim = kFrameDim;
  std::size_t d_model = 128;
  std::size_t heads = 4;
  std::size_t encoder_layers = 4;
  std::size_t feedforward_dim = 256;
  std::size_t classes = kNumClasses;
};

/// Which classifier to build and its shape. Only the block matching
/// `kind` is used.
struct ModelConfig {
  ModelKind kind = ModelKind::lstm;
  LstmClassifierConfig lstm{};
  TransformerClassifierConfig transformer{};

  /// Throws ConfigError on zero sizes or heads not dividing d_model.
  void validate() const;
  std::size_t input_dim() const noexcept;
  std::size_t classes() const noexcept;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Deterministic initial weights. Names encode layer and role, e.g.
/// "lstm1.W_hh" or "enc0.attn.Wq".
nn::ParameterSet build_model(const ModelConfig& config, std::uint64_t seed);

/// Model input: sequences packed column-wise, input_dim x (steps * size),
/// sample b in columns [b*steps, (b+1)*steps).
struct Batch {
  nn::MatrixXr inputs;
  Eigen::Index steps = static_cast<Eigen::Index>(kWindowLength);
  std::vector<std::size_t> labels;

  Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(labels.size()); }
};

Batch make_batch(std::span<const WindowSample> windows);
Batch make_batch(std::span<const WindowSample> windows, std::span<const std::size_t> indices);

/// Class scores, classes x batch (one column per sample).
nn::MatrixXr class_scores(const nn::ParameterSet& params, const ModelConfig& config,
                          const Batch& batch);

/// Logits as batch x classes.
nn::MatrixXr forward_logits(const nn::ParameterSet& params, const ModelConfig& config,
                            std::span<const WindowSample> windows);

struct LossResult {
  double loss = 0.0;  ///< mean cross-entropy over the batch
  nn::GradientSet grads;
};

LossResult loss_and_gradients(const nn::ParameterSet& params, const ModelConfig& config,
                              const Batch& batch);

struct Prediction {
  GestureLabel label = GestureLabel::down;
  double confidence = 0.0;
};

/// Argmax of softmax(logits); ties go to the lowest class index.
Prediction prediction_from_logits(const Eigen::Ref<const nn::VectorXr>& logits);

Prediction predict(const nn::ParameterSet& params, const ModelConfig& config,
                   const WindowSample& window);

/// Closed-form parameter counts for the two architectures.
std::size_t expected_parameter_count(const ModelConfig& config);

// --- checkpoints -------------------------------------------------------------

struct Checkpoint {
  ModelConfig config;
  std::uint64_t seed = 0;
  nlohmann::json provenance = nlohmann::json::object();
  nn::ParameterSet params;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fedhar
