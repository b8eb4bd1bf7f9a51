#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "fedhar/confusion.hpp"
#include "fedhar/models.hpp"
#include "fedhar/nn/parameters.hpp"
#include "fedhar/pose_dataset.hpp"

namespace fedhar {

struct TrainConfig {
  std::size_t batch_size = 64;
  double lr = 2e-4;
  std::size_t max_epochs = 500;
  std::size_t patience = 15;  ///< 0 disables early stopping
  std::uint64_t seed = 0;

  void validate() const;
  bool early_stopping() const noexcept { return patience > 0; }
};

struct EpochRecord {
  std::size_t epoch = 0;  ///< 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;  ///< NaN when no validation set
  double val_accuracy = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  ///< 0 when no epoch ran
  bool stopped_early = false;
};

struct TrainResult {
  nn::ParameterSet final_params;
  nn::ParameterSet best_params;  ///< lowest validation loss (final when no val set)
  TrainTrace trace;
};

/// Shuffle order used for one epoch: a permutation of [0, n).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// Mini-batch Adam training with validation-loss early stopping. Adam state
/// starts fresh on every call.
TrainResult train_local(const nn::ParameterSet& initial, const ModelConfig& model,
                        std::span<const WindowSample> train, std::span<const WindowSample> val,
                        const TrainConfig& config);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  ConfusionMatrix confusion;
};

Evaluation evaluate(const nn::ParameterSet& params, const ModelConfig& model,
                    std::span<const WindowSample> dataset);

/// Predictions for every window, in input order.
std::vector<Prediction> predict_all(const nn::ParameterSet& params, const ModelConfig& model,
                                    std::span<const WindowSample> dataset);

/// CSV with header epoch,train_loss,val_loss,val_acc.
void write_trace_csv(std::ostream& out, const TrainTrace& trace);

}  // namespace fedhar
