#include "fedhar/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "fedhar/error.hpp"
#include "fedhar/nn/adam.hpp"
#include "fedhar/nn/layers.hpp"
#include "fedhar/rng.hpp"

namespace fedhar {

namespace {

constexpr std::size_t kEvalChunk = 256;

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, epoch));
  rng.shuffle(std::span(order));
  return order;
}

TrainResult train_local(const nn::ParameterSet& initial, const ModelConfig& model,
                        std::span<const WindowSample> train, std::span<const WindowSample> val,
                        const TrainConfig& config) {
  config.validate();
  model.validate();
  if (train.empty()) throw ConfigError("train_local: empty training set");
  if (val.empty() && config.early_stopping()) {
    throw ConfigError("train_local: early stopping needs a validation set");
  }

  TrainResult result{initial, initial, {}};
  auto& params = result.final_params;
  auto adam = nn::AdamState::for_params(params, {.lr = config.lr});
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_improvement = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto order = epoch_order(train.size(), config.seed, epoch);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const auto count = std::min(config.batch_size, order.size() - start);
      const auto batch = make_batch(train, std::span(order).subspan(start, count));
      try {
        const auto step = loss_and_gradients(params, model, batch);
        loss_sum += step.loss * static_cast<double>(count);
        nn::adam_step(params, step.grads, adam);
        nn::check_finite(params, "adam_step");
      } catch (const NumericHealthError& e) {
        throw NumericHealthError("epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_index) + ": " + e.what());
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(train.size());
    record.val_loss = std::numeric_limits<double>::quiet_NaN();
    record.val_accuracy = std::numeric_limits<double>::quiet_NaN();
    if (!val.empty()) {
      const auto ev = evaluate(params, model, val);
      record.val_loss = ev.loss;
      record.val_accuracy = ev.accuracy;
    }
    result.trace.epochs.push_back(record);

    if (val.empty()) {
      result.trace.best_epoch = epoch;
      continue;
    }
    if (record.val_loss < best_val) {
      best_val = record.val_loss;
      result.best_params = params;
      result.trace.best_epoch = epoch;
      since_improvement = 0;
    } else if (config.early_stopping() && ++since_improvement >= config.patience) {
      result.trace.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  if (val.empty()) result.best_params = result.final_params;
  return result;
}

Evaluation evaluate(const nn::ParameterSet& params, const ModelConfig& model,
                    std::span<const WindowSample> dataset) {
  if (dataset.empty()) throw EvaluationError("evaluate: empty dataset");
  Evaluation ev;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < dataset.size(); start += kEvalChunk) {
    const auto chunk = dataset.subspan(start, std::min(kEvalChunk, dataset.size() - start));
    const auto batch = make_batch(chunk);
    const auto logits = class_scores(params, model, batch);
    loss_sum += nn::softmax_cross_entropy(logits, batch.labels).loss *
                static_cast<double>(chunk.size());
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      ev.confusion.add(chunk[static_cast<std::size_t>(j)].label,
                       prediction_from_logits(logits.col(j)).label);
    }
  }
  ev.loss = loss_sum / static_cast<double>(dataset.size());
  ev.accuracy = ev.confusion.accuracy();
  return ev;
}

std::vector<Prediction> predict_all(const nn::ParameterSet& params, const ModelConfig& model,
                                    std::span<const WindowSample> dataset) {
  std::vector<Prediction> out;
  out.reserve(dataset.size());
  for (std::size_t start = 0; start < dataset.size(); start += kEvalChunk) {
    const auto chunk = dataset.subspan(start, std::min(kEvalChunk, dataset.size() - start));
    const auto logits = class_scores(params, model, make_batch(chunk));
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      out.push_back(prediction_from_logits(logits.col(j)));
    }
  }
  return out;
}

void write_trace_csv(std::ostream& out, const TrainTrace& trace) {
  out << "epoch,train_loss,val_loss,val_acc\n";
  out.precision(17);
  for (const auto& e : trace.epochs) {
    out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_accuracy << '\n';
  }
}

}  // namespace fedhar
