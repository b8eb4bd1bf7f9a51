#pragma once

// Server side of federated averaging. This header deliberately knows
// nothing about datasets: the only thing a client hands the server is a
// ClientUpdate.

#include <cstddef>
#include <span>

#include "fedhar/nn/parameters.hpp"

namespace fedhar {

/// What crosses the client boundary each round: weights and sample count.
struct ClientUpdate {
  nn::ParameterSet weights;
  std::size_t sample_count = 0;
};

/// Weighted FedAvg: w = sum_i (n_i / N) w_i, summed in entry order. Every
/// entry must share names, order and shapes with the first; n_i >= 1.
nn::ParameterSet fedavg_aggregate(std::span<const ClientUpdate> updates);

struct GlobalModelState {
  std::size_t round = 0;
  nn::ParameterSet weights;
};

/// Holds the global model and advances it one round per aggregation.
class FedAvgServer {
 public:
  explicit FedAvgServer(nn::ParameterSet initial) : state_{0, std::move(initial)} {}

  const GlobalModelState& state() const noexcept { return state_; }
  const nn::ParameterSet& broadcast() const noexcept { return state_.weights; }

  /// Replaces the global weights with the aggregate and increments the round.
  void aggregate(std::span<const ClientUpdate> updates);

 private:
  GlobalModelState state_;
};

}  // namespace fedhar
