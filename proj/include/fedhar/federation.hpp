#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedhar/fedavg.hpp"
#include "fedhar/models.hpp"
#include "fedhar/pose_dataset.hpp"
#include "fedhar/training.hpp"

namespace fedhar {

struct FederationConfig {
  std::size_t rounds = 20;
  std::size_t local_epochs = 25;
  std::size_t batch_size = 64;
  double lr = 2e-4;
  ModelConfig model{};
  std::uint64_t seed = 0;
  std::size_t parallel_clients = 1;  ///< clients trained concurrently per round

  void validate() const;
  std::size_t total_local_epochs() const noexcept { return rounds * local_epochs; }
};

/// Shuffle seed of client `client` in round `round` (both 0-based).
std::uint64_t client_round_seed(std::uint64_t base_seed, std::size_t client, std::size_t round);

/// One simulated participant. It owns its data; the server only ever sees
/// the ClientUpdate inside the returned LocalRound.
class SimulatedClient {
 public:
  SimulatedClient(std::size_t index, const ClientDataset& data) : index_(index), data_(&data) {}

  struct LocalRound {
    ClientUpdate update;
    double train_loss = 0.0;  ///< mean loss of the last local epoch
    std::size_t epochs = 0;
  };

  /// Fixed-length local training from the broadcast weights with a fresh
  /// optimizer and no early stopping.
  LocalRound local_round(const nn::ParameterSet& global, std::size_t round,
                         const FederationConfig& config) const;

  std::size_t index() const noexcept { return index_; }
  const std::string& id() const noexcept { return data_->client_id; }
  std::size_t sample_count() const noexcept { return data_->train.size(); }

 private:
  std::size_t index_;
  const ClientDataset* data_;
};

struct ClientRoundEntry {
  std::string client_id;
  double train_loss = 0.0;
  std::size_t sample_count = 0;
  std::size_t local_epochs = 0;
};

struct RoundMetrics {
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
};

struct RoundRecord {
  std::size_t round = 0;  ///< 1-based, matches the global state after aggregation
  std::vector<ClientRoundEntry> clients;
  std::optional<RoundMetrics> metrics;
};

/// Called with the aggregated weights after every round.
using RoundObserver =
    std::function<std::optional<RoundMetrics>(const nn::ParameterSet& global, std::size_t round)>;

/// Observer evaluating the global model on fixed validation and test sets.
/// The spans must outlive the observer.
RoundObserver evaluate_each_round(const ModelConfig& model, std::span<const WindowSample> val,
                                  std::span<const WindowSample> test);

struct FederatedRun {
  GlobalModelState state;
  std::vector<RoundRecord> records;
};

/// FedAvg over all clients every round. Initial weights come from
/// build_model(config.model, config.seed). Any client failure aborts the run.
FederatedRun run_federated(std::span<const ClientDataset> clients, const FederationConfig& config,
                           const RoundObserver& observer = {});

/// Concatenates every client's train, val and test splits.
ClientDataset pool_clients(std::span<const ClientDataset> clients);

/// train_local on pooled data from build_model(model, train.seed).
TrainResult run_centralized(const ClientDataset& pooled, const ModelConfig& model,
                            const TrainConfig& train);

/// One independent train_local per client, all from the same initial
/// weights. Client i shuffles with client_round_seed(train.seed, i, 0).
std::vector<TrainResult> run_local_baseline(std::span<const ClientDataset> clients,
                                            const ModelConfig& model, const TrainConfig& train,
                                            std::size_t parallel_clients = 1);

struct FedEnsembleRun {
  PartitionPlan plan;
  std::vector<ClientDataset> partitions;
  FederatedRun run;
};

/// Re-partitions pooled training windows IID into k parts, gives each a
/// stratified train/val split (88:6), then runs FedAvg over the parts.
FedEnsembleRun run_fedensemble(std::span<const WindowSample> pooled_train, std::size_t k,
                               const FederationConfig& config, const RoundObserver& observer = {});

}  // namespace fedhar
