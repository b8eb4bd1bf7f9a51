#include "fedhar/federation.hpp"

#include <algorithm>
#include <exception>
#include <future>

#include "fedhar/error.hpp"
#include "fedhar/rng.hpp"

namespace fedhar {

namespace {

/// Runs task(i) for i in [0, n), at most `parallel` at a time. Results come
/// back in index order; the first failure (by index) is rethrown.
template <typename Task>
auto run_indexed(std::size_t n, std::size_t parallel, Task&& task)
    -> std::vector<decltype(task(std::size_t{}))> {
  using Result = decltype(task(std::size_t{}));
  std::vector<Result> results;
  results.reserve(n);
  parallel = std::max<std::size_t>(parallel, 1);
  if (parallel == 1) {
    for (std::size_t i = 0; i < n; ++i) results.push_back(task(i));
    return results;
  }
  for (std::size_t start = 0; start < n; start += parallel) {
    std::vector<std::future<Result>> pending;
    const auto stop = std::min(n, start + parallel);
    for (std::size_t i = start; i < stop; ++i) {
      pending.push_back(std::async(std::launch::async, [&task, i] { return task(i); }));
    }
    std::exception_ptr failure;
    for (auto& f : pending) {
      try {
        results.push_back(f.get());
      } catch (...) {
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  }
  return results;
}

}  // namespace

void FederationConfig::validate() const {
  if (batch_size == 0) throw ConfigError("federation batch_size must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("federation learning rate must be positive");
  model.validate();
}

std::uint64_t client_round_seed(std::uint64_t base_seed, std::size_t client, std::size_t round) {
  return mix_seed(base_seed, client, round);
}

SimulatedClient::LocalRound SimulatedClient::local_round(const nn::ParameterSet& global,
                                                         std::size_t round,
                                                         const FederationConfig& config) const {
  TrainConfig train;
  train.batch_size = config.batch_size;
  train.lr = config.lr;
  train.max_epochs = config.local_epochs;
  train.patience = 0;
  train.seed = client_round_seed(config.seed, index_, round);

  LocalRound out;
  out.update.sample_count = data_->train.size();
  if (config.local_epochs == 0) {
    out.update.weights = global;
    return out;
  }
  auto result = train_local(global, config.model, data_->train, {}, train);
  out.train_loss = result.trace.epochs.back().train_loss;
  out.epochs = result.trace.epochs.size();
  out.update.weights = std::move(result.final_params);
  return out;
}

RoundObserver evaluate_each_round(const ModelConfig& model, std::span<const WindowSample> val,
                                  std::span<const WindowSample> test) {
  return [model, val, test](const nn::ParameterSet& global,
                            std::size_t) -> std::optional<RoundMetrics> {
    RoundMetrics m;
    if (!val.empty()) {
      const auto ev = evaluate(global, model, val);
      m.val_loss = ev.loss;
      m.val_accuracy = ev.accuracy;
    }
    if (!test.empty()) {
      const auto ev = evaluate(global, model, test);
      m.test_loss = ev.loss;
      m.test_accuracy = ev.accuracy;
    }
    return m;
  };
}

FederatedRun run_federated(std::span<const ClientDataset> clients, const FederationConfig& config,
                           const RoundObserver& observer) {
  config.validate();
  if (clients.empty()) throw ConfigError("run_federated: no clients");

  std::vector<SimulatedClient> participants;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    if (clients[i].train.empty()) {
      throw ConfigError("run_federated: client " + clients[i].client_id + " has no training data");
    }
    participants.emplace_back(i, clients[i]);
  }

  FedAvgServer server(build_model(config.model, config.seed));
  FederatedRun run;
  for (std::size_t round = 0; round < config.rounds; ++round) {
    const auto& global = server.broadcast();
    auto local = run_indexed(participants.size(), config.parallel_clients, [&](std::size_t i) {
      try {
        return participants[i].local_round(global, round, config);
      } catch (const NumericHealthError& e) {
        throw NumericHealthError("round " + std::to_string(round + 1) + ", client " +
                                 participants[i].id() + ": " + e.what());
      }
    });

    std::vector<ClientUpdate> updates;
    RoundRecord record;
    for (std::size_t i = 0; i < local.size(); ++i) {
      record.clients.push_back({participants[i].id(), local[i].train_loss,
                                local[i].update.sample_count, local[i].epochs});
      updates.push_back(std::move(local[i].update));
    }
    server.aggregate(updates);
    record.round = server.state().round;
    if (observer) record.metrics = observer(server.broadcast(), record.round);
    run.records.push_back(std::move(record));
  }
  run.state = server.state();
  return run;
}

ClientDataset pool_clients(std::span<const ClientDataset> clients) {
  ClientDataset pooled;
  pooled.client_id = "pooled";
  for (const auto& c : clients) {
    pooled.train.insert(pooled.train.end(), c.train.begin(), c.train.end());
    pooled.val.insert(pooled.val.end(), c.val.begin(), c.val.end());
    pooled.test.insert(pooled.test.end(), c.test.begin(), c.test.end());
  }
  return pooled;
}

TrainResult run_centralized(const ClientDataset& pooled, const ModelConfig& model,
                            const TrainConfig& train) {
  return train_local(build_model(model, train.seed), model, pooled.train, pooled.val, train);
}

std::vector<TrainResult> run_local_baseline(std::span<const ClientDataset> clients,
                                            const ModelConfig& model, const TrainConfig& train,
                                            std::size_t parallel_clients) {
  const auto initial = build_model(model, train.seed);
  return run_indexed(clients.size(), parallel_clients, [&](std::size_t i) {
    TrainConfig client = train;
    client.seed = client_round_seed(train.seed, i, 0);
    return train_local(initial, model, clients[i].train, clients[i].val, client);
  });
}

FedEnsembleRun run_fedensemble(std::span<const WindowSample> pooled_train, std::size_t k,
                               const FederationConfig& config, const RoundObserver& observer) {
  FedEnsembleRun out;
  if (k == 1) {
    out.plan.mode = PartitionMode::fedensemble_iid;
    out.plan.partitions = 1;
    for (const auto& w : pooled_train) out.plan.assignments[w.id()] = 0;
  } else {
    out.plan = build_fedensemble_partition(pooled_train, k, config.seed);
  }

  // Partition windows are training data already; carve validation at 88:6.
  const SplitFractions fractions{88.0 / 94.0, 6.0 / 94.0, 0.0};
  auto parts = apply_partition(out.plan, pooled_train);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    out.partitions.push_back(stratified_split("part" + std::to_string(p + 1), parts[p], fractions,
                                              mix_seed(config.seed, 0xe5, p)));
  }
  out.run = run_federated(out.partitions, config, observer);
  return out;
}

}  // namespace fedhar
