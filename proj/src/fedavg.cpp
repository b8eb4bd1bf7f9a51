#include "fedhar/fedavg.hpp"

#include <string>

#include "fedhar/error.hpp"

namespace fedhar {

nn::ParameterSet fedavg_aggregate(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw AggregationError("fedavg_aggregate: no client updates");

  std::size_t total = 0;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (updates[i].sample_count == 0) {
      throw AggregationError("fedavg_aggregate: client " + std::to_string(i) +
                             " reports zero samples");
    }
    total += updates[i].sample_count;
  }

  const auto& first = updates.front().weights;
  for (std::size_t i = 1; i < updates.size(); ++i) {
    const auto& w = updates[i].weights;
    if (w.size() != first.size()) {
      throw AggregationError("fedavg_aggregate: client " + std::to_string(i) + " sends " +
                             std::to_string(w.size()) + " parameters, expected " +
                             std::to_string(first.size()));
    }
    for (std::size_t p = 0; p < first.size(); ++p) {
      const auto& a = first[p];
      const auto& b = w[p];
      if (a.name != b.name || a.value.rows() != b.value.rows() ||
          a.value.cols() != b.value.cols()) {
        throw AggregationError("fedavg_aggregate: client " + std::to_string(i) +
                               " disagrees on parameter '" + a.name + "' (got '" + b.name +
                               "' " + nn::shape_string(b.value.rows(), b.value.cols()) + ")");
      }
    }
  }

  const double n_total = static_cast<double>(total);
  const auto share = [&](const ClientUpdate& u) {
    return static_cast<double>(u.sample_count) / n_total;
  };
  nn::ParameterSet out = first;
  const double first_share = share(updates.front());
  for (auto& entry : out) entry.value *= first_share;
  for (const auto& update : updates.subspan(1)) {
    const double s = share(update);
    for (std::size_t p = 0; p < out.size(); ++p) out[p].value += s * update.weights[p].value;
  }
  return out;
}

void FedAvgServer::aggregate(std::span<const ClientUpdate> updates) {
  state_.weights = fedavg_aggregate(updates);
  ++state_.round;
}

}  // namespace fedhar
