#pragma once

// In-process FedAvg simulation. Each round every client trains one local
// epoch from the current global model, uploads a ClientUpdate, and the server
// averages the updates into the next global model.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedpd/nn.hpp"
#include "fedpd/random.hpp"

namespace fedpd::fl {

/// The only value that crosses from a client to the server.
struct ClientUpdate {
  std::string site_id;
  nn::ParameterSet params;
  std::size_t sample_count = 0;
};

enum class AggregationKind { kWeightedBySamples, kUniform };

const char* to_string(AggregationKind kind) noexcept;
AggregationKind parse_aggregation(const std::string& name);

struct AggregationScheme {
  AggregationKind kind = AggregationKind::kWeightedBySamples;
};

struct FederationOptions {
  AggregationScheme scheme;
  /// Average batchnorm running statistics along with the trainable arrays.
  /// When off, each site keeps its own running statistics.
  bool aggregate_bn_stats = true;
  /// Keep Adam moments across rounds. Off: fresh optimizer every round.
  bool persist_optimizer_state = false;
};

struct ClientState {
  std::string site_id;
  nn::LabeledData train_set;
  nn::AdamState optimizer_state;
  Rng rng;
  /// Site-local batchnorm statistics, used only when aggregate_bn_stats is off.
  std::optional<nn::ParameterSet> local_stats;
};

/// Aggregation weights in the order of `updates`. They sum to 1.
std::vector<double> aggregation_weights(std::span<const ClientUpdate> updates,
                                        const AggregationScheme& scheme);

/// Elementwise convex combination of every array (running statistics
/// included). Summation runs in site_id order so the result does not depend
/// on the order of `updates`. running_var is clamped to >= 1e-12.
nn::ParameterSet aggregate(std::span<const ClientUpdate> updates, const AggregationScheme& scheme);

struct LocalRoundResult {
  ClientUpdate update;
  double mean_loss = 0.0;
};

/// Copies the global parameters, trains exactly one epoch on the client's
/// data and returns the result.
LocalRoundResult local_round(ClientState& client, const nn::ParameterSet& global_params,
                             const nn::TrainConfig& cfg, const FederationOptions& options);

struct RoundRecord {
  std::size_t round = 0;
  std::string site_id;
  double loss = 0.0;
  double weight = 0.0;
};

struct FederatedResult {
  nn::ParameterSet global;
  /// Model each site evaluates with: the global model, carrying the site's
  /// own running statistics when those are not aggregated.
  std::vector<nn::ParameterSet> site_models;
  std::vector<RoundRecord> telemetry;
};

FederatedResult run_federated_training(std::vector<ClientState>& clients,
                                       std::span<const nn::LayerSpec> architecture,
                                       std::size_t rounds, const nn::TrainConfig& cfg,
                                       const FederationOptions& options, Rng& init_rng);

/// One JSON object per line: {"round":..,"site":..,"loss":..,"weight":..}.
void write_telemetry(std::ostream& out, std::span<const RoundRecord> records);

}  // namespace fedpd::fl
