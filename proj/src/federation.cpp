#include "fedpd/federation.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "json.hpp"

#include "fedpd/error.hpp"

namespace fedpd::fl {

namespace {

constexpr double kMinRunningVar = 1e-12;

void copy_running_stats(nn::ParameterSet& dst, const nn::ParameterSet& src) {
  for (std::size_t l = 0; l < dst.layers.size(); ++l) {
    auto& d = dst.layers[l].batchnorm;
    const auto& s = src.layers[l].batchnorm;
    if (d && s) {
      d->running_mean = s->running_mean;
      d->running_var = s->running_var;
    }
  }
}

}  // namespace

const char* to_string(AggregationKind kind) noexcept {
  return kind == AggregationKind::kUniform ? "uniform" : "weighted_by_samples";
}

AggregationKind parse_aggregation(const std::string& name) {
  if (name == "weighted_by_samples" || name == "weighted") return AggregationKind::kWeightedBySamples;
  if (name == "uniform") return AggregationKind::kUniform;
  throw ConfigError("unknown aggregation scheme '" + name + "'");
}

std::vector<double> aggregation_weights(std::span<const ClientUpdate> updates,
                                        const AggregationScheme& scheme) {
  if (updates.empty()) throw ProtocolError("no client updates to aggregate");
  std::vector<double> weights(updates.size());
  if (scheme.kind == AggregationKind::kUniform) {
    std::fill(weights.begin(), weights.end(), 1.0 / static_cast<double>(updates.size()));
    return weights;
  }
  std::size_t total = 0;
  for (const auto& u : updates) {
    if (u.sample_count == 0) {
      throw ProtocolError("site '" + u.site_id + "' reported zero samples");
    }
    total += u.sample_count;
  }
  for (std::size_t i = 0; i < updates.size(); ++i) {
    weights[i] = static_cast<double>(updates[i].sample_count) / static_cast<double>(total);
  }
  return weights;
}

nn::ParameterSet aggregate(std::span<const ClientUpdate> updates, const AggregationScheme& scheme) {
  const std::vector<double> weights = aggregation_weights(updates, scheme);

  std::vector<std::size_t> order(updates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return updates[a].site_id < updates[b].site_id;
  });

  const ClientUpdate& first = updates[order.front()];
  for (std::size_t i : order) {
    if (!nn::shape_compatible(first.params, updates[i].params)) {
      throw ProtocolError("update from site '" + updates[i].site_id +
                          "' is not shape-compatible with site '" + first.site_id + "'");
    }
  }

  // Seeding the accumulator with w0 * p0 keeps a single update bit-identical.
  nn::ParameterSet result = first.params;
  auto out = result.arrays();
  for (auto& a : out) {
    for (double& v : a.values) v *= weights[order.front()];
  }
  for (std::size_t k = 1; k < order.size(); ++k) {
    const double w = weights[order[k]];
    const auto in = updates[order[k]].params.arrays();
    for (std::size_t a = 0; a < out.size(); ++a) {
      auto dst = out[a].values;
      const auto src = in[a].values;
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += w * src[j];
    }
  }
  for (auto& a : out) {
    if (a.kind != nn::ArrayKind::kRunningVar) continue;
    for (double& v : a.values) v = std::max(v, kMinRunningVar);
  }
  return result;
}

LocalRoundResult local_round(ClientState& client, const nn::ParameterSet& global_params,
                             const nn::TrainConfig& cfg, const FederationOptions& options) {
  if (client.train_set.size() < 2) {
    throw TrainingError("client '" + client.site_id + "' has " +
                        std::to_string(client.train_set.size()) +
                        " training samples; at least 2 are required");
  }
  if (client.train_set.features.cols() != static_cast<Eigen::Index>(global_params.input_dim())) {
    throw ShapeError("client '" + client.site_id + "' feature width does not match the model");
  }

  nn::ParameterSet params = global_params;
  if (!options.aggregate_bn_stats && client.local_stats) copy_running_stats(params, *client.local_stats);
  if (!options.persist_optimizer_state) client.optimizer_state = nn::AdamState{};

  const nn::EpochStats stats =
      nn::train_epoch(params, client.optimizer_state, client.train_set, cfg, client.rng);

  if (!options.aggregate_bn_stats) client.local_stats = params;

  LocalRoundResult result;
  result.update.site_id = client.site_id;
  result.update.sample_count = client.train_set.size();
  result.update.params = std::move(params);
  result.mean_loss = stats.mean_loss;
  return result;
}

FederatedResult run_federated_training(std::vector<ClientState>& clients,
                                       std::span<const nn::LayerSpec> architecture,
                                       std::size_t rounds, const nn::TrainConfig& cfg,
                                       const FederationOptions& options, Rng& init_rng) {
  if (clients.empty()) throw ConfigError("federated training needs at least one client");
  if (rounds == 0) throw ConfigError("federated training needs at least one round");
  cfg.validate();

  FederatedResult result;
  result.global = nn::he_init(architecture, init_rng);

  std::vector<ClientUpdate> updates(clients.size());
  std::vector<double> losses(clients.size());
  for (std::size_t round = 0; round < rounds; ++round) {
    for (std::size_t k = 0; k < clients.size(); ++k) {
      try {
        LocalRoundResult r = local_round(clients[k], result.global, cfg, options);
        updates[k] = std::move(r.update);
        losses[k] = r.mean_loss;
      } catch (const Error& e) {
        throw TrainingError("round " + std::to_string(round) + ", site '" + clients[k].site_id +
                            "': " + e.what());
      }
    }
    const std::vector<double> weights = aggregation_weights(updates, options.scheme);
    result.global = aggregate(updates, options.scheme);
    for (std::size_t k = 0; k < clients.size(); ++k) {
      result.telemetry.push_back({round, clients[k].site_id, losses[k], weights[k]});
    }
  }

  result.site_models.reserve(clients.size());
  for (const auto& c : clients) {
    nn::ParameterSet model = result.global;
    if (!options.aggregate_bn_stats && c.local_stats) copy_running_stats(model, *c.local_stats);
    result.site_models.push_back(std::move(model));
  }
  return result;
}

void write_telemetry(std::ostream& out, std::span<const RoundRecord> records) {
  for (const auto& r : records) {
    nlohmann::json j = {{"round", r.round}, {"site", r.site_id}, {"loss", r.loss}, {"weight", r.weight}};
    out << j.dump() << '\n';
  }
}

}  // namespace fedpd::fl
