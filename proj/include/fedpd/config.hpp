#pragma once

// Experiment configuration: a JSON document whose keys mirror the fields
// below. Precedence is defaults < config file < command-line flags.
//
// {
//   "sites": [ {SiteSpec fields} ... ],      // synthetic sites, or
//   "corpora": [ "a.fpsc", "b.csv" ],        // files on disk
//   "embedding_dim": 768,                    // preset dim when neither given
//   "setups": ["local", "central", "federated"],
//   "train": { "learning_rate": 8e-5, ... },
//   "hidden_widths": [1024, 256, 64],
//   "folds": 10, "repetitions": 5, "master_seed": 0,
//   "aggregation": "weighted_by_samples",
//   "aggregate_bn_stats": true, "persist_optimizer_state": false,
//   "reshuffle_folds": true, "rounds": 0, "threshold": 0.5,
//   "histogram_bins": 10, "jobs": 1, "output_dir": "out"
// }

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedpd/data_io.hpp"
#include "fedpd/experiment.hpp"

namespace fedpd::cli {

struct ExperimentConfig {
  std::vector<data::SiteSpec> sites;
  std::vector<std::filesystem::path> corpora;
  std::size_t embedding_dim = features::kDefaultEmbeddingDim;
  eval::ExperimentOptions experiment;
  std::size_t histogram_bins = 10;
  std::filesystem::path output_dir = "out";
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::string> setups;
  std::optional<std::size_t> jobs;
  std::optional<std::size_t> embedding_dim;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Relative corpus paths are resolved against base_dir. Unknown keys are
/// rejected.
ExperimentConfig config_from_json(const nlohmann::json& j,
                                  const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

void apply_overrides(ExperimentConfig& cfg, const Overrides& overrides);

/// Fills in the three-site preset when no sites or corpora are given, then
/// validates everything, including that corpus paths exist.
void resolve(ExperimentConfig& cfg);

}  // namespace fedpd::cli
