#pragma once

// Repeated stratified cross-validation over the Local / Central / Federated
// training setups.
//
// Within a repetition every site uses the same held-out fold index, so a
// subject tested in (repetition, fold) never appears in any setup's training
// data for that pair.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedpd/features.hpp"
#include "fedpd/federation.hpp"
#include "fedpd/metrics.hpp"
#include "fedpd/nn.hpp"

namespace fedpd::eval {

enum class Setup { kLocal, kCentral, kFederated };

const char* to_string(Setup setup) noexcept;
Setup parse_setup(const std::string& name);
/// Comma-separated list, e.g. "local,central,federated".
std::vector<Setup> parse_setups(const std::string& list);

struct SiteData {
  std::string site_id;
  features::FeatureSet samples;
};

struct FoldPlan {
  std::size_t repetition = 0;
  /// Per site, the fold of every sample (samples of one subject share it).
  std::vector<std::vector<int>> site_folds;
};

/// Pure function of (master_seed, repetition, site roster). With
/// reshuffle_folds off every repetition reuses the repetition-0 split.
FoldPlan make_fold_plan(std::span<const SiteData> sites, std::size_t k, std::size_t repetition,
                        std::uint64_t master_seed, bool reshuffle_folds);

struct ExperimentOptions {
  nn::TrainConfig train;
  std::vector<std::size_t> hidden_widths{std::begin(nn::kDefaultHiddenWidths),
                                         std::end(nn::kDefaultHiddenWidths)};
  std::size_t folds = 10;
  std::size_t repetitions = 5;
  std::uint64_t master_seed = 0;
  std::vector<Setup> setups{Setup::kLocal, Setup::kCentral, Setup::kFederated};
  fl::FederationOptions federation;
  /// Federated rounds; 0 means train.epochs.
  std::size_t rounds = 0;
  double threshold = kDefaultThreshold;
  bool reshuffle_folds = true;
  /// Worker threads over (repetition, fold) jobs. Results do not depend on it.
  std::size_t jobs = 1;
};

struct FoldRecord {
  std::string site;
  Setup setup = Setup::kLocal;
  std::size_t repetition = 0;
  std::size_t fold = 0;
  std::size_t test_size = 0;
  double accuracy = 0.0;
  std::optional<double> auc;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
};

struct SampleRecord {
  std::string site;
  Setup setup = Setup::kLocal;
  std::size_t repetition = 0;
  std::size_t fold = 0;
  std::string subject;
  int label = 0;
  double probability = 0.0;
};

struct TelemetryRecord {
  std::size_t repetition = 0;
  std::size_t fold = 0;
  fl::RoundRecord round;
};

/// Records are ordered by (site, setup, repetition, fold) with sites in input
/// order and setups in Local, Central, Federated order.
struct MetricsTable {
  std::vector<FoldRecord> folds;
  std::vector<SampleRecord> samples;
  std::vector<TelemetryRecord> telemetry;
};

MetricsTable run_experiment(std::span<const SiteData> sites, const ExperimentOptions& options);

struct SummaryRow {
  std::string site;
  Setup setup = Setup::kLocal;
  std::size_t records = 0;
  MeanStd accuracy;
  MeanStd auc;
  MeanStd sensitivity;
  MeanStd specificity;
};

/// Mean and sample std over defined per-fold values, per (site, setup).
std::vector<SummaryRow> summarize(const MetricsTable& table);

}  // namespace fedpd::eval
