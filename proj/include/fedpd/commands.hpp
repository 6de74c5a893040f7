#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedpd/config.hpp"
#include "fedpd/experiment.hpp"
#include "fedpd/metrics.hpp"

namespace fedpd::cli {

/// Writes <site_id>.fpsc per synthetic site plus manifest.json.
void cmd_gen(const ExperimentConfig& cfg, std::ostream& log);

/// Loads or generates the corpora, runs every configured setup and writes
/// summary.csv, records.csv, scores.csv, roc_<site>_<setup>.csv,
/// hist_<site>.csv, telemetry.jsonl and config.snapshot into output_dir.
eval::MetricsTable cmd_run(const ExperimentConfig& cfg, std::ostream& log);

struct CompareRequest {
  std::filesystem::path file_a;
  std::filesystem::path file_b;
  std::string site;
  eval::Setup setup_a = eval::Setup::kLocal;
  eval::Setup setup_b = eval::Setup::kFederated;
  double alpha = 0.05;
};

/// Paired t-test on accuracy, pairing records.csv rows by (repetition, fold).
eval::TTestResult cmd_compare(const CompareRequest& request, std::ostream& log);

/// Loads sites from corpus files (.fpsc or feature .csv) or generates them
/// from the synthetic specs, then pools each recording.
std::vector<eval::SiteData> load_sites(const ExperimentConfig& cfg);

std::vector<eval::FoldRecord> read_records(const std::filesystem::path& path);

}  // namespace fedpd::cli
