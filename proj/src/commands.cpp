#include "fedpd/commands.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "fedpd/error.hpp"

namespace fedpd::cli {

namespace {

namespace fs = std::filesystem;

std::string num(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : "NA"; }

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataErrorCode::kIo, "cannot write '" + path.string() + "'");
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw DataError(DataErrorCode::kIo, "cannot create output directory '" + dir.string() + "'");
  }
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) cells.push_back(cell);
  if (!line.empty() && line.back() == sep) cells.emplace_back();
  return cells;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError(DataErrorCode::kInvalid, where + ": '" + s + "' is not a number");
  }
  return v;
}

std::size_t parse_size(const std::string& s, const std::string& where) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError(DataErrorCode::kInvalid, where + ": '" + s + "' is not an integer");
  }
  return v;
}

void write_summary(const fs::path& path, const std::vector<eval::SummaryRow>& rows) {
  auto out = open_output(path);
  out << "site,setup,records,accuracy_mean,accuracy_std,auc_mean,auc_std,"
         "sensitivity_mean,sensitivity_std,specificity_mean,specificity_std\n";
  for (const auto& r : rows) {
    out << r.site << ',' << eval::to_string(r.setup) << ',' << r.records;
    for (const auto* m : {&r.accuracy, &r.auc, &r.sensitivity, &r.specificity}) {
      out << ',' << pct(m->mean) << ',' << pct(m->std);
    }
    out << '\n';
  }
}

void write_records(const fs::path& path, const std::vector<eval::FoldRecord>& records) {
  auto out = open_output(path);
  out << "site,setup,repetition,fold,test_size,accuracy,auc,sensitivity,specificity\n";
  for (const auto& r : records) {
    out << r.site << ',' << eval::to_string(r.setup) << ',' << r.repetition << ',' << r.fold << ','
        << r.test_size << ',' << num(r.accuracy) << ',' << opt_num(r.auc) << ','
        << opt_num(r.sensitivity) << ',' << opt_num(r.specificity) << '\n';
  }
}

void write_scores(const fs::path& path, const std::vector<eval::SampleRecord>& samples) {
  auto out = open_output(path);
  out << "site,setup,repetition,fold,subject,label,probability\n";
  for (const auto& s : samples) {
    out << s.site << ',' << eval::to_string(s.setup) << ',' << s.repetition << ',' << s.fold << ','
        << s.subject << ',' << s.label << ',' << num(s.probability) << '\n';
  }
}

void pooled_scores(const eval::MetricsTable& table, const std::string& site, eval::Setup setup,
                   std::vector<double>& scores, std::vector<int>& labels) {
  for (const auto& s : table.samples) {
    if (s.site == site && s.setup == setup) {
      scores.push_back(s.probability);
      labels.push_back(s.label);
    }
  }
}

void print_table(const ExperimentConfig& cfg, const std::vector<eval::SummaryRow>& rows,
                 const eval::MetricsTable& table, std::ostream& log) {
  const bool has_fl = std::find(cfg.experiment.setups.begin(), cfg.experiment.setups.end(),
                                eval::Setup::kFederated) != cfg.experiment.setups.end();
  std::map<std::pair<std::string, eval::Setup>, std::vector<double>> acc;
  for (const auto& r : table.folds) acc[{r.site, r.setup}].push_back(r.accuracy);

  char line[256];
  std::snprintf(line, sizeof line, "%-10s %-10s %15s %15s %15s %15s %8s\n", "site", "setup",
                "accuracy", "auc", "sensitivity", "specificity", "p(vs FL)");
  log << line;
  for (const auto& r : rows) {
    auto cell = [](const eval::MeanStd& m) { return pct(m.mean) + " \xC2\xB1 " + pct(m.std); };
    std::string p = "-";
    if (has_fl && r.setup != eval::Setup::kFederated) {
      const auto& a = acc[{r.site, r.setup}];
      const auto& b = acc[{r.site, eval::Setup::kFederated}];
      if (a.size() == b.size() && a.size() >= 2) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", eval::paired_t_test(a, b).p_value);
        p = buf;
      }
    }
    std::snprintf(line, sizeof line, "%-10s %-10s %16s %16s %16s %16s %8s\n", r.site.c_str(),
                  eval::to_string(r.setup), cell(r.accuracy).c_str(), cell(r.auc).c_str(),
                  cell(r.sensitivity).c_str(), cell(r.specificity).c_str(), p.c_str());
    log << line;
  }
}

}  // namespace

std::vector<eval::SiteData> load_sites(const ExperimentConfig& cfg) {
  std::vector<eval::SiteData> sites;
  auto site_for = [&](const std::string& id) -> eval::SiteData& {
    for (auto& s : sites) {
      if (s.site_id == id) return s;
    }
    sites.push_back({id, {}});
    return sites.back();
  };

  for (const auto& path : cfg.corpora) {
    features::FeatureSet samples;
    if (path.extension() == ".csv") {
      samples = data::import_features(path);
    } else {
      const data::Corpus corpus = data::read_corpus(path);
      samples = features::pool_corpus(corpus.records);
    }
    for (auto& s : samples) site_for(s.site_id).samples.push_back(std::move(s));
  }
  for (const auto& spec : cfg.sites) {
    const data::Corpus corpus = data::generate_synthetic(spec);
    features::FeatureSet samples = features::pool_corpus(corpus.records);
    auto& site = site_for(spec.site_id);
    std::move(samples.begin(), samples.end(), std::back_inserter(site.samples));
  }
  return sites;
}

void cmd_gen(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.sites.empty()) throw ConfigError("no synthetic sites to generate");
  ensure_dir(cfg.output_dir);
  nlohmann::json manifest = {{"format", "FPSC"}, {"version", data::kCorpusVersion}};
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& spec : cfg.sites) {
    const data::Corpus corpus = data::generate_synthetic(spec);
    const std::string file = spec.site_id + ".fpsc";
    data::write_corpus(cfg.output_dir / file, corpus);
    entries.push_back({{"site_id", spec.site_id},
                       {"file", file},
                       {"records", corpus.records.size()},
                       {"n_pd", spec.n_pd},
                       {"n_hc", spec.n_hc},
                       {"embedding_dim", spec.embedding_dim},
                       {"seed", spec.seed}});
    log << "wrote " << (cfg.output_dir / file).string() << " (" << corpus.records.size()
        << " recordings)\n";
  }
  manifest["sites"] = entries;
  auto out = open_output(cfg.output_dir / "manifest.json");
  out << manifest.dump(2) << '\n';
}

eval::MetricsTable cmd_run(const ExperimentConfig& cfg, std::ostream& log) {
  ensure_dir(cfg.output_dir);
  {
    auto snap = open_output(cfg.output_dir / "config.snapshot");
    snap << to_json(cfg).dump(2) << '\n';
  }

  const std::vector<eval::SiteData> sites = load_sites(cfg);
  const eval::MetricsTable table = eval::run_experiment(sites, cfg.experiment);
  const std::vector<eval::SummaryRow> rows = eval::summarize(table);

  write_summary(cfg.output_dir / "summary.csv", rows);
  write_records(cfg.output_dir / "records.csv", table.folds);
  write_scores(cfg.output_dir / "scores.csv", table.samples);

  const auto& setups = cfg.experiment.setups;
  auto ran = [&](eval::Setup s) { return std::find(setups.begin(), setups.end(), s) != setups.end(); };
  for (const auto& site : sites) {
    for (eval::Setup setup : {eval::Setup::kCentral, eval::Setup::kFederated}) {
      if (!ran(setup)) continue;
      std::vector<double> scores;
      std::vector<int> labels;
      pooled_scores(table, site.site_id, setup, scores, labels);
      const eval::RocResult roc = eval::roc_auc(scores, labels);
      auto out = open_output(cfg.output_dir /
                             ("roc_" + site.site_id + "_" + eval::to_string(setup) + ".csv"));
      out << "threshold,fpr,tpr\n";
      for (const auto& p : roc.curve) out << num(p.threshold) << ',' << num(p.fpr) << ',' << num(p.tpr) << '\n';
    }
    if (ran(eval::Setup::kFederated)) {
      std::vector<double> scores;
      std::vector<int> labels;
      pooled_scores(table, site.site_id, eval::Setup::kFederated, scores, labels);
      const eval::Histogram h = eval::histogram_scores(scores, labels, cfg.histogram_bins);
      auto out = open_output(cfg.output_dir / ("hist_" + site.site_id + ".csv"));
      out << "bin_lower,bin_upper,hc_count,pd_count\n";
      for (std::size_t b = 0; b < h.hc_counts.size(); ++b) {
        out << num(h.edges[b]) << ',' << num(h.edges[b + 1]) << ',' << h.hc_counts[b] << ','
            << h.pd_counts[b] << '\n';
      }
    }
  }

  {
    auto out = open_output(cfg.output_dir / "telemetry.jsonl");
    for (const auto& t : table.telemetry) {
      nlohmann::json j = {{"repetition", t.repetition}, {"fold", t.fold},
                          {"round", t.round.round},     {"site", t.round.site_id},
                          {"loss", t.round.loss},       {"weight", t.round.weight}};
      out << j.dump() << '\n';
    }
  }

  std::size_t undefined = 0;
  for (const auto& r : table.folds) {
    undefined += !r.auc + !r.sensitivity + !r.specificity;
  }
  if (undefined > 0) {
    log << "note: " << undefined << " per-fold metric values were undefined (single-class test fold) "
        << "and are excluded from the summary\n";
  }
  print_table(cfg, rows, table, log);
  log << "outputs written to " << cfg.output_dir.string() << '\n';
  return table;
}

std::vector<eval::FoldRecord> read_records(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError(DataErrorCode::kInvalid, path.string() + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line, ',');
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* need : {"site", "setup", "repetition", "fold", "accuracy"}) {
    if (!col.contains(need)) {
      throw DataError(DataErrorCode::kInvalid, path.string() + " lacks column '" + need + "'");
    }
  }
  auto optional_col = [&](const std::vector<std::string>& cells, const char* name,
                          const std::string& where) -> std::optional<double> {
    auto it = col.find(name);
    if (it == col.end() || cells[it->second] == "NA") return std::nullopt;
    return parse_double(cells[it->second], where);
  };

  std::vector<eval::FoldRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    const std::string where = path.string() + " line " + std::to_string(line_no);
    if (cells.size() != header.size()) {
      throw DataError(DataErrorCode::kWidthMismatch, where + " has " + std::to_string(cells.size()) +
                                                         " cells, header has " +
                                                         std::to_string(header.size()));
    }
    eval::FoldRecord r;
    r.site = cells[col["site"]];
    try {
      r.setup = eval::parse_setup(cells[col["setup"]]);
    } catch (const ConfigError& e) {
      throw DataError(DataErrorCode::kInvalid, where + ": " + e.what());
    }
    r.repetition = parse_size(cells[col["repetition"]], where);
    r.fold = parse_size(cells[col["fold"]], where);
    r.accuracy = parse_double(cells[col["accuracy"]], where);
    if (col.contains("test_size")) r.test_size = parse_size(cells[col["test_size"]], where);
    r.auc = optional_col(cells, "auc", where);
    r.sensitivity = optional_col(cells, "sensitivity", where);
    r.specificity = optional_col(cells, "specificity", where);
    records.push_back(std::move(r));
  }
  return records;
}

eval::TTestResult cmd_compare(const CompareRequest& req, std::ostream& log) {
  using Key = std::pair<std::size_t, std::size_t>;
  auto collect = [&](const fs::path& path, eval::Setup setup) {
    std::map<Key, double> out;
    for (const auto& r : read_records(path)) {
      if (r.site != req.site || r.setup != setup) continue;
      if (!out.emplace(Key{r.repetition, r.fold}, r.accuracy).second) {
        throw DataError(DataErrorCode::kDuplicateSubject,
                        path.string() + " repeats (repetition " + std::to_string(r.repetition) +
                            ", fold " + std::to_string(r.fold) + ") for " + req.site + "/" +
                            eval::to_string(setup));
      }
    }
    return out;
  };
  const auto a = collect(req.file_a, req.setup_a);
  const auto b = collect(req.file_b, req.setup_b);
  if (a.empty() || b.empty()) {
    throw DataError(DataErrorCode::kInvalid, "no records for site '" + req.site + "' and setup '" +
                                                 eval::to_string(a.empty() ? req.setup_a : req.setup_b) +
                                                 "'");
  }

  std::vector<std::string> missing;
  auto describe = [](const Key& k, const char* side) {
    return std::string("(repetition ") + std::to_string(k.first) + ", fold " +
           std::to_string(k.second) + ") missing from " + side;
  };
  for (const auto& [k, v] : a) {
    if (!b.contains(k)) missing.push_back(describe(k, "B"));
  }
  for (const auto& [k, v] : b) {
    if (!a.contains(k)) missing.push_back(describe(k, "A"));
  }
  if (!missing.empty()) {
    std::string msg = "records are not aligned (" + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()) + "):";
    for (const auto& m : missing) msg += "\n  " + m;
    throw DataError(DataErrorCode::kInvalid, msg);
  }

  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& [k, v] : a) {
    xs.push_back(v);
    ys.push_back(b.at(k));
  }
  const eval::TTestResult t = eval::paired_t_test(xs, ys);
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "site %s: %s vs %s accuracy, n=%zu\n  mean difference %.4f\n  t = %.4f, df = %zu, "
                "p = %.4g\n",
                req.site.c_str(), eval::to_string(req.setup_a), eval::to_string(req.setup_b),
                xs.size(), t.mean_difference, t.t_statistic, t.degrees_of_freedom, t.p_value);
  log << buf;
  log << "  " << (t.p_value <= req.alpha ? "significant" : "not significant") << " at alpha "
      << req.alpha << (t.degenerate ? " (degenerate: zero variance of differences)" : "") << '\n';
  return t;
}

}  // namespace fedpd::cli
