#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fedpd/commands.hpp"
#include "fedpd/error.hpp"

using namespace fedpd;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("fedpd_cmd_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

cli::ExperimentConfig tiny_config(const fs::path& out) {
  auto cfg = cli::ExperimentConfig{};
  cfg.embedding_dim = 4;
  cfg.output_dir = out;
  cfg.experiment.hidden_widths = {8, 4};
  cfg.experiment.train.epochs = 2;
  cfg.experiment.train.learning_rate = 1e-3;
  cfg.experiment.folds = 2;
  cfg.experiment.repetitions = 2;
  cli::resolve(cfg);
  // Shrink the preset cohorts so the run takes milliseconds.
  for (auto& s : cfg.sites) {
    s.n_pd = 6;
    s.n_hc = 6;
    s.min_frames = 4;
    s.max_frames = 8;
  }
  return cfg;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string records_text(std::size_t local_n, std::size_t federated_n, double shift) {
  std::ostringstream out;
  out << "site,setup,repetition,fold,test_size,accuracy,auc,sensitivity,specificity\n";
  for (std::size_t i = 0; i < local_n; ++i) {
    out << "s,local," << i / 10 << ',' << i % 10 << ",10," << 0.5 + 0.01 * static_cast<double>(i % 7)
        << ",NA,0.5,0.5\n";
  }
  for (std::size_t i = 0; i < federated_n; ++i) {
    out << "s,federated," << i / 10 << ',' << i % 10 << ",10,"
        << 0.5 + shift + 0.01 * static_cast<double>(i % 5) << ",0.7,0.5,0.5\n";
  }
  return out.str();
}

}  // namespace

TEST_CASE("config JSON round trip and validation") {
  cli::ExperimentConfig cfg;
  cfg.experiment.folds = 7;
  cfg.experiment.master_seed = 12;
  cfg.experiment.setups = {eval::Setup::kFederated};
  cfg.experiment.federation.scheme.kind = fl::AggregationKind::kUniform;
  const auto back = cli::config_from_json(cli::to_json(cfg));
  CHECK(back.experiment.folds == 7);
  CHECK(back.experiment.master_seed == 12);
  CHECK(back.experiment.setups == cfg.experiment.setups);
  CHECK(back.experiment.federation.scheme.kind == fl::AggregationKind::kUniform);
  CHECK(cli::to_json(back) == cli::to_json(cfg));

  CHECK_THROWS_AS(cli::config_from_json(nlohmann::json{{"fold", 10}}), ConfigError);
  CHECK_THROWS_AS(cli::config_from_json(nlohmann::json{{"folds", "ten"}}), ConfigError);
  CHECK_THROWS_AS(cli::config_from_json(nlohmann::json{{"train", {{"lr", 1}}}}), ConfigError);
  CHECK_THROWS_AS(cli::config_from_json(nlohmann::json{{"setups", {"fedprox"}}}), ConfigError);
  CHECK_THROWS_AS(cli::config_from_json(nlohmann::json::array()), ConfigError);

  const auto dir = scratch_dir("config");
  write_text(dir / "bad.json", "{ not json");
  CHECK_THROWS_AS(cli::load_config(dir / "bad.json"), ConfigError);
  CHECK_THROWS_AS(cli::load_config(dir / "missing.json"), ConfigError);

  auto missing_corpus = cli::config_from_json(nlohmann::json{{"corpora", {"nope.fpsc"}}}, dir);
  CHECK(missing_corpus.corpora.front() == dir / "nope.fpsc");
  CHECK_THROWS_AS(cli::resolve(missing_corpus), ConfigError);

  cli::ExperimentConfig zero_folds;
  zero_folds.experiment.folds = 1;
  CHECK_THROWS_AS(cli::resolve(zero_folds), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("overrides take precedence and the preset fills in") {
  cli::ExperimentConfig cfg;
  cli::Overrides o;
  o.seed = 5;
  o.setups = "local,central";
  o.jobs = 2;
  o.embedding_dim = 16;
  o.output_dir = "elsewhere";
  cli::apply_overrides(cfg, o);
  cli::resolve(cfg);
  CHECK(cfg.experiment.master_seed == 5);
  CHECK(cfg.experiment.jobs == 2);
  CHECK(cfg.experiment.setups == std::vector<eval::Setup>{eval::Setup::kLocal, eval::Setup::kCentral});
  CHECK(cfg.output_dir == "elsewhere");
  REQUIRE(cfg.sites.size() == 3);
  CHECK(cfg.sites[0].embedding_dim == 16);
}

TEST_CASE("gen writes one corpus per site plus a manifest, reproducibly") {
  const auto dir = scratch_dir("gen");
  auto cfg = tiny_config(dir / "a");
  std::ostringstream log;
  cli::cmd_gen(cfg, log);
  cfg.output_dir = dir / "b";
  cli::cmd_gen(cfg, log);
  for (const char* name : {"spanish.fpsc", "german.fpsc", "czech.fpsc", "manifest.json"}) {
    REQUIRE(fs::exists(dir / "a" / name));
    CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
  }
  const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  CHECK(manifest["sites"].size() == 3);
  const auto corpus = data::read_corpus(dir / "a" / "german.fpsc");
  CHECK(corpus.records.size() == 12);
  fs::remove_all(dir);
}

TEST_CASE("run writes every output and corpora reload to the same results") {
  const auto dir = scratch_dir("run");
  auto cfg = tiny_config(dir / "run");
  std::ostringstream log;
  const auto table = cli::cmd_run(cfg, log);
  const auto out = dir / "run";
  CHECK(line_count(out / "summary.csv") == 1 + 9);
  CHECK(line_count(out / "records.csv") == 1 + 9 * 4);
  CHECK(line_count(out / "scores.csv") == 1 + 3 * 2 * 36);
  CHECK(fs::exists(out / "config.snapshot"));
  CHECK(fs::exists(out / "telemetry.jsonl"));
  for (const char* site : {"spanish", "german", "czech"}) {
    CHECK(fs::exists(out / (std::string("roc_") + site + "_central.csv")));
    CHECK(fs::exists(out / (std::string("roc_") + site + "_federated.csv")));
    CHECK(line_count(out / (std::string("hist_") + site + ".csv")) == 11);
  }
  CHECK(log.str().find("p(vs FL)") != std::string::npos);

  const auto records = cli::read_records(out / "records.csv");
  REQUIRE(records.size() == table.folds.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(records[i].accuracy == table.folds[i].accuracy);
    CHECK(records[i].auc == table.folds[i].auc);
  }

  // Same data through generated corpus files gives the same records.
  cli::cmd_gen(cfg, log);
  auto from_files = cfg;
  from_files.sites.clear();
  for (const char* site : {"spanish", "german", "czech"}) {
    from_files.corpora.push_back(out / (std::string(site) + ".fpsc"));
  }
  from_files.output_dir = dir / "files";
  const auto again = cli::cmd_run(from_files, log);
  REQUIRE(again.folds.size() == table.folds.size());
  for (std::size_t i = 0; i < again.folds.size(); ++i) {
    CHECK(again.folds[i].accuracy == table.folds[i].accuracy);
  }
  CHECK(slurp(out / "records.csv") == slurp(dir / "files" / "records.csv"));
  fs::remove_all(dir);
}

TEST_CASE("compare pairs records by repetition and fold") {
  const auto dir = scratch_dir("compare");
  write_text(dir / "r.csv", records_text(50, 50, 0.02));
  cli::CompareRequest req{dir / "r.csv", dir / "r.csv", "s"};
  std::ostringstream log;
  const auto t = cli::cmd_compare(req, log);
  CHECK(t.degrees_of_freedom == 49);
  CHECK(t.mean_difference < 0.0);
  CHECK(log.str().find("n=50") != std::string::npos);

  SUBCASE("a setup against itself") {
    req.setup_b = eval::Setup::kLocal;
    const auto same = cli::cmd_compare(req, log);
    CHECK(same.p_value == 1.0);
    CHECK(same.t_statistic == 0.0);
  }
  SUBCASE("row order does not matter") {
    std::istringstream in(records_text(50, 50, 0.02));
    std::string header, line;
    std::getline(in, header);
    std::vector<std::string> rows;
    while (std::getline(in, line)) rows.push_back(line);
    std::reverse(rows.begin(), rows.end());
    std::string text = header + "\n";
    for (const auto& r : rows) text += r + "\n";
    write_text(dir / "shuffled.csv", text);
    req.file_a = req.file_b = dir / "shuffled.csv";
    const auto t2 = cli::cmd_compare(req, log);
    CHECK(t2.t_statistic == t.t_statistic);
    CHECK(t2.p_value == t.p_value);
  }
  SUBCASE("misaligned records are an error naming the gap") {
    write_text(dir / "short.csv", records_text(49, 50, 0.02));
    req.file_a = req.file_b = dir / "short.csv";
    try {
      cli::cmd_compare(req, log);
      FAIL("expected an alignment error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("repetition 4, fold 9") != std::string::npos);
    }
  }
  SUBCASE("unknown site") {
    req.site = "nowhere";
    CHECK_THROWS_AS(cli::cmd_compare(req, log), DataError);
  }
  fs::remove_all(dir);
}

TEST_CASE("malformed records files") {
  const auto dir = scratch_dir("records");
  write_text(dir / "a.csv", "site,setup,fold\n");
  CHECK_THROWS_AS(cli::read_records(dir / "a.csv"), DataError);
  write_text(dir / "b.csv", "site,setup,repetition,fold,accuracy\ns,local,0,0\n");
  CHECK_THROWS_AS(cli::read_records(dir / "b.csv"), DataError);
  write_text(dir / "c.csv", "site,setup,repetition,fold,accuracy\ns,local,0,0,high\n");
  CHECK_THROWS_AS(cli::read_records(dir / "c.csv"), DataError);
  CHECK_THROWS_AS(cli::read_records(dir / "none.csv"), DataError);
  fs::remove_all(dir);
}
