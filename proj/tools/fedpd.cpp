// fedpd: generate synthetic corpora, run Local / Central / Federated
// cross-validation experiments and compare setups.
//
// Exit codes: 0 success, 1 configuration error, 2 data error,
// 3 runtime/training error.

#include <exception>
#include <iostream>

#include "CLI11.hpp"

#include "fedpd/commands.hpp"
#include "fedpd/error.hpp"

namespace {

struct CommonFlags {
  std::string config;
  fedpd::cli::Overrides overrides;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "JSON config file");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t v) { flags.overrides.seed = v; }, "master seed");
  cmd->add_option_function<std::string>(
      "--out", [&](const std::string& v) { flags.overrides.output_dir = v; }, "output directory");
  cmd->add_option_function<std::string>(
      "--setups", [&](const std::string& v) { flags.overrides.setups = v; },
      "comma-separated subset of local,central,federated");
  cmd->add_option_function<std::size_t>(
      "--jobs", [&](std::size_t v) { flags.overrides.jobs = v; },
      "worker threads over (repetition, fold) jobs");
  cmd->add_option_function<std::size_t>(
      "--embedding-dim", [&](std::size_t v) { flags.overrides.embedding_dim = v; },
      "embedding width of the built-in three-site preset");
}

fedpd::cli::ExperimentConfig build_config(const CommonFlags& flags) {
  fedpd::cli::ExperimentConfig cfg =
      flags.config.empty() ? fedpd::cli::ExperimentConfig{} : fedpd::cli::load_config(flags.config);
  fedpd::cli::apply_overrides(cfg, flags.overrides);
  fedpd::cli::resolve(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated Parkinson's speech classification simulator"};
  app.require_subcommand(1);

  CommonFlags gen_flags;
  auto* gen = app.add_subcommand("gen", "write synthetic corpus files and a manifest");
  add_common(gen, gen_flags);

  CommonFlags run_flags;
  auto* run = app.add_subcommand("run", "run the cross-validation experiment");
  add_common(run, run_flags);

  fedpd::cli::CompareRequest compare_req;
  std::vector<std::string> compare_files;
  std::string setup_a = "local";
  std::string setup_b = "federated";
  auto* compare = app.add_subcommand("compare", "paired t-test between two setups on accuracy");
  compare->add_option("files", compare_files, "records.csv (one file, or A then B)")
      ->required()
      ->expected(1, 2);
  compare->add_option("--site", compare_req.site, "site id")->required();
  compare->add_option("--a", setup_a, "first setup")->capture_default_str();
  compare->add_option("--b", setup_b, "second setup")->capture_default_str();
  compare->add_option("--alpha", compare_req.alpha, "significance level")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      fedpd::cli::cmd_gen(build_config(gen_flags), std::cout);
    } else if (run->parsed()) {
      fedpd::cli::cmd_run(build_config(run_flags), std::cout);
    } else if (compare->parsed()) {
      compare_req.file_a = compare_files.front();
      compare_req.file_b = compare_files.back();
      compare_req.setup_a = fedpd::eval::parse_setup(setup_a);
      compare_req.setup_b = fedpd::eval::parse_setup(setup_b);
      fedpd::cli::cmd_compare(compare_req, std::cout);
    }
  } catch (const fedpd::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
