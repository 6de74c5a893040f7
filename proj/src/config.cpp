#include "fedpd/config.hpp"

#include <fstream>
#include <set>

#include "fedpd/error.hpp"

namespace fedpd::cli {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

json site_to_json(const data::SiteSpec& s) {
  return {{"site_id", s.site_id},
          {"n_pd", s.n_pd},
          {"n_hc", s.n_hc},
          {"embedding_dim", s.embedding_dim},
          {"min_frames", s.min_frames},
          {"max_frames", s.max_frames},
          {"class_separation", s.class_separation},
          {"site_shift", s.site_shift},
          {"noise_scale", s.noise_scale},
          {"seed", s.seed},
          {"signal_seed", s.signal_seed}};
}

data::SiteSpec site_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("each entry of 'sites' must be an object");
  reject_unknown(j,
                 {"site_id", "n_pd", "n_hc", "embedding_dim", "min_frames", "max_frames",
                  "class_separation", "site_shift", "noise_scale", "seed", "signal_seed"},
                 "site spec");
  data::SiteSpec s;
  read(j, "site_id", s.site_id);
  read(j, "n_pd", s.n_pd);
  read(j, "n_hc", s.n_hc);
  read(j, "embedding_dim", s.embedding_dim);
  read(j, "min_frames", s.min_frames);
  read(j, "max_frames", s.max_frames);
  read(j, "class_separation", s.class_separation);
  read(j, "site_shift", s.site_shift);
  read(j, "noise_scale", s.noise_scale);
  read(j, "seed", s.seed);
  read(j, "signal_seed", s.signal_seed);
  return s;
}

json train_to_json(const nn::TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"weight_decay", t.weight_decay},
          {"batch_size", t.batch_size},       {"epochs", t.epochs},
          {"bn_momentum", t.bn_momentum},     {"bn_epsilon", t.bn_epsilon},
          {"adam_beta1", t.adam_beta1},       {"adam_beta2", t.adam_beta2},
          {"adam_epsilon", t.adam_epsilon}};
}

nn::TrainConfig train_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("'train' must be an object");
  reject_unknown(j,
                 {"learning_rate", "weight_decay", "batch_size", "epochs", "bn_momentum",
                  "bn_epsilon", "adam_beta1", "adam_beta2", "adam_epsilon"},
                 "train");
  nn::TrainConfig t;
  read(j, "learning_rate", t.learning_rate);
  read(j, "weight_decay", t.weight_decay);
  read(j, "batch_size", t.batch_size);
  read(j, "epochs", t.epochs);
  read(j, "bn_momentum", t.bn_momentum);
  read(j, "bn_epsilon", t.bn_epsilon);
  read(j, "adam_beta1", t.adam_beta1);
  read(j, "adam_beta2", t.adam_beta2);
  read(j, "adam_epsilon", t.adam_epsilon);
  return t;
}

}  // namespace

json to_json(const ExperimentConfig& cfg) {
  const auto& x = cfg.experiment;
  json sites = json::array();
  for (const auto& s : cfg.sites) sites.push_back(site_to_json(s));
  json corpora = json::array();
  for (const auto& p : cfg.corpora) corpora.push_back(p.string());
  json setups = json::array();
  for (auto s : x.setups) setups.push_back(eval::to_string(s));
  return {{"sites", sites},
          {"corpora", corpora},
          {"embedding_dim", cfg.embedding_dim},
          {"setups", setups},
          {"train", train_to_json(x.train)},
          {"hidden_widths", x.hidden_widths},
          {"folds", x.folds},
          {"repetitions", x.repetitions},
          {"master_seed", x.master_seed},
          {"aggregation", fl::to_string(x.federation.scheme.kind)},
          {"aggregate_bn_stats", x.federation.aggregate_bn_stats},
          {"persist_optimizer_state", x.federation.persist_optimizer_state},
          {"reshuffle_folds", x.reshuffle_folds},
          {"rounds", x.rounds},
          {"threshold", x.threshold},
          {"histogram_bins", cfg.histogram_bins},
          {"jobs", x.jobs},
          {"output_dir", cfg.output_dir.string()}};
}

ExperimentConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j,
                 {"sites", "corpora", "embedding_dim", "setups", "train", "hidden_widths", "folds",
                  "repetitions", "master_seed", "aggregation", "aggregate_bn_stats",
                  "persist_optimizer_state", "reshuffle_folds", "rounds", "threshold",
                  "histogram_bins", "jobs", "output_dir"},
                 "config");
  ExperimentConfig cfg;
  auto& x = cfg.experiment;
  if (j.contains("sites")) {
    if (!j["sites"].is_array()) throw ConfigError("'sites' must be an array");
    for (const auto& s : j["sites"]) cfg.sites.push_back(site_from_json(s));
  }
  if (j.contains("corpora")) {
    std::vector<std::string> paths;
    read(j, "corpora", paths);
    for (const auto& p : paths) {
      std::filesystem::path path(p);
      if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
      cfg.corpora.push_back(path);
    }
  }
  read(j, "embedding_dim", cfg.embedding_dim);
  if (j.contains("setups")) {
    std::vector<std::string> names;
    read(j, "setups", names);
    std::string joined;
    for (const auto& n : names) joined += n + ",";
    x.setups = eval::parse_setups(joined);
  }
  if (j.contains("train")) x.train = train_from_json(j["train"]);
  read(j, "hidden_widths", x.hidden_widths);
  read(j, "folds", x.folds);
  read(j, "repetitions", x.repetitions);
  read(j, "master_seed", x.master_seed);
  if (j.contains("aggregation")) {
    std::string name;
    read(j, "aggregation", name);
    x.federation.scheme.kind = fl::parse_aggregation(name);
  }
  read(j, "aggregate_bn_stats", x.federation.aggregate_bn_stats);
  read(j, "persist_optimizer_state", x.federation.persist_optimizer_state);
  read(j, "reshuffle_folds", x.reshuffle_folds);
  read(j, "rounds", x.rounds);
  read(j, "threshold", x.threshold);
  read(j, "histogram_bins", cfg.histogram_bins);
  read(j, "jobs", x.jobs);
  std::string out = cfg.output_dir.string();
  read(j, "output_dir", out);
  cfg.output_dir = out;
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

void apply_overrides(ExperimentConfig& cfg, const Overrides& o) {
  if (o.seed) cfg.experiment.master_seed = *o.seed;
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.setups) cfg.experiment.setups = eval::parse_setups(*o.setups);
  if (o.jobs) cfg.experiment.jobs = *o.jobs;
  if (o.embedding_dim) cfg.embedding_dim = *o.embedding_dim;
}

void resolve(ExperimentConfig& cfg) {
  auto& x = cfg.experiment;
  if (!cfg.sites.empty() && !cfg.corpora.empty()) {
    throw ConfigError("give either 'sites' or 'corpora', not both");
  }
  if (cfg.embedding_dim == 0) throw ConfigError("embedding_dim must be positive");
  if (cfg.sites.empty() && cfg.corpora.empty()) {
    cfg.sites = data::three_site_preset(x.master_seed, cfg.embedding_dim);
  }
  for (const auto& s : cfg.sites) s.validate(x.folds);
  for (auto& p : cfg.corpora) {
    if (!std::filesystem::exists(p)) throw ConfigError("corpus '" + p.string() + "' does not exist");
    p = std::filesystem::absolute(p).lexically_normal();
  }
  x.train.validate();
  if (x.folds < 2) throw ConfigError("folds must be >= 2");
  if (x.repetitions == 0) throw ConfigError("repetitions must be positive");
  if (x.jobs == 0) throw ConfigError("jobs must be positive");
  if (!(x.threshold >= 0.0 && x.threshold <= 1.0)) throw ConfigError("threshold must be in [0,1]");
  if (cfg.histogram_bins < 2) throw ConfigError("histogram_bins must be >= 2");
  for (auto w : x.hidden_widths) {
    if (w == 0) throw ConfigError("hidden widths must be positive");
  }
}

}  // namespace fedpd::cli
