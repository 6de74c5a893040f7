#include "fedpd/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "fedpd/error.hpp"
#include "fedpd/random.hpp"

namespace fedpd::eval {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;

struct SubjectRoster {
  std::vector<std::string> subjects;
  std::vector<int> labels;
  std::vector<std::size_t> sample_subject;  // sample index -> roster index
};

SubjectRoster build_roster(const SiteData& site) {
  SubjectRoster roster;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& s : site.samples) {
    auto [it, inserted] = index.emplace(s.subject_id, roster.subjects.size());
    if (inserted) {
      roster.subjects.push_back(s.subject_id);
      roster.labels.push_back(s.label);
    } else if (roster.labels[it->second] != s.label) {
      throw DataError(DataErrorCode::kBadLabel, "site '" + site.site_id + "' subject '" +
                                                    s.subject_id + "' has conflicting labels");
    }
    roster.sample_subject.push_back(it->second);
  }
  return roster;
}

struct SiteSplit {
  nn::LabeledData train;
  nn::LabeledData test;
  std::vector<std::size_t> test_index;  // into site.samples
};

SiteSplit split_site(const SiteData& site, const std::vector<int>& folds, int held_out) {
  std::vector<features::FeatureVector> train;
  std::vector<features::FeatureVector> test;
  SiteSplit split;
  for (std::size_t i = 0; i < site.samples.size(); ++i) {
    if (folds[i] == held_out) {
      test.push_back(site.samples[i]);
      split.test_index.push_back(i);
    } else {
      train.push_back(site.samples[i]);
    }
  }
  split.train = features::to_labeled(train);
  split.test = features::to_labeled(test);
  return split;
}

struct JobResult {
  std::vector<FoldRecord> folds;
  std::vector<SampleRecord> samples;
  std::vector<TelemetryRecord> telemetry;
};

std::size_t setup_rank(Setup s) { return static_cast<std::size_t>(s); }

void evaluate_model(const nn::ParameterSet& model, const SiteData& site, const SiteSplit& split,
                    Setup setup, std::size_t rep, std::size_t fold, const ExperimentOptions& options,
                    JobResult& out) {
  const nn::Vector probs =
      nn::predict(model, split.test.features, nn::NormSettings::from(options.train));
  const std::span<const double> scores(probs.data(), static_cast<std::size_t>(probs.size()));
  const ConfusionMetrics cm = confusion_metrics(scores, split.test.labels, options.threshold);
  const RocResult roc = roc_auc(scores, split.test.labels);

  FoldRecord rec;
  rec.site = site.site_id;
  rec.setup = setup;
  rec.repetition = rep;
  rec.fold = fold;
  rec.test_size = scores.size();
  rec.accuracy = cm.accuracy;
  rec.auc = roc.auc;
  rec.sensitivity = cm.sensitivity;
  rec.specificity = cm.specificity;
  out.folds.push_back(std::move(rec));

  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& sample = site.samples[split.test_index[i]];
    out.samples.push_back({site.site_id, setup, rep, fold, sample.subject_id, sample.label, scores[i]});
  }
}

JobResult run_job(std::span<const SiteData> sites, const FoldPlan& plan, std::size_t fold,
                  const std::vector<nn::LayerSpec>& arch, const ExperimentOptions& options) {
  const std::size_t rep = plan.repetition;
  const std::uint64_t model_seed = derive_seed(options.master_seed, {fnv1a("model"), rep, fold});
  auto init_rng = [&] { return Rng(derive_seed(model_seed, {kInitStream})); };
  auto shuffle_rng = [&](std::size_t stream) {
    return Rng(derive_seed(model_seed, {kShuffleStream, stream}));
  };
  const bool persist = options.federation.persist_optimizer_state;

  std::vector<SiteSplit> splits;
  for (std::size_t s = 0; s < sites.size(); ++s) {
    splits.push_back(split_site(sites[s], plan.site_folds[s], static_cast<int>(fold)));
  }

  JobResult out;
  auto with_context = [&](const char* setup, const std::string& site, auto&& body) {
    try {
      body();
    } catch (const Error& e) {
      std::ostringstream os;
      os << "repetition " << rep << ", fold " << fold << ", setup " << setup;
      if (!site.empty()) os << ", site '" << site << "'";
      os << ": " << e.what();
      throw Error(e.category(), os.str());
    }
  };

  for (Setup setup : options.setups) {
    switch (setup) {
      case Setup::kLocal:
        for (std::size_t s = 0; s < sites.size(); ++s) {
          with_context("local", sites[s].site_id, [&] {
            Rng init = init_rng();
            Rng shuffle = shuffle_rng(0);
            const auto fit = nn::fit(arch, splits[s].train, options.train, init, shuffle, persist);
            evaluate_model(fit.params, sites[s], splits[s], setup, rep, fold, options, out);
          });
        }
        break;
      case Setup::kCentral:
        with_context("central", "", [&] {
          std::vector<nn::LabeledData> parts;
          for (const auto& sp : splits) parts.push_back(sp.train);
          const nn::LabeledData pooled = nn::concatenate(parts);
          Rng init = init_rng();
          Rng shuffle = shuffle_rng(0);
          const auto fit = nn::fit(arch, pooled, options.train, init, shuffle, persist);
          for (std::size_t s = 0; s < sites.size(); ++s) {
            evaluate_model(fit.params, sites[s], splits[s], setup, rep, fold, options, out);
          }
        });
        break;
      case Setup::kFederated:
        with_context("federated", "", [&] {
          std::vector<fl::ClientState> clients;
          for (std::size_t s = 0; s < sites.size(); ++s) {
            fl::ClientState c;
            c.site_id = sites[s].site_id;
            c.train_set = splits[s].train;
            c.rng = shuffle_rng(s);
            clients.push_back(std::move(c));
          }
          Rng init = init_rng();
          const std::size_t rounds = options.rounds > 0 ? options.rounds : options.train.epochs;
          const fl::FederatedResult fr = fl::run_federated_training(
              clients, arch, rounds, options.train, options.federation, init);
          for (std::size_t s = 0; s < sites.size(); ++s) {
            evaluate_model(fr.site_models[s], sites[s], splits[s], setup, rep, fold, options, out);
          }
          for (const auto& r : fr.telemetry) out.telemetry.push_back({rep, fold, r});
        });
        break;
    }
  }
  return out;
}

}  // namespace

const char* to_string(Setup setup) noexcept {
  switch (setup) {
    case Setup::kLocal: return "local";
    case Setup::kCentral: return "central";
    case Setup::kFederated: return "federated";
  }
  return "?";
}

Setup parse_setup(const std::string& name) {
  if (name == "local") return Setup::kLocal;
  if (name == "central") return Setup::kCentral;
  if (name == "federated" || name == "fl") return Setup::kFederated;
  throw ConfigError("unknown setup '" + name + "' (expected local, central or federated)");
}

std::vector<Setup> parse_setups(const std::string& list) {
  std::vector<Setup> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const Setup s = parse_setup(item);
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  }
  if (out.empty()) throw ConfigError("no setups selected");
  std::sort(out.begin(), out.end(), [](Setup a, Setup b) { return setup_rank(a) < setup_rank(b); });
  return out;
}

FoldPlan make_fold_plan(std::span<const SiteData> sites, std::size_t k, std::size_t repetition,
                        std::uint64_t master_seed, bool reshuffle_folds) {
  FoldPlan plan;
  plan.repetition = repetition;
  const std::uint64_t rep_tag = reshuffle_folds ? repetition : 0;
  for (const auto& site : sites) {
    const SubjectRoster roster = build_roster(site);
    const std::uint64_t seed =
        derive_seed(master_seed, {fnv1a("folds"), rep_tag, fnv1a(site.site_id)});
    std::vector<int> subject_folds;
    try {
      subject_folds = stratified_kfold(roster.labels, k, seed);
    } catch (const ConfigError& e) {
      throw ConfigError("site '" + site.site_id + "': " + e.what());
    }
    std::vector<int> sample_folds(site.samples.size());
    for (std::size_t i = 0; i < site.samples.size(); ++i) {
      sample_folds[i] = subject_folds[roster.sample_subject[i]];
    }
    plan.site_folds.push_back(std::move(sample_folds));
  }
  return plan;
}

MetricsTable run_experiment(std::span<const SiteData> sites, const ExperimentOptions& options) {
  if (sites.empty()) throw ConfigError("experiment needs at least one site");
  if (options.folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (options.repetitions == 0) throw ConfigError("repetitions must be positive");
  if (options.setups.empty()) throw ConfigError("no setups selected");
  options.train.validate();

  std::size_t width = 0;
  for (const auto& site : sites) {
    if (site.samples.empty()) throw DataError(DataErrorCode::kInvalid, "site '" + site.site_id + "' has no samples");
    for (const auto& s : site.samples) {
      if (width == 0) width = s.values.size();
      if (s.values.size() != width) {
        throw ShapeError("site '" + site.site_id + "' subject '" + s.subject_id +
                         "' has feature width " + std::to_string(s.values.size()) +
                         ", expected " + std::to_string(width));
      }
    }
  }
  for (std::size_t i = 0; i < sites.size(); ++i) {
    for (std::size_t j = i + 1; j < sites.size(); ++j) {
      if (sites[i].site_id == sites[j].site_id) {
        throw ConfigError("duplicate site id '" + sites[i].site_id + "'");
      }
    }
  }
  const auto arch = nn::classifier_architecture(width, options.hidden_widths);

  std::vector<FoldPlan> plans;
  for (std::size_t r = 0; r < options.repetitions; ++r) {
    plans.push_back(make_fold_plan(sites, options.folds, r, options.master_seed, options.reshuffle_folds));
  }

  const std::size_t job_count = options.repetitions * options.folds;
  std::vector<JobResult> results(job_count);
  std::vector<std::exception_ptr> errors(job_count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < job_count; j = next++) {
      try {
        results[j] = run_job(sites, plans[j / options.folds], j % options.folds, arch, options);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(options.jobs, 1, job_count);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  MetricsTable table;
  for (auto& r : results) {
    std::move(r.folds.begin(), r.folds.end(), std::back_inserter(table.folds));
    std::move(r.samples.begin(), r.samples.end(), std::back_inserter(table.samples));
    std::move(r.telemetry.begin(), r.telemetry.end(), std::back_inserter(table.telemetry));
  }

  std::map<std::string, std::size_t> site_rank;
  for (std::size_t i = 0; i < sites.size(); ++i) site_rank[sites[i].site_id] = i;
  auto key = [&](const auto& r) {
    return std::tuple(site_rank.at(r.site), setup_rank(r.setup), r.repetition, r.fold);
  };
  std::stable_sort(table.folds.begin(), table.folds.end(),
                   [&](const auto& a, const auto& b) { return key(a) < key(b); });
  std::stable_sort(table.samples.begin(), table.samples.end(),
                   [&](const auto& a, const auto& b) { return key(a) < key(b); });
  return table;
}

std::vector<SummaryRow> summarize(const MetricsTable& table) {
  std::vector<SummaryRow> rows;
  std::size_t i = 0;
  while (i < table.folds.size()) {
    const auto& head = table.folds[i];
    std::vector<double> acc;
    std::vector<double> auc;
    std::vector<double> sens;
    std::vector<double> spec;
    std::size_t j = i;
    for (; j < table.folds.size() && table.folds[j].site == head.site &&
           table.folds[j].setup == head.setup;
         ++j) {
      const auto& r = table.folds[j];
      acc.push_back(r.accuracy);
      if (r.auc) auc.push_back(*r.auc);
      if (r.sensitivity) sens.push_back(*r.sensitivity);
      if (r.specificity) spec.push_back(*r.specificity);
    }
    rows.push_back({head.site, head.setup, j - i, mean_std(acc), mean_std(auc), mean_std(sens),
                    mean_std(spec)});
    i = j;
  }
  return rows;
}

}  // namespace fedpd::eval
