#include "fedpd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include <boost/math/special_functions/beta.hpp>

#include "fedpd/error.hpp"
#include "fedpd/random.hpp"

namespace fedpd::eval {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError(std::to_string(scores.size()) + " scores for " +
                     std::to_string(labels.size()) + " labels");
  }
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError(DataErrorCode::kBadLabel, "label " + std::to_string(l));
  }
}

}  // namespace

ConfusionMetrics confusion_metrics(std::span<const double> scores, std::span<const int> labels,
                                   double threshold) {
  check_inputs(scores, labels);
  if (scores.empty()) throw DataError(DataErrorCode::kInvalid, "confusion metrics of no samples");
  ConfusionMetrics m;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted_pd = scores[i] >= threshold;
    if (labels[i] == 1) {
      predicted_pd ? ++m.true_positive : ++m.false_negative;
    } else {
      predicted_pd ? ++m.false_positive : ++m.true_negative;
    }
  }
  m.accuracy = static_cast<double>(m.true_positive + m.true_negative) /
               static_cast<double>(scores.size());
  const std::size_t positives = m.true_positive + m.false_negative;
  const std::size_t negatives = m.true_negative + m.false_positive;
  if (positives > 0) {
    m.sensitivity = static_cast<double>(m.true_positive) / static_cast<double>(positives);
  }
  if (negatives > 0) {
    m.specificity = static_cast<double>(m.true_negative) / static_cast<double>(negatives);
  }
  return m;
}

RocResult roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t negatives = labels.size() - positives;
  RocResult result;
  if (positives == 0 || negatives == 0) return result;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  // Sweep thresholds from high to low. Each tie group contributes one point;
  // the pairs a group forms with itself earn half credit.
  const double np = static_cast<double>(positives);
  const double nn = static_cast<double>(negatives);
  double wins = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  result.curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    std::size_t group_tp = 0;
    std::size_t group_fp = 0;
    while (i < order.size() && scores[order[i]] == s) {
      labels[order[i]] == 1 ? ++group_tp : ++group_fp;
      ++i;
    }
    wins += static_cast<double>(group_fp) * (static_cast<double>(tp) + 0.5 * static_cast<double>(group_tp));
    tp += group_tp;
    fp += group_fp;
    result.curve.push_back({s, static_cast<double>(fp) / nn, static_cast<double>(tp) / np});
  }
  result.auc = wins / (np * nn);
  return result;
}

double trapezoid_area(std::span<const RocPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) * 0.5;
  }
  return area;
}

double student_t_sf(double t, double df) {
  if (!(df > 0.0)) throw ConfigError("student_t_sf requires df > 0");
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  if (t == 0.0) return 1.0;
  const double x = df / (df + t * t);
  return std::clamp(boost::math::ibeta(0.5 * df, 0.5, x), 0.0, 1.0);
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DataError(DataErrorCode::kInvalid, "paired t-test on samples of length " +
                                                 std::to_string(a.size()) + " and " +
                                                 std::to_string(b.size()));
  }
  if (a.size() < 2) throw DataError(DataErrorCode::kInvalid, "paired t-test needs n >= 2");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const MeanStd ms = mean_std(d);

  TTestResult r;
  r.degrees_of_freedom = n - 1;
  r.mean_difference = ms.mean;
  if (ms.std == 0.0) {
    if (ms.mean == 0.0) {
      r.t_statistic = 0.0;
      r.p_value = 1.0;
    } else {
      r.t_statistic = std::copysign(std::numeric_limits<double>::infinity(), ms.mean);
      r.p_value = 0.0;
      r.degenerate = true;
    }
    return r;
  }
  r.t_statistic = ms.mean / (ms.std / std::sqrt(static_cast<double>(n)));
  r.p_value = student_t_sf(r.t_statistic, static_cast<double>(r.degrees_of_freedom));
  return r;
}

Histogram histogram_scores(std::span<const double> scores, std::span<const int> labels,
                           std::size_t bins) {
  check_inputs(scores, labels);
  if (bins < 2) throw ConfigError("histogram needs at least 2 bins");
  Histogram h;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = static_cast<double>(i) / static_cast<double>(bins);
  h.hc_counts.assign(bins, 0);
  h.pd_counts.assign(bins, 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = std::clamp(scores[i], 0.0, 1.0);
    const auto bin = std::min(static_cast<std::size_t>(s * static_cast<double>(bins)), bins - 1);
    (labels[i] == 1 ? h.pd_counts : h.hc_counts)[bin] += 1;
  }
  return h;
}

std::vector<int> stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw ConfigError("fold count must be positive");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [label, members] : by_class) {
    if (members.size() < k) {
      throw ConfigError("class " + std::to_string(label) + " has " + std::to_string(members.size()) +
                        " subjects, fewer than " + std::to_string(k) + " folds");
    }
  }
  Rng rng(seed);
  std::vector<int> folds(labels.size(), -1);
  std::size_t dealt = 0;
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t idx : members) folds[idx] = static_cast<int>(dealt++ % k);
  }
  return folds;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  r.count = values.size();
  if (values.empty()) return r;
  double sum = 0.0;
  for (double v : values) sum += v;
  r.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return r;
}

}  // namespace fedpd::eval
