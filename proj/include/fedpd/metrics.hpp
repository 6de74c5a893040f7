#pragma once

// Classification metrics, ROC/AUC, score histograms, stratified fold
// assignment and the paired t-test. PD (label 1) is the positive class.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace fedpd::eval {

inline constexpr double kDefaultThreshold = 0.5;

/// Sensitivity/specificity are empty when their class is absent.
struct ConfusionMetrics {
  double accuracy = 0.0;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::size_t true_positive = 0;
  std::size_t true_negative = 0;
  std::size_t false_positive = 0;
  std::size_t false_negative = 0;
};

/// Predicts PD when score >= threshold.
ConfusionMetrics confusion_metrics(std::span<const double> scores, std::span<const int> labels,
                                   double threshold = kDefaultThreshold);

struct RocPoint {
  double threshold;  // +inf for the (0,0) endpoint
  double fpr;
  double tpr;
};

struct RocResult {
  /// Mann-Whitney AUC with ties counted 1/2; empty for single-class input.
  std::optional<double> auc;
  /// One point per distinct score, from (0,0) to (1,1).
  std::vector<RocPoint> curve;
};

RocResult roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Trapezoidal area under a curve ordered by increasing fpr.
double trapezoid_area(std::span<const RocPoint> curve);

/// Two-tailed Student-t tail probability 2 * P(T >= |t|), df > 0.
double student_t_sf(double t, double df);

struct TTestResult {
  double t_statistic = 0.0;
  double p_value = 1.0;
  std::size_t degrees_of_freedom = 0;
  double mean_difference = 0.0;
  /// Zero spread with a nonzero mean difference.
  bool degenerate = false;
};

/// Paired two-tailed t-test on a - b.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

struct Histogram {
  std::vector<double> edges;  // bins + 1 values over [0, 1]
  std::vector<std::size_t> hc_counts;
  std::vector<std::size_t> pd_counts;
};

/// Equal-width bins on [0,1]; the last bin is closed on the right. Scores
/// outside [0,1] are clamped.
Histogram histogram_scores(std::span<const double> scores, std::span<const int> labels,
                           std::size_t bins = 10);

/// Per class, subjects are shuffled and dealt round-robin into k folds.
/// Dealing continues across classes, so per-class fold sizes differ by at
/// most one. Throws ConfigError when a class has fewer than k subjects.
std::vector<int> stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
  std::size_t count = 0;
};

MeanStd mean_std(std::span<const double> values);

}  // namespace fedpd::eval
