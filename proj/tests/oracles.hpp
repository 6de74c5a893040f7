#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls the code path it checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "fedpd/nn.hpp"

namespace fedpd::oracle {

/// Train-mode loss on a scratch copy, so running statistics of `params`
/// stay untouched.
inline double train_loss(const nn::ParameterSet& params, const nn::Matrix& batch,
                         std::span<const int> labels) {
  nn::ParameterSet scratch = params;
  const auto fr = nn::forward(scratch, batch, nn::Mode::kTrain);
  return nn::cross_entropy(fr.probabilities, labels);
}

/// Fourth-order central differences over every trainable entry. Running
/// statistics get zero, matching the backward contract.
inline nn::ParameterSet finite_difference_gradient(const nn::ParameterSet& params,
                                                   const nn::Matrix& batch,
                                                   std::span<const int> labels, double h = 1e-4) {
  nn::ParameterSet grads = nn::ParameterSet::zeros_like(params);
  nn::ParameterSet probe = params;
  auto probe_arrays = probe.arrays();
  auto grad_arrays = grads.arrays();
  for (std::size_t a = 0; a < probe_arrays.size(); ++a) {
    if (!nn::is_trainable(probe_arrays[a].kind)) continue;
    auto values = probe_arrays[a].values;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      auto loss_at = [&](double offset) {
        values[i] = saved + offset;
        return train_loss(probe, batch, labels);
      };
      const double up2 = loss_at(2.0 * h), up = loss_at(h);
      const double down = loss_at(-h), down2 = loss_at(-2.0 * h);
      values[i] = saved;
      grad_arrays[a].values[i] = (8.0 * (up - down) - (up2 - down2)) / (12.0 * h);
    }
  }
  return grads;
}

/// Smallest |pre-activation| feeding any ReLU in a train-mode pass. Central
/// differences are meaningless when a perturbation can cross a kink, so
/// gradient checks redraw inputs whose margin is too small.
inline double min_relu_margin(const nn::ParameterSet& params, const nn::Matrix& batch) {
  nn::ParameterSet scratch = params;
  const auto fr = nn::forward(scratch, batch, nn::Mode::kTrain);
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    if (params.specs[l].activation != nn::Activation::kRelu) continue;
    const auto& lc = fr.cache.layers[l];
    nn::Matrix pre;
    if (const auto& bn = params.layers[l].batchnorm) {
      pre = ((lc.normalized.array().rowwise() * bn->gamma.transpose().array()).rowwise() +
             bn->beta.transpose().array())
                .matrix();
    } else {
      pre = lc.input * params.layers[l].weights.transpose();
      pre.rowwise() += params.layers[l].biases.transpose();
    }
    margin = std::min(margin, pre.cwiseAbs().minCoeff());
  }
  return margin;
}

/// max |a - n| / max(|a|, |n|, floor) over trainable entries. The floor keeps
/// structurally-zero gradients (biases feeding a batchnorm) from dividing
/// roundoff by roundoff.
inline double max_relative_error(const nn::ParameterSet& analytic, const nn::ParameterSet& numeric,
                                 double floor = 1e-6) {
  const auto xs = analytic.arrays();
  const auto ys = numeric.arrays();
  double worst = 0.0;
  for (std::size_t a = 0; a < xs.size(); ++a) {
    if (!nn::is_trainable(xs[a].kind)) continue;
    for (std::size_t i = 0; i < xs[a].values.size(); ++i) {
      const double x = xs[a].values[i];
      const double y = ys[a].values[i];
      const double denom = std::max({std::abs(x), std::abs(y), floor});
      worst = std::max(worst, std::abs(x - y) / denom);
    }
  }
  return worst;
}

struct Moments {
  double mean, std, skew, kurt, min, max;
};

/// Straightforward two-pass moments of one column of values.
inline Moments brute_force_moments(const std::vector<double>& xs) {
  const auto n = static_cast<double>(xs.size());
  long double sum = 0.0L;
  for (double x : xs) sum += x;
  const double mean = static_cast<double>(sum / n);
  long double m2 = 0.0L, m3 = 0.0L, m4 = 0.0L;
  for (double x : xs) {
    const long double d = static_cast<long double>(x) - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  Moments m{};
  m.mean = mean;
  m.std = static_cast<double>(std::sqrt(m2));
  m.skew = m2 < 1e-12L ? 0.0 : static_cast<double>(m3 / std::pow(m2, 1.5L));
  m.kurt = m2 < 1e-12L ? 0.0 : static_cast<double>(m4 / (m2 * m2) - 3.0L);
  m.min = *std::min_element(xs.begin(), xs.end());
  m.max = *std::max_element(xs.begin(), xs.end());
  return m;
}

/// Probability that a random positive outscores a random negative, ties 1/2.
inline double pair_count_auc(std::span<const double> scores, std::span<const int> labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / pairs;
}

/// Two-tailed Student-t p-value by composite Simpson integration of the
/// density over [0, |t|].
inline double t_two_tailed_quadrature(double t, double df, int intervals = 200000) {
  const double norm = std::exp(std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0)) /
                      std::sqrt(df * std::numbers::pi);
  auto pdf = [&](double x) { return norm * std::pow(1.0 + x * x / df, -(df + 1.0) / 2.0); };
  const double b = std::abs(t);
  const double h = b / intervals;
  double s = pdf(0.0) + pdf(b);
  for (int i = 1; i < intervals; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * pdf(i * h);
  return 1.0 - 2.0 * (s * h / 3.0);
}

/// Scalar Adam with bias correction, written out longhand.
struct ScalarAdam {
  double lr, beta1, beta2, eps;
  double m = 0.0, v = 0.0;
  int t = 0;

  double step(double param, double grad) {
    ++t;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad * grad;
    const double m_hat = m / (1.0 - std::pow(beta1, t));
    const double v_hat = v / (1.0 - std::pow(beta2, t));
    return param - lr * m_hat / (std::sqrt(v_hat) + eps);
  }
};

}  // namespace fedpd::oracle
