#pragma once

// Statistics pooling: a T x D embedding sequence becomes one 6*D vector laid
// out statistic-major as [mean | std | skewness | kurtosis | min | max].
//
// Moments are population (divide by T). Skewness is m3 / m2^1.5 and kurtosis
// is the excess form m4 / m2^2 - 3. When m2 < 1e-12 both are reported as 0.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedpd/nn.hpp"

namespace fedpd::features {

inline constexpr std::size_t kStatisticCount = 6;
inline constexpr std::size_t kDefaultEmbeddingDim = 768;
inline constexpr double kZeroVarianceThreshold = 1e-12;

enum class Statistic { kMean = 0, kStd, kSkewness, kKurtosis, kMin, kMax };

struct EmbeddingSequence {
  nn::Matrix frames;  // T x D
  std::string recording_id;

  std::size_t length() const { return static_cast<std::size_t>(frames.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(frames.cols()); }
};

/// One recording with its subject metadata. label: 0 = HC, 1 = PD.
struct Recording {
  EmbeddingSequence sequence;
  int label = 0;
  std::string subject_id;
  std::string site_id;
};

struct FeatureVector {
  std::vector<double> values;
  int label = 0;
  std::string subject_id;
  std::string site_id;
};

using FeatureSet = std::vector<FeatureVector>;

/// Throws DataError on an empty sequence or a non-finite frame entry.
std::vector<double> pool_statistics(const EmbeddingSequence& seq);

/// Order-preserving pool_statistics over a corpus. Errors carry the
/// recording id.
FeatureSet pool_corpus(std::span<const Recording> recordings);

/// Stacks feature vectors into a training matrix.
nn::LabeledData to_labeled(std::span<const FeatureVector> samples);

}  // namespace fedpd::features
