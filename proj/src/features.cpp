#include "fedpd/features.hpp"

#include <cmath>

#include "fedpd/error.hpp"

namespace fedpd::features {

std::vector<double> pool_statistics(const EmbeddingSequence& seq) {
  const Eigen::Index t = seq.frames.rows();
  const Eigen::Index d = seq.frames.cols();
  if (t < 1) {
    throw DataError(DataErrorCode::kEmptySequence, "recording '" + seq.recording_id + "'");
  }
  if (!seq.frames.allFinite()) {
    throw DataError(DataErrorCode::kNonFinite, "recording '" + seq.recording_id + "'");
  }

  std::vector<double> out(kStatisticCount * static_cast<std::size_t>(d));
  auto block = [&](Statistic s, Eigen::Index dim) -> double& {
    return out[static_cast<std::size_t>(s) * static_cast<std::size_t>(d) +
               static_cast<std::size_t>(dim)];
  };

  const double inv_t = 1.0 / static_cast<double>(t);
  const Eigen::RowVectorXd lo = seq.frames.colwise().minCoeff();
  const Eigen::RowVectorXd hi = seq.frames.colwise().maxCoeff();
  Eigen::RowVectorXd mean = seq.frames.colwise().sum() / static_cast<double>(t);
  // A constant column has an exact mean; summation rounding must not leak
  // into the higher moments.
  for (Eigen::Index j = 0; j < d; ++j) {
    if (lo(j) == hi(j)) mean(j) = lo(j);
  }
  nn::Matrix centered = seq.frames.rowwise() - mean;
  const Eigen::ArrayXXd sq = centered.array().square();
  const Eigen::RowVectorXd m2 = sq.colwise().sum().matrix() * inv_t;
  const Eigen::RowVectorXd m3 = (sq * centered.array()).colwise().sum().matrix() * inv_t;
  const Eigen::RowVectorXd m4 = sq.square().colwise().sum().matrix() * inv_t;

  for (Eigen::Index j = 0; j < d; ++j) {
    block(Statistic::kMean, j) = mean(j);
    block(Statistic::kStd, j) = std::sqrt(m2(j));
    if (m2(j) < kZeroVarianceThreshold) {
      block(Statistic::kSkewness, j) = 0.0;
      block(Statistic::kKurtosis, j) = 0.0;
    } else {
      block(Statistic::kSkewness, j) = m3(j) / std::pow(m2(j), 1.5);
      block(Statistic::kKurtosis, j) = m4(j) / (m2(j) * m2(j)) - 3.0;
    }
    block(Statistic::kMin, j) = lo(j);
    block(Statistic::kMax, j) = hi(j);
  }
  return out;
}

FeatureSet pool_corpus(std::span<const Recording> recordings) {
  FeatureSet out;
  out.reserve(recordings.size());
  for (const Recording& r : recordings) {
    if (r.label != 0 && r.label != 1) {
      throw DataError(DataErrorCode::kBadLabel, "recording '" + r.sequence.recording_id +
                                                    "' has label " + std::to_string(r.label));
    }
    out.push_back({pool_statistics(r.sequence), r.label, r.subject_id, r.site_id});
  }
  return out;
}

nn::LabeledData to_labeled(std::span<const FeatureVector> samples) {
  nn::LabeledData data;
  if (samples.empty()) return data;
  const std::size_t width = samples.front().values.size();
  data.features.resize(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(width));
  data.labels.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].values.size() != width) {
      throw ShapeError("feature vector " + std::to_string(i) + " has width " +
                       std::to_string(samples[i].values.size()) + ", expected " +
                       std::to_string(width));
    }
    data.features.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(samples[i].values.data(), static_cast<Eigen::Index>(width));
    data.labels.push_back(samples[i].label);
  }
  return data;
}

}  // namespace fedpd::features
