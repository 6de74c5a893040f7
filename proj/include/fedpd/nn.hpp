#pragma once

// Fully-connected classifier built directly on Eigen: forward pass,
// backpropagation, batch normalization and Adam. All math is binary64.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fedpd/random.hpp"

namespace fedpd::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Activation { kRelu, kSoftmax, kNone };

struct LayerSpec {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  bool has_batchnorm = false;
  Activation activation = Activation::kNone;

  bool operator==(const LayerSpec&) const = default;
};

/// Linear -> BatchNorm -> ReLU for every hidden width, then Linear -> softmax
/// over two classes. Defaults give 4608 -> 1024 -> 256 -> 64 -> 2.
std::vector<LayerSpec> classifier_architecture(
    std::size_t input_dim, std::span<const std::size_t> hidden_widths);
std::vector<LayerSpec> classifier_architecture(std::size_t input_dim = 4608);

inline constexpr std::size_t kDefaultHiddenWidths[] = {1024, 256, 64};

/// Throws ConfigError unless dims chain, softmax appears only on the final
/// layer, and the final layer emits two classes.
void validate_architecture(std::span<const LayerSpec> specs);

struct BatchNormParams {
  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;
};

struct LayerParams {
  Matrix weights;  // output_dim x input_dim
  Vector biases;
  std::optional<BatchNormParams> batchnorm;
};

enum class ArrayKind { kWeights, kBiases, kGamma, kBeta, kRunningMean, kRunningVar };

constexpr bool is_trainable(ArrayKind kind) noexcept {
  return kind != ArrayKind::kRunningMean && kind != ArrayKind::kRunningVar;
}

const char* to_string(ArrayKind kind) noexcept;

struct ArrayRef {
  std::size_t layer;
  ArrayKind kind;
  std::span<double> values;
};

struct ConstArrayRef {
  std::size_t layer;
  ArrayKind kind;
  std::span<const double> values;
};

/// Every array of the classifier, trainable and normalization statistics
/// alike, in a fixed order: per layer weights, biases, gamma, beta,
/// running_mean, running_var.
struct ParameterSet {
  std::vector<LayerSpec> specs;
  std::vector<LayerParams> layers;

  std::vector<ArrayRef> arrays();
  std::vector<ConstArrayRef> arrays() const;

  /// Same layout, all arrays zero (running_var included).
  static ParameterSet zeros_like(const ParameterSet& other);

  std::size_t input_dim() const { return specs.empty() ? 0 : specs.front().input_dim; }
};

bool shape_compatible(const ParameterSet& a, const ParameterSet& b);
bool all_finite(const ParameterSet& params);
/// Bitwise equality of every array, so -0.0 != 0.0 and NaN payloads matter.
bool bit_identical(const ParameterSet& a, const ParameterSet& b);
std::string array_name(std::size_t layer, ArrayKind kind);

struct AdamState {
  ParameterSet first_moment;
  ParameterSet second_moment;
  std::uint64_t step_count = 0;

  bool initialized() const { return !first_moment.layers.empty(); }
};

/// Optimizer and normalization settings. Batchnorm momentum/epsilon and the
/// Adam betas/epsilon are conventional values.
struct TrainConfig {
  double learning_rate = 8e-5;
  double weight_decay = 5e-6;
  std::size_t batch_size = 16;
  std::size_t epochs = 50;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct NormSettings {
  double momentum = 0.1;
  double epsilon = 1e-5;

  static NormSettings from(const TrainConfig& cfg) { return {cfg.bn_momentum, cfg.bn_epsilon}; }
};

ParameterSet he_init(std::span<const LayerSpec> specs, Rng& rng);

enum class Mode { kTrain, kEval };

struct LayerCache {
  Matrix input;       // layer input (batch x input_dim)
  Matrix normalized;  // batchnorm x-hat, empty without batchnorm
  Vector inv_std;     // 1/sqrt(var + eps) per feature, train mode only
  Matrix output;      // post-activation
};

struct ForwardCache {
  Mode mode = Mode::kEval;
  std::vector<LayerCache> layers;
};

struct ForwardResult {
  Matrix probabilities;
  ForwardCache cache;
};

/// Train mode normalizes with batch statistics and folds them into the
/// running statistics; eval mode uses running statistics and leaves params
/// untouched.
ForwardResult forward(ParameterSet& params, const Matrix& batch, Mode mode,
                      NormSettings norm = {});

/// Eval-mode forward without a cache. Pure.
Matrix forward_eval(const ParameterSet& params, const Matrix& batch, NormSettings norm = {});

/// Mean of -log(max(p[label], 1e-12)) over rows.
double cross_entropy(const Matrix& probabilities, std::span<const int> labels);

/// Gradients of the mean cross-entropy. Running statistics come back zero.
ParameterSet backward(const ParameterSet& params, const ForwardCache& cache,
                      std::span<const int> labels);

/// Bias-corrected Adam. weight_decay * w is added to the gradient of weight
/// matrices only.
void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state,
               const TrainConfig& cfg);

struct LabeledData {
  Matrix features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

LabeledData concatenate(std::span<const LabeledData> parts);

/// Batch heights for one epoch over n rows. A trailing remainder of one row
/// is folded into the previous batch.
std::vector<std::size_t> batch_sizes(std::size_t n, std::size_t batch_size);

struct EpochStats {
  double mean_loss = 0.0;
  std::size_t batches = 0;
};

EpochStats train_epoch(ParameterSet& params, AdamState& state, const LabeledData& data,
                       const TrainConfig& cfg, Rng& rng);

/// Positive-class (label 1) probability per row.
Vector predict(const ParameterSet& params, const Matrix& features, NormSettings norm = {});

struct FitResult {
  ParameterSet params;
  std::vector<double> epoch_losses;
};

/// Plain single-dataset training: he_init from init_rng, then cfg.epochs
/// epochs shuffled by shuffle_rng. Without persist_optimizer_state the Adam
/// state is reset at every epoch boundary.
FitResult fit(std::span<const LayerSpec> specs, const LabeledData& data, const TrainConfig& cfg,
              Rng& init_rng, Rng& shuffle_rng, bool persist_optimizer_state);

}  // namespace fedpd::nn
