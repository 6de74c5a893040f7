#include "fedpd/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "fedpd/error.hpp"

namespace fedpd::nn {

namespace {

using ArrayMap = Eigen::Map<Eigen::ArrayXd>;
using ConstArrayMap = Eigen::Map<const Eigen::ArrayXd>;

std::span<double> span_of(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> span_of(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
std::span<const double> span_of(const Matrix& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
std::span<const double> span_of(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

void check_labels(std::span<const int> labels, Eigen::Index rows) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    std::ostringstream os;
    os << labels.size() << " labels for " << rows << " rows";
    throw ShapeError(os.str());
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw DataError(DataErrorCode::kBadLabel,
                      "label " + std::to_string(labels[i]) + " at row " + std::to_string(i));
    }
  }
}

void softmax_rows(Matrix& z) {
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    const double top = row.maxCoeff();
    row = (row.array() - top).exp();
    row /= row.sum();
  }
}

// Shared by the mutating train path and the pure eval path. `stats` is
// non-null only in train mode.
Matrix run_forward(const ParameterSet& params, std::vector<BatchNormParams*> stats,
                   const Matrix& batch, Mode mode, NormSettings norm, ForwardCache* cache) {
  if (params.layers.empty()) throw ContractError("forward on an empty ParameterSet");
  if (batch.rows() < 1) throw ShapeError("empty batch");
  if (batch.cols() != static_cast<Eigen::Index>(params.input_dim())) {
    std::ostringstream os;
    os << "batch width " << batch.cols() << ", expected " << params.input_dim();
    throw ShapeError(os.str());
  }
  const Eigen::Index n = batch.rows();
  const bool uses_batchnorm =
      std::any_of(params.specs.begin(), params.specs.end(),
                  [](const LayerSpec& s) { return s.has_batchnorm; });
  if (mode == Mode::kTrain && uses_batchnorm && n < 2) {
    throw DataError(DataErrorCode::kBatchTooSmall,
                    "train-mode batch of height 1 has no batch variance");
  }

  if (cache != nullptr) {
    cache->mode = mode;
    cache->layers.assign(params.layers.size(), LayerCache{});
  }

  Matrix current = batch;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const LayerSpec& spec = params.specs[l];
    const LayerParams& layer = params.layers[l];
    LayerCache* lc = cache != nullptr ? &cache->layers[l] : nullptr;

    Matrix z(n, layer.weights.rows());
    z.noalias() = current * layer.weights.transpose();
    z.rowwise() += layer.biases.transpose();
    if (lc != nullptr) lc->input = std::move(current);

    if (spec.has_batchnorm) {
      const BatchNormParams& bn = *layer.batchnorm;
      Eigen::RowVectorXd mean;
      Eigen::RowVectorXd inv_std;
      if (mode == Mode::kTrain) {
        mean = z.colwise().mean();
        z.rowwise() -= mean;
        const Eigen::RowVectorXd var = z.array().square().colwise().mean().matrix();
        inv_std = (var.array() + norm.epsilon).rsqrt().matrix();
        BatchNormParams& running = *stats[l];
        const double unbiased = static_cast<double>(n) / static_cast<double>(n - 1);
        running.running_mean =
            (1.0 - norm.momentum) * running.running_mean + norm.momentum * mean.transpose();
        running.running_var = (1.0 - norm.momentum) * running.running_var +
                              (norm.momentum * unbiased) * var.transpose();
      } else {
        z.rowwise() -= bn.running_mean.transpose();
        inv_std = (bn.running_var.array() + norm.epsilon).rsqrt().matrix().transpose();
      }
      z.array().rowwise() *= inv_std.array();
      if (lc != nullptr) {
        lc->normalized = z;
        lc->inv_std = inv_std.transpose();
      }
      z.array().rowwise() *= bn.gamma.transpose().array();
      z.rowwise() += bn.beta.transpose();
    }

    switch (spec.activation) {
      case Activation::kRelu: z = z.cwiseMax(0.0); break;
      case Activation::kSoftmax: softmax_rows(z); break;
      case Activation::kNone: break;
    }
    if (lc != nullptr) lc->output = z;
    current = std::move(z);
  }
  return current;
}

}  // namespace

const char* to_string(ArrayKind kind) noexcept {
  switch (kind) {
    case ArrayKind::kWeights: return "weights";
    case ArrayKind::kBiases: return "biases";
    case ArrayKind::kGamma: return "gamma";
    case ArrayKind::kBeta: return "beta";
    case ArrayKind::kRunningMean: return "running_mean";
    case ArrayKind::kRunningVar: return "running_var";
  }
  return "?";
}

std::string array_name(std::size_t layer, ArrayKind kind) {
  return "layer" + std::to_string(layer) + "." + to_string(kind);
}

std::vector<LayerSpec> classifier_architecture(std::size_t input_dim,
                                               std::span<const std::size_t> hidden_widths) {
  std::vector<LayerSpec> specs;
  std::size_t in = input_dim;
  for (std::size_t width : hidden_widths) {
    specs.push_back({in, width, true, Activation::kRelu});
    in = width;
  }
  specs.push_back({in, 2, false, Activation::kSoftmax});
  validate_architecture(specs);
  return specs;
}

std::vector<LayerSpec> classifier_architecture(std::size_t input_dim) {
  return classifier_architecture(input_dim, kDefaultHiddenWidths);
}

void validate_architecture(std::span<const LayerSpec> specs) {
  if (specs.empty()) throw ConfigError("architecture has no layers");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& s = specs[i];
    if (s.input_dim == 0 || s.output_dim == 0) {
      throw ConfigError("layer " + std::to_string(i) + " has a zero dimension");
    }
    if (i + 1 < specs.size() && specs[i + 1].input_dim != s.output_dim) {
      std::ostringstream os;
      os << "layer " << i << " output_dim " << s.output_dim << " does not chain into layer "
         << i + 1 << " input_dim " << specs[i + 1].input_dim;
      throw ConfigError(os.str());
    }
    if (s.activation == Activation::kSoftmax && i + 1 != specs.size()) {
      throw ConfigError("softmax is only supported on the output layer");
    }
  }
  if (specs.back().activation != Activation::kSoftmax || specs.back().output_dim != 2) {
    throw ConfigError("output layer must be a two-class softmax");
  }
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be >= 0");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) fail("weight_decay must be >= 0");
  if (batch_size == 0) fail("batch_size must be positive");
  if (epochs == 0) fail("epochs must be positive");
  if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) fail("bn_momentum must be in (0,1)");
  if (!(bn_epsilon > 0.0)) fail("bn_epsilon must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1 must be in [0,1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2 must be in [0,1)");
  if (!(adam_epsilon > 0.0)) fail("adam_epsilon must be positive");
}

std::vector<ArrayRef> ParameterSet::arrays() {
  std::vector<ArrayRef> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    LayerParams& p = layers[l];
    out.push_back({l, ArrayKind::kWeights, span_of(p.weights)});
    out.push_back({l, ArrayKind::kBiases, span_of(p.biases)});
    if (p.batchnorm) {
      out.push_back({l, ArrayKind::kGamma, span_of(p.batchnorm->gamma)});
      out.push_back({l, ArrayKind::kBeta, span_of(p.batchnorm->beta)});
      out.push_back({l, ArrayKind::kRunningMean, span_of(p.batchnorm->running_mean)});
      out.push_back({l, ArrayKind::kRunningVar, span_of(p.batchnorm->running_var)});
    }
  }
  return out;
}

std::vector<ConstArrayRef> ParameterSet::arrays() const {
  std::vector<ConstArrayRef> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerParams& p = layers[l];
    out.push_back({l, ArrayKind::kWeights, span_of(p.weights)});
    out.push_back({l, ArrayKind::kBiases, span_of(p.biases)});
    if (p.batchnorm) {
      out.push_back({l, ArrayKind::kGamma, span_of(p.batchnorm->gamma)});
      out.push_back({l, ArrayKind::kBeta, span_of(p.batchnorm->beta)});
      out.push_back({l, ArrayKind::kRunningMean, span_of(p.batchnorm->running_mean)});
      out.push_back({l, ArrayKind::kRunningVar, span_of(p.batchnorm->running_var)});
    }
  }
  return out;
}

ParameterSet ParameterSet::zeros_like(const ParameterSet& other) {
  ParameterSet out;
  out.specs = other.specs;
  out.layers.reserve(other.layers.size());
  for (const LayerParams& l : other.layers) {
    LayerParams z;
    z.weights = Matrix::Zero(l.weights.rows(), l.weights.cols());
    z.biases = Vector::Zero(l.biases.size());
    if (l.batchnorm) {
      const auto n = l.batchnorm->gamma.size();
      z.batchnorm = BatchNormParams{Vector::Zero(n), Vector::Zero(n), Vector::Zero(n), Vector::Zero(n)};
    }
    out.layers.push_back(std::move(z));
  }
  return out;
}

bool shape_compatible(const ParameterSet& a, const ParameterSet& b) {
  if (a.specs != b.specs) return false;
  const auto xs = a.arrays();
  const auto ys = b.arrays();
  if (xs.size() != ys.size()) return false;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].kind != ys[i].kind || xs[i].values.size() != ys[i].values.size()) return false;
  }
  return true;
}

bool all_finite(const ParameterSet& params) {
  for (const auto& a : params.arrays()) {
    for (double v : a.values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

bool bit_identical(const ParameterSet& a, const ParameterSet& b) {
  if (!shape_compatible(a, b)) return false;
  const auto xs = a.arrays();
  const auto ys = b.arrays();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (std::memcmp(xs[i].values.data(), ys[i].values.data(),
                    xs[i].values.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

ParameterSet he_init(std::span<const LayerSpec> specs, Rng& rng) {
  validate_architecture(specs);
  ParameterSet params;
  params.specs.assign(specs.begin(), specs.end());
  for (const LayerSpec& s : specs) {
    LayerParams layer;
    const auto out = static_cast<Eigen::Index>(s.output_dim);
    const auto in = static_cast<Eigen::Index>(s.input_dim);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(s.input_dim)));
    layer.weights.resize(out, in);
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = dist(rng);
    layer.biases = Vector::Zero(out);
    if (s.has_batchnorm) {
      layer.batchnorm = BatchNormParams{Vector::Ones(out), Vector::Zero(out), Vector::Zero(out),
                                        Vector::Ones(out)};
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

ForwardResult forward(ParameterSet& params, const Matrix& batch, Mode mode, NormSettings norm) {
  std::vector<BatchNormParams*> stats(params.layers.size(), nullptr);
  if (mode == Mode::kTrain) {
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      if (params.layers[l].batchnorm) stats[l] = &*params.layers[l].batchnorm;
    }
  }
  ForwardResult result;
  result.probabilities = run_forward(params, std::move(stats), batch, mode, norm, &result.cache);
  return result;
}

Matrix forward_eval(const ParameterSet& params, const Matrix& batch, NormSettings norm) {
  return run_forward(params, std::vector<BatchNormParams*>(params.layers.size(), nullptr), batch,
                     Mode::kEval, norm, nullptr);
}

double cross_entropy(const Matrix& probabilities, std::span<const int> labels) {
  check_labels(labels, probabilities.rows());
  if (labels.empty()) throw ShapeError("cross_entropy of an empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = probabilities(static_cast<Eigen::Index>(i), labels[i]);
    total -= std::log(std::max(p, 1e-12));
  }
  return total / static_cast<double>(labels.size());
}

ParameterSet backward(const ParameterSet& params, const ForwardCache& cache,
                      std::span<const int> labels) {
  if (cache.mode != Mode::kTrain) throw ContractError("backward requires a train-mode cache");
  if (cache.layers.size() != params.layers.size()) {
    throw ContractError("cache was not produced by these parameters");
  }
  const Matrix& probs = cache.layers.back().output;
  check_labels(labels, probs.rows());
  const auto n = static_cast<double>(probs.rows());

  // Weight gradients are assigned below, so only the small arrays need zeros.
  ParameterSet grads;
  grads.specs = params.specs;
  for (const LayerParams& l : params.layers) {
    LayerParams g;
    g.weights.resize(l.weights.rows(), l.weights.cols());
    g.biases = Vector::Zero(l.biases.size());
    if (l.batchnorm) {
      const auto w = l.batchnorm->gamma.size();
      g.batchnorm = BatchNormParams{Vector::Zero(w), Vector::Zero(w), Vector::Zero(w), Vector::Zero(w)};
    }
    grads.layers.push_back(std::move(g));
  }

  // Gradient w.r.t. the output layer's pre-softmax logits.
  Matrix delta = probs;
  for (std::size_t i = 0; i < labels.size(); ++i) delta(static_cast<Eigen::Index>(i), labels[i]) -= 1.0;
  delta /= n;

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const LayerSpec& spec = params.specs[li];
    const LayerParams& layer = params.layers[li];
    const LayerCache& lc = cache.layers[li];
    LayerParams& g = grads.layers[li];

    if (spec.activation == Activation::kRelu) {
      delta = (lc.output.array() > 0.0).select(delta, 0.0);
    }
    if (spec.has_batchnorm) {
      const Matrix& xhat = lc.normalized;
      g.batchnorm->gamma = (delta.array() * xhat.array()).colwise().sum().transpose();
      g.batchnorm->beta = delta.colwise().sum().transpose();
      Matrix dxhat = delta;
      dxhat.array().rowwise() *= layer.batchnorm->gamma.transpose().array();
      const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
      const Eigen::RowVectorXd sum_dxhat_xhat = (dxhat.array() * xhat.array()).colwise().sum();
      delta = n * dxhat;
      delta.rowwise() -= sum_dxhat;
      delta.array() -= xhat.array().rowwise() * sum_dxhat_xhat.array();
      delta.array().rowwise() *= (lc.inv_std.transpose().array() / n);
    }
    g.weights.noalias() = delta.transpose() * lc.input;
    g.biases = delta.colwise().sum().transpose();
    if (li > 0) {
      Matrix next(delta.rows(), layer.weights.cols());
      next.noalias() = delta * layer.weights;
      delta = std::move(next);
    }
  }
  return grads;
}

void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state,
               const TrainConfig& cfg) {
  if (!shape_compatible(params, grads)) throw ShapeError("gradients do not match parameters");
  if (!state.initialized()) {
    state.first_moment = ParameterSet::zeros_like(params);
    state.second_moment = ParameterSet::zeros_like(params);
    state.step_count = 0;
  } else if (!shape_compatible(params, state.first_moment)) {
    throw ShapeError("optimizer state does not match parameters");
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);

  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double step = cfg.learning_rate / bc1;
  const double inv_bc2 = 1.0 / bc2;
  const double eps = cfg.adam_epsilon;

  auto ps = params.arrays();
  const auto gs = grads.arrays();
  auto ms = state.first_moment.arrays();
  auto vs = state.second_moment.arrays();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!is_trainable(ps[i].kind)) continue;
    const std::size_t size = ps[i].values.size();
    double* __restrict p = ps[i].values.data();
    const double* __restrict g = gs[i].values.data();
    double* __restrict m = ms[i].values.data();
    double* __restrict v = vs[i].values.data();
    const double decay = ps[i].kind == ArrayKind::kWeights ? cfg.weight_decay : 0.0;
    // One fused pass; the parameter arrays are large enough that memory
    // traffic dominates.
    for (std::size_t k = 0; k < size; ++k) {
      const double gk = g[k] + decay * p[k];
      const double mk = b1 * m[k] + (1.0 - b1) * gk;
      const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
      m[k] = mk;
      v[k] = vk;
      p[k] -= step * mk / (std::sqrt(vk * inv_bc2) + eps);
    }
  }
}

LabeledData concatenate(std::span<const LabeledData> parts) {
  LabeledData out;
  Eigen::Index rows = 0;
  Eigen::Index cols = -1;
  for (const auto& p : parts) {
    if (p.size() == 0) continue;
    if (cols >= 0 && p.features.cols() != cols) throw ShapeError("feature widths differ");
    cols = p.features.cols();
    rows += p.features.rows();
  }
  out.features.resize(rows, std::max<Eigen::Index>(cols, 0));
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    if (p.size() == 0) continue;
    out.features.middleRows(at, p.features.rows()) = p.features;
    at += p.features.rows();
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  return out;
}

std::vector<std::size_t> batch_sizes(std::size_t n, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (n < 2) {
    throw DataError(DataErrorCode::kBatchTooSmall,
                    "need at least 2 samples to form a train-mode batch, got " + std::to_string(n));
  }
  std::vector<std::size_t> sizes(n / batch_size, batch_size);
  const std::size_t rem = n % batch_size;
  if (rem == 1 && !sizes.empty()) {
    sizes.back() += 1;
  } else if (rem > 0) {
    sizes.push_back(rem);
  }
  return sizes;
}

EpochStats train_epoch(ParameterSet& params, AdamState& state, const LabeledData& data,
                       const TrainConfig& cfg, Rng& rng) {
  if (data.features.rows() != static_cast<Eigen::Index>(data.labels.size())) {
    throw ShapeError("features and labels differ in length");
  }
  const auto sizes = batch_sizes(data.size(), cfg.batch_size);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  const NormSettings norm = NormSettings::from(cfg);
  EpochStats stats;
  double loss_sum = 0.0;
  std::size_t offset = 0;
  Matrix batch;
  std::vector<int> labels;
  for (std::size_t size : sizes) {
    batch.resize(static_cast<Eigen::Index>(size), data.features.cols());
    labels.resize(size);
    for (std::size_t i = 0; i < size; ++i) {
      const auto src = static_cast<Eigen::Index>(order[offset + i]);
      batch.row(static_cast<Eigen::Index>(i)) = data.features.row(src);
      labels[i] = data.labels[order[offset + i]];
    }
    offset += size;

    ForwardResult fr = forward(params, batch, Mode::kTrain, norm);
    loss_sum += cross_entropy(fr.probabilities, labels) * static_cast<double>(size);
    const ParameterSet grads = backward(params, fr.cache, labels);
    adam_step(params, grads, state, cfg);
    ++stats.batches;
  }
  if (!all_finite(params)) throw TrainingError("non-finite parameters after training epoch");
  stats.mean_loss = loss_sum / static_cast<double>(data.size());
  return stats;
}

Vector predict(const ParameterSet& params, const Matrix& features, NormSettings norm) {
  return forward_eval(params, features, norm).col(1);
}

FitResult fit(std::span<const LayerSpec> specs, const LabeledData& data, const TrainConfig& cfg,
              Rng& init_rng, Rng& shuffle_rng, bool persist_optimizer_state) {
  cfg.validate();
  FitResult result;
  result.params = he_init(specs, init_rng);
  AdamState state;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    if (!persist_optimizer_state) state = AdamState{};
    result.epoch_losses.push_back(train_epoch(result.params, state, data, cfg, shuffle_rng).mean_loss);
  }
  return result;
}

}  // namespace fedpd::nn
