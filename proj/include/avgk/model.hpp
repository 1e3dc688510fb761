#ifndef AVGK_MODEL_HPP_
#define AVGK_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "avgk/matrix.hpp"

namespace avgk {

enum class Activation : std::uint32_t { kTanh = 0, kIdentity = 1 };

/// Fully-connected layer y = x W + b with W stored as (in x out).
struct DenseLayer {
  Matrix weight;
  std::vector<double> bias;

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out) : weight(in, out), bias(out, 0.0) {}
  std::size_t in() const { return weight.rows(); }
  std::size_t out() const { return weight.cols(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Ordered layer list: trunk layers, then the ML head, then the proposal head.
/// Used both for parameters and for gradients / optimizer state.
struct ParameterSet {
  std::vector<DenseLayer> layers;

  /// Flat views in declaration order: W0, b0, W1, b1, ...
  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;
  std::size_t count() const;
  ParameterSet zeros_like() const;

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;
};

struct ModelShape {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t num_classes = 10;
  Activation activation = Activation::kTanh;

  /// Latent dimension d of the shared features (input_dim when there is no hidden layer).
  std::size_t feature_dim() const { return hidden.empty() ? input_dim : hidden.back(); }

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

/// Shared trunk producing features H, with two linear heads on H: the ML head
/// (Z = H W + b) and the proposal head (Z' = H W' + b').
class TwoHeadMlp {
 public:
  TwoHeadMlp() = default;
  /// Fan-in scaled uniform weights, zero biases. Both heads draw independently.
  static TwoHeadMlp initialize(const ModelShape& shape, std::uint64_t seed);
  static TwoHeadMlp zeros(const ModelShape& shape);

  const ModelShape& shape() const { return shape_; }
  std::size_t trunk_depth() const { return shape_.hidden.size(); }

  DenseLayer& trunk(std::size_t l) { return params_.layers[l]; }
  const DenseLayer& trunk(std::size_t l) const { return params_.layers[l]; }
  DenseLayer& head_ml() { return params_.layers[trunk_depth()]; }
  const DenseLayer& head_ml() const { return params_.layers[trunk_depth()]; }
  DenseLayer& head_sccp() { return params_.layers[trunk_depth() + 1]; }
  const DenseLayer& head_sccp() const { return params_.layers[trunk_depth() + 1]; }

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  std::size_t parameter_count() const { return params_.count(); }

  friend bool operator==(const TwoHeadMlp&, const TwoHeadMlp&) = default;

 private:
  explicit TwoHeadMlp(ModelShape shape);

  ModelShape shape_;
  ParameterSet params_;
};

/// Activations kept for the backward pass.
struct ForwardCache {
  std::vector<Matrix> trunk_inputs;  // input of every trunk layer
  Matrix features;                   // H
  Matrix z_ml;
  Matrix z_sccp;
};

/// Throws ShapeError when inputs.cols() differs from the model's input dimension.
ForwardCache forward(const TwoHeadMlp& model, const Matrix& inputs);

/// Parameter gradient for upstream logit gradients of both heads. An empty
/// matrix means the head receives no signal. The trunk receives the sum of both
/// heads' backpropagated gradients.
ParameterSet backward(const TwoHeadMlp& model, const ForwardCache& cache, const Matrix& grad_ml,
                      const Matrix& grad_sccp);

struct SgdConfig {
  double momentum = 0.9;
  double weight_decay = 1e-4;
  bool nesterov = true;
};

/// SGD with (Nesterov) momentum and L2 weight decay added to the gradient:
///   g = grad + wd * p;  v = mu * v + g;  p -= lr * (g + mu * v)   (Nesterov)
///                                        p -= lr * v              (classic)
class SgdOptimizer {
 public:
  SgdOptimizer(const TwoHeadMlp& model, SgdConfig cfg);

  /// Throws TrainingAborted if any gradient entry is non-finite; parameters are
  /// left untouched in that case.
  void step(TwoHeadMlp& model, const ParameterSet& grad, double learning_rate);

  const ParameterSet& velocity() const { return velocity_; }

 private:
  SgdConfig cfg_;
  ParameterSet velocity_;
};

/// Backward pass followed by one optimizer step.
void backward_and_step(TwoHeadMlp& model, const ForwardCache& cache, const Matrix& grad_ml,
                       const Matrix& grad_sccp, SgdOptimizer& optimizer, double learning_rate);

/// Row-softmax of the ML-head logits, evaluated ceil(n / batch_size) batches at a
/// time and concatenated in row order.
Matrix predict_probabilities(const TwoHeadMlp& model, const Matrix& inputs,
                             std::size_t batch_size);

/// Snapshot written by training; serialized as a versioned little-endian binary.
struct Checkpoint {
  TwoHeadMlp model;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  double best_val_accuracy = 0.0;
  double lambda_val = 0.0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace avgk

#endif  // AVGK_MODEL_HPP_
