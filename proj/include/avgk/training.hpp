#ifndef AVGK_TRAINING_HPP_
#define AVGK_TRAINING_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "avgk/calibration.hpp"
#include "avgk/data.hpp"
#include "avgk/model.hpp"
#include "json.hpp"

namespace avgk {

enum class LossKind { kCe, kAn, kEpr, kAvgK, kBcePos };

const char* to_string(LossKind kind);
std::optional<LossKind> parse_loss_kind(std::string_view name);
/// "ce|an|epr|avgk|bce_pos"
const char* loss_kind_names();

/// Learning rate is divided by `divisor` from `epoch` (0-based) onward.
struct LrStep {
  std::size_t epoch = 0;
  double divisor = 10.0;

  friend bool operator==(const LrStep&, const LrStep&) = default;
};

struct TrainConfig {
  LossKind loss = LossKind::kAvgK;
  std::size_t k_target = 5;
  double alpha = 0.3;
  double beta = 0.01;
  std::size_t batch_size = 64;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<LrStep> lr_schedule;
  std::size_t max_epochs = 30;
  /// Epochs without validation improvement before stopping; 0 disables the cutoff.
  std::size_t early_stop_patience = 0;
  std::uint64_t rng_seed = 0;
  /// Rows per forward pass when computing validation probabilities.
  std::size_t eval_batch_size = 1024;

  /// Throws InvalidConfig for out-of-range values given the class count.
  void validate(std::size_t num_classes) const;
};

/// base / prod(divisor for every step with step.epoch <= epoch).
double learning_rate_at(const TrainConfig& cfg, std::size_t epoch);

/// Loss value and head gradients for one batch under `cfg.loss`. Single-head
/// losses act on the ML head; grad_sccp is then empty.
struct BatchLoss {
  double value = 0.0;
  Matrix grad_ml;
  Matrix grad_sccp;
};

BatchLoss compute_batch_loss(const ForwardCache& cache, std::span<const Label> y,
                             const TrainConfig& cfg);

struct ValidationResult {
  double lambda_val = 0.0;
  double accuracy = 0.0;
};

/// Calibrates lambda on the split's ML-head softmax and scores the same split.
ValidationResult validate_model(const TwoHeadMlp& model, const Split& split,
                                std::size_t k_target, std::size_t batch_size);

struct EpochLog {
  std::size_t epoch = 0;               // 0 = before any update
  std::optional<double> train_loss;    // absent for epoch 0
  double val_avg_k_accuracy = 0.0;
  double lambda_val = 0.0;
  double learning_rate = 0.0;
  bool improved = false;
};

nlohmann::json to_json(const EpochLog& e);

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> log;
};

/// Seeded SGD training with per-epoch validation; keeps the checkpoint with the
/// best validation average-K accuracy. Deterministic for a given seed.
TrainResult train(TwoHeadMlp model, const DatasetSplit& data, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace avgk

#endif  // AVGK_TRAINING_HPP_
