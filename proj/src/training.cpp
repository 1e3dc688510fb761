#include "avgk/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "avgk/error.hpp"
#include "avgk/losses.hpp"

namespace avgk {

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kCe:
      return "ce";
    case LossKind::kAn:
      return "an";
    case LossKind::kEpr:
      return "epr";
    case LossKind::kAvgK:
      return "avgk";
    case LossKind::kBcePos:
      return "bce_pos";
  }
  return "unknown";
}

std::optional<LossKind> parse_loss_kind(std::string_view name) {
  for (LossKind k : {LossKind::kCe, LossKind::kAn, LossKind::kEpr, LossKind::kAvgK,
                     LossKind::kBcePos}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

const char* loss_kind_names() { return "ce|an|epr|avgk|bce_pos"; }

void TrainConfig::validate(std::size_t num_classes) const {
  if (batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidConfig("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidConfig("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw InvalidConfig("weight_decay must be >= 0");
  if (k_target < 1 || k_target >= num_classes) {
    throw InvalidConfig("k must lie in [1, " + std::to_string(num_classes - 1) + "]");
  }
  if (!(alpha >= 0.0)) throw InvalidConfig("alpha must be >= 0");
  if (!(beta >= 0.0)) throw InvalidConfig("beta must be >= 0");
  if (eval_batch_size < 1) throw InvalidConfig("eval_batch_size must be >= 1");
  for (const auto& s : lr_schedule) {
    if (!(s.divisor > 0.0)) throw InvalidConfig("lr schedule divisors must be > 0");
  }
}

double learning_rate_at(const TrainConfig& cfg, std::size_t epoch) {
  double lr = cfg.learning_rate;
  for (const auto& s : cfg.lr_schedule) {
    if (s.epoch <= epoch) lr /= s.divisor;
  }
  return lr;
}

BatchLoss compute_batch_loss(const ForwardCache& cache, std::span<const Label> y,
                             const TrainConfig& cfg) {
  const auto single = [](LossOutput o) { return BatchLoss{o.value, std::move(o.grad), Matrix()}; };
  switch (cfg.loss) {
    case LossKind::kCe:
      return single(ce_loss(cache.z_ml, y));
    case LossKind::kAn:
      return single(an_loss(cache.z_ml, y));
    case LossKind::kBcePos:
      return single(bce_pos_loss(cache.z_ml, y));
    case LossKind::kEpr:
      return single(epr_loss(cache.z_ml, y, EprConfig{cfg.beta, cfg.k_target}));
    case LossKind::kAvgK: {
      AvgKLossOutput o = avgk_loss(cache.z_ml, cache.z_sccp, y, AvgKConfig{cfg.alpha, cfg.k_target});
      return BatchLoss{o.value, std::move(o.grad_ml), std::move(o.grad_sccp)};
    }
  }
  throw InvalidConfig("unknown loss kind");
}

ValidationResult validate_model(const TwoHeadMlp& model, const Split& split,
                                std::size_t k_target, std::size_t batch_size) {
  const ProbMatrix probs = predict_probabilities(model, split.features, batch_size);
  const Threshold thr = calibrate(probs, k_target);
  return ValidationResult{thr.lambda(), avg_k_accuracy(probs, split.labels, thr)};
}

nlohmann::json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"train_loss", e.train_loss ? nlohmann::json(*e.train_loss) : nlohmann::json(nullptr)},
          {"val_avg_k_accuracy", e.val_avg_k_accuracy},
          {"lambda_val", e.lambda_val},
          {"lr", e.learning_rate},
          {"improved", e.improved}};
}

TrainResult train(TwoHeadMlp model, const DatasetSplit& data, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  const std::size_t n_train = data.train.labels.size();
  if (n_train == 0 || data.val.labels.empty()) {
    throw InvalidData("training and validation splits must be non-empty");
  }
  if (model.shape().num_classes != data.num_classes) {
    throw ShapeError("model has " + std::to_string(model.shape().num_classes) +
                     " outputs, dataset has " + std::to_string(data.num_classes) + " classes");
  }
  if (model.shape().input_dim != data.feature_dim()) {
    throw ShapeError("model expects " + std::to_string(model.shape().input_dim) +
                     " features, dataset has " + std::to_string(data.feature_dim()));
  }
  cfg.validate(data.num_classes);

  TrainResult result;
  auto record = [&](EpochLog entry) {
    if (on_epoch) on_epoch(entry);
    result.log.push_back(std::move(entry));
  };

  const ValidationResult initial = validate_model(model, data.val, cfg.k_target, cfg.eval_batch_size);
  result.best = Checkpoint{model, cfg.rng_seed, 0, initial.accuracy, initial.lambda_val};
  record(EpochLog{0, std::nullopt, initial.accuracy, initial.lambda_val,
                  learning_rate_at(cfg, 0), true});

  SgdOptimizer optimizer(model, SgdConfig{cfg.momentum, cfg.weight_decay, true});
  std::seed_seq seq{cfg.rng_seed, std::uint64_t{0x5eed}};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t dim = data.feature_dim();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double lr = learning_rate_at(cfg, epoch - 1);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
      const std::size_t stop = std::min(n_train, start + cfg.batch_size);
      Matrix x(stop - start, dim);
      LabelVector y(stop - start);
      for (std::size_t r = start; r < stop; ++r) {
        const auto src = data.train.features.row(order[r]);
        std::copy(src.begin(), src.end(), x.row(r - start).begin());
        y[r - start] = data.train.labels[order[r]];
      }
      const ForwardCache cache = forward(model, x);
      const auto finite = [](const Matrix& m) {
        return std::all_of(m.values().begin(), m.values().end(), [](double v) { return std::isfinite(v); });
      };
      if (!finite(cache.z_ml) || !finite(cache.z_sccp)) {
        throw TrainingAborted("non-finite logits at epoch " + std::to_string(epoch) +
                              "; lower the learning rate");
      }
      const BatchLoss loss = compute_batch_loss(cache, y, cfg);
      if (!std::isfinite(loss.value)) {
        throw TrainingAborted("non-finite loss at epoch " + std::to_string(epoch));
      }
      loss_sum += loss.value * static_cast<double>(stop - start);
      backward_and_step(model, cache, loss.grad_ml, loss.grad_sccp, optimizer, lr);
    }

    const ValidationResult v = validate_model(model, data.val, cfg.k_target, cfg.eval_batch_size);
    const bool improved = v.accuracy > result.best.best_val_accuracy;
    if (improved) {
      result.best = Checkpoint{model, cfg.rng_seed, epoch, v.accuracy, v.lambda_val};
      since_best = 0;
    } else {
      ++since_best;
    }
    record(EpochLog{epoch, loss_sum / static_cast<double>(n_train), v.accuracy, v.lambda_val, lr,
                    improved});
    if (cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience) break;
  }
  return result;
}

}  // namespace avgk
