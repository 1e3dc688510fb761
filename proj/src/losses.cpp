#include "avgk/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "avgk/error.hpp"

namespace avgk {

namespace {

void check_batch(const LogitMatrix& z, std::span<const Label> y) {
  validate_logits(z);
  validate_labels(y, z.rows(), z.cols());
}

// d/dt of -log(sigmoid(t)) is sigmoid(t) - 1; of -log(1 - sigmoid(t)) it is sigmoid(t).
double positive_grad(double t) { return sigmoid(t) - 1.0; }
double negative_grad(double t) { return sigmoid(t); }

}  // namespace

LossOutput ce_loss(const LogitMatrix& z, std::span<const Label> y) {
  check_batch(z, y);
  const double inv_b = 1.0 / static_cast<double>(z.rows());
  LossOutput out{0.0, softmax_rows(z)};
  double total = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto row = z.row(i);
    const std::size_t top = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    const double shift = row[top];
    double rest = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j != top) rest += std::exp(row[j] - shift);
    }
    total += std::log1p(rest) + (shift - row[y[i]]);

    auto g = out.grad.row(i);
    g[y[i]] -= 1.0;
    for (double& v : g) v *= inv_b;
  }
  out.value = total * inv_b;
  return out;
}

LossOutput an_loss(const LogitMatrix& z, std::span<const Label> y) {
  check_batch(z, y);
  const double inv_b = 1.0 / static_cast<double>(z.rows());
  const double neg_w = 1.0 / static_cast<double>(z.cols() - 1);
  LossOutput out{0.0, Matrix(z.rows(), z.cols())};
  double total = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    for (std::size_t j = 0; j < z.cols(); ++j) {
      const double t = z(i, j);
      if (j == y[i]) {
        total -= log_sigmoid(t);
        out.grad(i, j) = positive_grad(t) * inv_b;
      } else {
        total -= neg_w * log_sigmoid(-t);
        out.grad(i, j) = neg_w * negative_grad(t) * inv_b;
      }
    }
  }
  out.value = total * inv_b;
  return out;
}

LossOutput bce_pos_loss(const LogitMatrix& z, std::span<const Label> y) {
  check_batch(z, y);
  const double inv_b = 1.0 / static_cast<double>(z.rows());
  LossOutput out{0.0, Matrix(z.rows(), z.cols())};
  double total = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const double t = z(i, y[i]);
    total -= log_sigmoid(t);
    out.grad(i, y[i]) = positive_grad(t) * inv_b;
  }
  out.value = total * inv_b;
  return out;
}

double expected_positives(const LogitMatrix& z) {
  validate_logits(z);
  double total = 0.0;
  for (double v : z.values()) total += sigmoid(v);
  return total / static_cast<double>(z.rows());
}

LossOutput epr_loss(const LogitMatrix& z, std::span<const Label> y, const EprConfig& cfg) {
  if (!(cfg.beta >= 0.0)) throw InvalidConfig("EPR beta must be >= 0");
  if (cfg.k_target < 1 || cfg.k_target >= z.cols()) {
    throw InvalidConfig("EPR k_target must lie in [1, L-1]");
  }
  LossOutput out = bce_pos_loss(z, y);
  const double gap = expected_positives(z) - static_cast<double>(cfg.k_target);
  out.value += cfg.beta * gap * gap;
  if (cfg.beta == 0.0) return out;

  const double coupling = 2.0 * cfg.beta * gap / static_cast<double>(z.rows());
  auto g = out.grad.values();
  const auto zv = z.values();
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double s = sigmoid(zv[k]);
    g[k] += coupling * s * (1.0 - s);
  }
  return out;
}

namespace {

struct GroupWeights {
  double positive;
  double candidate;
  double negative;
};

LossOutput weighted_multilabel(const LogitMatrix& z, std::span<const Label> y,
                               const CandidateSetBatch& sc, const GroupWeights& w) {
  LossOutput out{0.0, Matrix(z.rows(), z.cols())};
  double pos = 0.0;
  double cand = 0.0;
  double neg = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    for (std::size_t j = 0; j < z.cols(); ++j) {
      const double t = z(i, j);
      if (j == y[i]) {
        pos -= log_sigmoid(t);
        out.grad(i, j) = w.positive * positive_grad(t);
      } else if (sc.is_candidate(i, j)) {
        cand -= log_sigmoid(t);
        out.grad(i, j) = w.candidate * positive_grad(t);
      } else {
        neg -= log_sigmoid(-t);
        out.grad(i, j) = w.negative * negative_grad(t);
      }
    }
  }
  out.value = w.positive * pos + w.candidate * cand + w.negative * neg;
  return out;
}

void check_candidates(const LogitMatrix& z, std::span<const Label> y,
                      const CandidateSetBatch& sc) {
  check_batch(z, y);
  if (sc.batch_size() != z.rows() || sc.num_classes() != z.cols()) {
    throw ShapeError("candidate sets do not match the logit matrix shape");
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (sc.labels()[i] != y[i]) {
      throw InconsistentPseudoLabels("candidate sets were built for different labels (row " +
                                     std::to_string(i) + ")");
    }
  }
}

}  // namespace

LossOutput bce_multilabel_loss(const LogitMatrix& z, std::span<const Label> y,
                               const CandidateSetBatch& sc, const AvgKConfig& cfg) {
  if (!(cfg.alpha >= 0.0)) throw InvalidConfig("alpha must be >= 0");
  if (cfg.k_target < 1 || cfg.k_target >= z.cols()) {
    throw InvalidConfig("k_target=" + std::to_string(cfg.k_target) + " must lie in [1, L-1]");
  }
  check_candidates(z, y, sc);
  const std::size_t b = z.rows();
  const std::size_t expected = (cfg.k_target - 1) * b;
  if (sc.total_candidates() != expected) {
    throw InconsistentPseudoLabels("candidate sets hold " + std::to_string(sc.total_candidates()) +
                                   " entries, expected (K-1)|B| = " + std::to_string(expected));
  }
  const double bd = static_cast<double>(b);
  GroupWeights w{1.0 / bd, 0.0,
                 cfg.alpha / (static_cast<double>(z.cols() - cfg.k_target) * bd)};
  if (cfg.k_target > 1) w.candidate = cfg.alpha / (static_cast<double>(cfg.k_target - 1) * bd);
  return weighted_multilabel(z, y, sc, w);
}

LossOutput bce_realized_count_loss(const LogitMatrix& z, std::span<const Label> y,
                                   const CandidateSetBatch& sc, double alpha) {
  if (!(alpha >= 0.0)) throw InvalidConfig("alpha must be >= 0");
  check_candidates(z, y, sc);
  const std::size_t b = z.rows();
  const std::size_t n_cand = sc.total_candidates();
  const std::size_t n_neg = b * z.cols() - b - n_cand;
  GroupWeights w{1.0 / static_cast<double>(b), 0.0, 0.0};
  if (n_cand > 0) w.candidate = alpha / static_cast<double>(n_cand);
  if (n_neg > 0) w.negative = alpha / static_cast<double>(n_neg);
  return weighted_multilabel(z, y, sc, w);
}

AvgKLossOutput avgk_loss(const LogitMatrix& z_ml, const LogitMatrix& z_sccp,
                         std::span<const Label> y, const AvgKConfig& cfg) {
  if (!z_ml.same_shape(z_sccp)) throw ShapeError("the two heads' logits differ in shape");
  CandidateSetBatch sc = propose_candidates(z_sccp, y, cfg.k_target);
  LossOutput ce = ce_loss(z_sccp, y);
  LossOutput bce = bce_multilabel_loss(z_ml, y, sc, cfg);
  return AvgKLossOutput{ce.value + bce.value, ce.value,        bce.value,
                        std::move(bce.grad),   std::move(ce.grad), std::move(sc)};
}

}  // namespace avgk
