#ifndef AVGK_LOSSES_HPP_
#define AVGK_LOSSES_HPP_

#include <cstddef>
#include <span>

#include "avgk/math_core.hpp"
#include "avgk/sccp.hpp"

namespace avgk {

/// Batch-mean loss value and its gradient with respect to the input logits.
struct LossOutput {
  double value = 0.0;
  Matrix grad;
};

struct EprConfig {
  double beta = 0.01;
  std::size_t k_target = 5;
};

struct AvgKConfig {
  double alpha = 0.3;
  std::size_t k_target = 5;
};

/// Joint two-head loss: value, one gradient per head, and the candidate sets
/// the proposal head produced for this batch.
struct AvgKLossOutput {
  double value = 0.0;
  double ce_value = 0.0;
  double bce_value = 0.0;
  Matrix grad_ml;
  Matrix grad_sccp;
  CandidateSetBatch candidates;
};

/// Softmax cross-entropy, averaged over the batch.
LossOutput ce_loss(const LogitMatrix& z, std::span<const Label> y);

/// Single-positive binary cross-entropy ("assume negative"): every unobserved
/// class is a negative, with negatives weighted 1/(L-1).
LossOutput an_loss(const LogitMatrix& z, std::span<const Label> y);

/// Positive-only binary cross-entropy on the observed label.
LossOutput bce_pos_loss(const LogitMatrix& z, std::span<const Label> y);

/// Batch-mean of the row sums of sigmoid(z): the expected number of positives.
double expected_positives(const LogitMatrix& z);

/// Positive-only BCE plus beta * (expected_positives(z) - K)^2.
LossOutput epr_loss(const LogitMatrix& z, std::span<const Label> y, const EprConfig& cfg);

/// Multi-label BCE on the pseudo-labelled sets with fixed normalizers:
///   positives       weight 1/|B|
///   candidates      weight alpha/((K-1)|B|)   (term is 0 when K = 1)
///   outside S(x_i)  weight alpha/((L-K)|B|)
/// Requires sum_i |S_c(x_i)| = (K-1)|B|. Candidate sets are constants; no
/// gradient flows through their selection.
LossOutput bce_multilabel_loss(const LogitMatrix& z, std::span<const Label> y,
                               const CandidateSetBatch& sc, const AvgKConfig& cfg);

/// Variant of the multi-label BCE for candidate sets of arbitrary size: the
/// candidate and negative terms are normalized by their realized entry counts
/// instead of (K-1)|B| and (L-K)|B|. An empty group contributes 0.
LossOutput bce_realized_count_loss(const LogitMatrix& z, std::span<const Label> y,
                                   const CandidateSetBatch& sc, double alpha);

/// Cross-entropy on the proposal head plus multi-label BCE on the ML head, with
/// candidates proposed from the proposal head's logits.
AvgKLossOutput avgk_loss(const LogitMatrix& z_ml, const LogitMatrix& z_sccp,
                         std::span<const Label> y, const AvgKConfig& cfg);

}  // namespace avgk

#endif  // AVGK_LOSSES_HPP_
