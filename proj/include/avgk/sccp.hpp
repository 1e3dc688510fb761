#ifndef AVGK_SCCP_HPP_
#define AVGK_SCCP_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "avgk/math_core.hpp"

namespace avgk {

/// Softmax probabilities of the proposal head with each observed-label entry
/// replaced by an unselectable marker. The marker is not a number; it compares
/// below every probability.
class MaskedProbMatrix {
 public:
  std::size_t rows() const { return probs_.rows(); }
  std::size_t cols() const { return probs_.cols(); }

  /// Probability at (i, j), or nullopt for the masked entry (i, y_i).
  std::optional<double> value(std::size_t i, std::size_t j) const {
    if (labels_[i] == j) return std::nullopt;
    return probs_(i, j);
  }
  bool is_masked(std::size_t i, std::size_t j) const { return labels_[i] == j; }
  Label masked_column(std::size_t i) const { return labels_[i]; }

 private:
  friend MaskedProbMatrix mask_true_labels(const ProbMatrix& p, std::span<const Label> y);
  MaskedProbMatrix(ProbMatrix probs, LabelVector labels)
      : probs_(std::move(probs)), labels_(std::move(labels)) {}

  ProbMatrix probs_;
  LabelVector labels_;
};

/// Per-example candidate classes S_c(x_i) (observed label excluded) for one batch.
class CandidateSetBatch {
 public:
  /// Validates that no candidate list contains its row's label and that every
  /// index is < num_classes. Lists are stored sorted and deduplicated.
  CandidateSetBatch(std::vector<std::vector<Label>> candidates, LabelVector labels,
                    std::size_t num_classes);

  /// All-empty candidate sets (the K = 1 case).
  static CandidateSetBatch empty(LabelVector labels, std::size_t num_classes);

  std::size_t batch_size() const { return labels_.size(); }
  std::size_t num_classes() const { return num_classes_; }
  std::span<const Label> labels() const { return labels_; }

  /// S_c(x_i), sorted ascending.
  std::span<const Label> candidates(std::size_t i) const { return candidates_[i]; }
  /// S(x_i) = S_c(x_i) plus the observed label, sorted ascending.
  std::vector<Label> full_set(std::size_t i) const;

  bool is_candidate(std::size_t i, std::size_t j) const {
    return membership_[i * num_classes_ + j] != 0;
  }

  std::size_t total_candidates() const { return total_; }
  /// (1/|B|) * sum_i |S(x_i)|.
  double mean_full_size() const;

  friend bool operator==(const CandidateSetBatch&, const CandidateSetBatch&) = default;

 private:
  std::vector<std::vector<Label>> candidates_;
  LabelVector labels_;
  std::size_t num_classes_ = 0;
  std::vector<unsigned char> membership_;
  std::size_t total_ = 0;
};

/// Copies `p` with entry (i, y_i) masked. Throws InvalidLabel for y_i >= cols.
MaskedProbMatrix mask_true_labels(const ProbMatrix& p, std::span<const Label> y);

/// Batch-global proposal: softmax the proposal-head logits, mask the observed
/// labels, and keep the (K-1)|B| largest remaining entries over the whole batch.
/// Rows may receive different numbers of candidates.
///
/// Ties at the selection boundary are broken by (row, column) ascending, so the
/// earlier entry wins. Requires 1 <= k_target <= L-1, otherwise InvalidConfig.
CandidateSetBatch propose_candidates(const LogitMatrix& z_sccp, std::span<const Label> y,
                                     std::size_t k_target);

/// Same selection starting from an already-masked matrix.
CandidateSetBatch select_candidates(const MaskedProbMatrix& masked, std::size_t k_target);

}  // namespace avgk

#endif  // AVGK_SCCP_HPP_
