#include "avgk/sccp.hpp"

#include <algorithm>
#include <string>

#include "avgk/error.hpp"

namespace avgk {

CandidateSetBatch::CandidateSetBatch(std::vector<std::vector<Label>> candidates,
                                     LabelVector labels, std::size_t num_classes)
    : candidates_(std::move(candidates)),
      labels_(std::move(labels)),
      num_classes_(num_classes),
      membership_(labels_.size() * num_classes, 0) {
  if (candidates_.size() != labels_.size()) {
    throw ShapeError("candidate list count does not match label count");
  }
  validate_labels(labels_, labels_.size(), num_classes_);
  for (std::size_t i = 0; i < candidates_.size(); ++i) {
    auto& row = candidates_[i];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    for (Label j : row) {
      if (j >= num_classes_) {
        throw InvalidLabel("candidate class " + std::to_string(j) + " out of range");
      }
      if (j == labels_[i]) {
        throw InconsistentPseudoLabels("row " + std::to_string(i) +
                                       " lists its observed label as a candidate");
      }
      membership_[i * num_classes_ + j] = 1;
    }
    total_ += row.size();
  }
}

CandidateSetBatch CandidateSetBatch::empty(LabelVector labels, std::size_t num_classes) {
  std::vector<std::vector<Label>> none(labels.size());
  return CandidateSetBatch(std::move(none), std::move(labels), num_classes);
}

std::vector<Label> CandidateSetBatch::full_set(std::size_t i) const {
  std::vector<Label> out(candidates_[i].begin(), candidates_[i].end());
  out.insert(std::upper_bound(out.begin(), out.end(), labels_[i]), labels_[i]);
  return out;
}

double CandidateSetBatch::mean_full_size() const {
  if (labels_.empty()) return 0.0;
  return static_cast<double>(total_ + labels_.size()) / static_cast<double>(labels_.size());
}

MaskedProbMatrix mask_true_labels(const ProbMatrix& p, std::span<const Label> y) {
  validate_labels(y, p.rows(), p.cols());
  return MaskedProbMatrix(p, LabelVector(y.begin(), y.end()));
}

namespace {

struct Entry {
  double value;
  std::size_t row;
  std::size_t col;
};

// Strict total order: larger value first, then (row, col) ascending.
bool ranks_before(const Entry& a, const Entry& b) {
  if (a.value != b.value) return a.value > b.value;
  if (a.row != b.row) return a.row < b.row;
  return a.col < b.col;
}

}  // namespace

CandidateSetBatch select_candidates(const MaskedProbMatrix& masked, std::size_t k_target) {
  const std::size_t n = masked.rows();
  const std::size_t num_classes = masked.cols();
  if (k_target < 1 || k_target >= num_classes) {
    throw InvalidConfig("k_target=" + std::to_string(k_target) + " must lie in [1, " +
                        std::to_string(num_classes - 1) + "]");
  }
  LabelVector labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = masked.masked_column(i);

  const std::size_t budget = (k_target - 1) * n;
  if (budget == 0) return CandidateSetBatch::empty(std::move(labels), num_classes);

  std::vector<Entry> pool;
  pool.reserve(n * (num_classes - 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < num_classes; ++j) {
      if (auto v = masked.value(i, j)) pool.push_back({*v, i, j});
    }
  }
  // budget <= (L-1)|B| = pool.size() follows from k_target <= L-1.
  auto cut = pool.begin() + static_cast<std::ptrdiff_t>(budget);
  std::nth_element(pool.begin(), cut - 1, pool.end(), ranks_before);

  std::vector<std::vector<Label>> sets(n);
  for (auto it = pool.begin(); it != cut; ++it) sets[it->row].push_back(it->col);
  return CandidateSetBatch(std::move(sets), std::move(labels), num_classes);
}

CandidateSetBatch propose_candidates(const LogitMatrix& z_sccp, std::span<const Label> y,
                                     std::size_t k_target) {
  validate_logits(z_sccp);
  return select_candidates(mask_true_labels(softmax_rows(z_sccp), y), k_target);
}

}  // namespace avgk
