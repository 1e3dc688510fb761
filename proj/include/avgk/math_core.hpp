#ifndef AVGK_MATH_CORE_HPP_
#define AVGK_MATH_CORE_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "avgk/matrix.hpp"

namespace avgk {

/// Raw per-batch scores, |B| x L. Rows >= 1, cols >= 2, all entries finite.
using LogitMatrix = Matrix;
/// Same shape as a LogitMatrix with entries in [0, 1].
using ProbMatrix = Matrix;
/// Zero-based class index per example.
using Label = std::size_t;
using LabelVector = std::vector<Label>;

/// Throws InvalidInput unless `z` has >= 1 row, >= 2 columns and only finite entries.
void validate_logits(const LogitMatrix& z);

/// Throws ShapeError on a row-count mismatch and InvalidLabel on any label >= num_classes.
void validate_labels(std::span<const Label> y, std::size_t rows, std::size_t num_classes);

/// Row-wise softmax with per-row max subtraction.
ProbMatrix softmax_rows(const LogitMatrix& z);

/// Logistic function 1 / (1 + e^-t), evaluated without overflow.
double sigmoid(double t);

/// log(1 + e^t) without overflow or underflow.
double softplus(double t);

/// log(sigmoid(t)) = -softplus(-t). Stays finite for large |t|.
double log_sigmoid(double t);

/// The k-th largest value (1-based, duplicates counted). Throws InvalidArgument
/// unless 1 <= k <= values.size().
double kth_largest(std::span<const double> values, std::size_t k);

}  // namespace avgk

#endif  // AVGK_MATH_CORE_HPP_
