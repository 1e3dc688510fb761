#include "avgk/math_core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "avgk/error.hpp"

namespace avgk {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<std::vector<double>> copy;
  copy.reserve(rows.size());
  for (const auto& r : rows) copy.emplace_back(r);
  return from_rows(copy);
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.size();
  const std::size_t m = n == 0 ? 0 : rows.front().size();
  Matrix out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != m) throw ShapeError("ragged rows in Matrix::from_rows");
    std::copy(rows[i].begin(), rows[i].end(), out.row(i).begin());
  }
  return out;
}

void validate_logits(const LogitMatrix& z) {
  if (z.rows() < 1 || z.cols() < 2) {
    throw InvalidInput("logit matrix must have at least 1 row and 2 columns, got " +
                       std::to_string(z.rows()) + "x" + std::to_string(z.cols()));
  }
  for (double v : z.values()) {
    if (!std::isfinite(v)) throw InvalidInput("logit matrix contains a non-finite entry");
  }
}

void validate_labels(std::span<const Label> y, std::size_t rows, std::size_t num_classes) {
  if (y.size() != rows) {
    throw ShapeError("label count " + std::to_string(y.size()) + " does not match " +
                     std::to_string(rows) + " rows");
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] >= num_classes) {
      throw InvalidLabel("label " + std::to_string(y[i]) + " at row " + std::to_string(i) +
                         " is out of range for " + std::to_string(num_classes) + " classes");
    }
  }
}

ProbMatrix softmax_rows(const LogitMatrix& z) {
  validate_logits(z);
  ProbMatrix p(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto in = z.row(i);
    auto out = p.row(i);
    const double shift = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      out[j] = std::exp(in[j] - shift);
      total += out[j];
    }
    for (double& v : out) v /= total;
  }
  return p;
}

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

double log_sigmoid(double t) { return -softplus(-t); }

double kth_largest(std::span<const double> values, std::size_t k) {
  if (k < 1 || k > values.size()) {
    throw InvalidArgument("kth_largest: k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(values.size()) + "]");
  }
  std::vector<double> work(values.begin(), values.end());
  auto nth = work.begin() + static_cast<std::ptrdiff_t>(k - 1);
  std::nth_element(work.begin(), nth, work.end(), std::greater<>());
  return *nth;
}

}  // namespace avgk
