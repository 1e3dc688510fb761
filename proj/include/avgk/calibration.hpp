#ifndef AVGK_CALIBRATION_HPP_
#define AVGK_CALIBRATION_HPP_

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "avgk/math_core.hpp"
#include "json.hpp"

namespace avgk {

/// Global probability threshold calibrated so that K classes are returned on
/// average over the calibration matrix. Only `calibrate` creates one.
class Threshold {
 public:
  double lambda() const { return lambda_; }
  std::size_t k_target() const { return k_target_; }
  std::size_t n_val() const { return n_val_; }

 private:
  friend Threshold calibrate(const ProbMatrix& probs_val, std::size_t k_target);
  Threshold(double lambda, std::size_t k_target, std::size_t n_val)
      : lambda_(lambda), k_target_(k_target), n_val_(n_val) {}

  double lambda_;
  std::size_t k_target_;
  std::size_t n_val_;
};

/// Flattens the n x L matrix and returns the midpoint of its (K n)-th and
/// (K n + 1)-th largest entries. Throws InvalidConfig if K n + 1 > n L.
Threshold calibrate(const ProbMatrix& probs_val, std::size_t k_target);

/// g(x_i) = { j : p_ij >= lambda } for every row.
struct PredictionSet {
  std::vector<std::vector<Label>> sets;

  std::size_t size() const { return sets.size(); }
  std::vector<std::size_t> sizes() const;
};

PredictionSet predict_sets(const ProbMatrix& probs, double lambda);
inline PredictionSet predict_sets(const ProbMatrix& probs, const Threshold& thr) {
  return predict_sets(probs, thr.lambda());
}

/// Fraction of rows whose true-class probability is >= lambda.
double avg_k_accuracy(const ProbMatrix& probs, std::span<const Label> y, double lambda);
inline double avg_k_accuracy(const ProbMatrix& probs, std::span<const Label> y,
                             const Threshold& thr) {
  return avg_k_accuracy(probs, y, thr.lambda());
}

struct SizeHistogram {
  std::map<std::size_t, std::size_t> counts;  // set size -> example count; 0 = empty set
  std::size_t total = 0;
  double mean_size = 0.0;
};

SizeHistogram set_size_histogram(const PredictionSet& pred);

enum class FrequencyGroup { kFew = 0, kMedium = 1, kMany = 2 };

const char* to_string(FrequencyGroup g);

/// Few: < few_below training examples. Many: > many_above. Medium otherwise.
struct GroupBounds {
  std::size_t few_below = 20;
  std::size_t many_above = 100;
};

FrequencyGroup frequency_group(std::size_t train_count, const GroupBounds& bounds);

struct GroupResult {
  std::size_t n_examples = 0;
  double accuracy = 0.0;
  SizeHistogram histogram;
};

/// Per-frequency-group results; a group with no test example is absent.
struct GroupBreakdown {
  std::array<std::optional<GroupResult>, 3> groups;

  const std::optional<GroupResult>& operator[](FrequencyGroup g) const {
    return groups[static_cast<std::size_t>(g)];
  }
};

GroupBreakdown group_breakdown(const ProbMatrix& probs, std::span<const Label> y,
                               double lambda, std::span<const std::size_t> class_train_counts,
                               const GroupBounds& bounds = {});

struct SetMetrics {
  double lambda = 0.0;
  double avg_k_accuracy = 0.0;
  double mean_set_size = 0.0;
  SizeHistogram histogram;
  std::optional<GroupBreakdown> groups;
};

/// Accuracy, set-size histogram and (when train counts are given) the group breakdown.
SetMetrics evaluate_sets(const ProbMatrix& probs, std::span<const Label> y, double lambda,
                         std::span<const std::size_t> class_train_counts = {},
                         const GroupBounds& bounds = {});

nlohmann::json to_json(const SizeHistogram& h);
nlohmann::json to_json(const SetMetrics& m);

/// Two-column CSV with a `size,count` header.
void write_histogram_csv(std::ostream& os, const SizeHistogram& h);

}  // namespace avgk

#endif  // AVGK_CALIBRATION_HPP_
