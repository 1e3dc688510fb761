#include "avgk/calibration.hpp"

#include <algorithm>
#include <functional>

#include "avgk/error.hpp"

namespace avgk {

Threshold calibrate(const ProbMatrix& probs_val, std::size_t k_target) {
  const std::size_t n = probs_val.rows();
  if (n == 0) throw InvalidData("calibration matrix is empty");
  if (k_target < 1) throw InvalidConfig("k_target must be >= 1");
  const std::size_t rank = k_target * n;
  if (rank + 1 > probs_val.size()) {
    throw InvalidConfig("K=" + std::to_string(k_target) + " is too large for L=" +
                        std::to_string(probs_val.cols()) + " (need K*n+1 <= n*L)");
  }
  std::vector<double> flat(probs_val.values().begin(), probs_val.values().end());
  auto nth = flat.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(flat.begin(), nth, flat.end(), std::greater<>());
  const double upper = *nth;
  const double lower = *std::max_element(nth + 1, flat.end());
  return Threshold(0.5 * (upper + lower), k_target, n);
}

std::vector<std::size_t> PredictionSet::sizes() const {
  std::vector<std::size_t> out;
  out.reserve(sets.size());
  for (const auto& s : sets) out.push_back(s.size());
  return out;
}

PredictionSet predict_sets(const ProbMatrix& probs, double lambda) {
  PredictionSet out;
  out.sets.resize(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto row = probs.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j] >= lambda) out.sets[i].push_back(j);
    }
  }
  return out;
}

double avg_k_accuracy(const ProbMatrix& probs, std::span<const Label> y, double lambda) {
  validate_labels(y, probs.rows(), probs.cols());
  if (y.empty()) throw InvalidData("cannot compute accuracy on zero examples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (probs(i, y[i]) >= lambda) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

SizeHistogram set_size_histogram(const PredictionSet& pred) {
  SizeHistogram h;
  std::size_t sum = 0;
  for (const auto& s : pred.sets) {
    ++h.counts[s.size()];
    sum += s.size();
  }
  h.total = pred.size();
  h.mean_size = h.total == 0 ? 0.0 : static_cast<double>(sum) / static_cast<double>(h.total);
  return h;
}

const char* to_string(FrequencyGroup g) {
  switch (g) {
    case FrequencyGroup::kFew:
      return "few";
    case FrequencyGroup::kMedium:
      return "medium";
    case FrequencyGroup::kMany:
      return "many";
  }
  return "unknown";
}

FrequencyGroup frequency_group(std::size_t train_count, const GroupBounds& bounds) {
  if (train_count < bounds.few_below) return FrequencyGroup::kFew;
  if (train_count > bounds.many_above) return FrequencyGroup::kMany;
  return FrequencyGroup::kMedium;
}

GroupBreakdown group_breakdown(const ProbMatrix& probs, std::span<const Label> y,
                               double lambda, std::span<const std::size_t> class_train_counts,
                               const GroupBounds& bounds) {
  validate_labels(y, probs.rows(), probs.cols());
  if (class_train_counts.size() != probs.cols()) {
    throw ShapeError("class_train_counts has " + std::to_string(class_train_counts.size()) +
                     " entries for " + std::to_string(probs.cols()) + " classes");
  }
  std::array<PredictionSet, 3> sets;
  std::array<std::size_t, 3> hits{};
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto g =
        static_cast<std::size_t>(frequency_group(class_train_counts[y[i]], bounds));
    auto& bucket = sets[g].sets.emplace_back();
    const auto row = probs.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j] >= lambda) bucket.push_back(j);
    }
    if (row[y[i]] >= lambda) ++hits[g];
  }
  GroupBreakdown out;
  for (std::size_t g = 0; g < 3; ++g) {
    if (sets[g].size() == 0) continue;
    GroupResult r;
    r.n_examples = sets[g].size();
    r.accuracy = static_cast<double>(hits[g]) / static_cast<double>(r.n_examples);
    r.histogram = set_size_histogram(sets[g]);
    out.groups[g] = std::move(r);
  }
  return out;
}

SetMetrics evaluate_sets(const ProbMatrix& probs, std::span<const Label> y, double lambda,
                         std::span<const std::size_t> class_train_counts,
                         const GroupBounds& bounds) {
  SetMetrics m;
  m.lambda = lambda;
  m.avg_k_accuracy = avg_k_accuracy(probs, y, lambda);
  m.histogram = set_size_histogram(predict_sets(probs, lambda));
  m.mean_set_size = m.histogram.mean_size;
  if (!class_train_counts.empty()) {
    m.groups = group_breakdown(probs, y, lambda, class_train_counts, bounds);
  }
  return m;
}

nlohmann::json to_json(const SizeHistogram& h) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [size, count] : h.counts) counts[std::to_string(size)] = count;
  return {{"counts", counts}, {"total", h.total}, {"mean_size", h.mean_size}};
}

nlohmann::json to_json(const SetMetrics& m) {
  nlohmann::json j = {{"lambda_val", m.lambda},
                      {"avg_k_accuracy", m.avg_k_accuracy},
                      {"mean_set_size", m.mean_set_size},
                      {"histogram", to_json(m.histogram)}};
  if (m.groups) {
    nlohmann::json groups = nlohmann::json::object();
    for (std::size_t g = 0; g < 3; ++g) {
      const auto& r = m.groups->groups[g];
      const char* name = to_string(static_cast<FrequencyGroup>(g));
      if (!r) {
        groups[name] = nullptr;
        continue;
      }
      groups[name] = {{"n_examples", r->n_examples},
                      {"avg_k_accuracy", r->accuracy},
                      {"histogram", to_json(r->histogram)}};
    }
    j["groups"] = groups;
  }
  return j;
}

void write_histogram_csv(std::ostream& os, const SizeHistogram& h) {
  os << "size,count\n";
  for (const auto& [size, count] : h.counts) os << size << ',' << count << '\n';
}

}  // namespace avgk
