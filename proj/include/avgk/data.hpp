#ifndef AVGK_DATA_HPP_
#define AVGK_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avgk/calibration.hpp"
#include "avgk/math_core.hpp"
#include "json.hpp"

namespace avgk {

/// Isotropic Gaussian mixture with a shared variance: class j has prior
/// priors[j] and density N(means[j], sigma^2 I).
struct SyntheticSpec {
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  std::vector<std::vector<double>> means;
  double sigma = 1.0;
  std::vector<double> priors;
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::size_t n_test = 0;

  /// Throws InvalidConfig on inconsistent sizes, non-positive sigma or priors
  /// that do not sum to 1, and InvalidData when there are no samples at all.
  void validate() const;
  std::size_t n_total() const { return n_train + n_val + n_test; }
};

/// Geometry knobs for `make_superclass_spec`.
///
/// Classes are grouped into consecutive superclasses. Superclass centres sit on
/// a circle in the first two coordinates with neighbouring centres `spread`
/// sigmas apart. Members of a superclass sit on a small circle around the
/// centre, neighbouring members `separation` sigmas apart (for two members that
/// is their exact distance). Priors follow (j+1)^-tail_exponent.
struct SuperclassLayout {
  std::size_t num_classes = 10;
  std::size_t num_superclasses = 5;
  std::size_t feature_dim = 2;
  double separation = 1.0;
  double spread = 6.0;
  double sigma = 1.0;
  double tail_exponent = 0.0;
};

SyntheticSpec make_superclass_spec(const SuperclassLayout& layout, std::uint64_t seed,
                                   std::size_t n_train, std::size_t n_val, std::size_t n_test);

/// Power-law priors proportional to (j+1)^-exponent, normalized.
std::vector<double> power_law_priors(std::size_t num_classes, double exponent);

/// Labelled feature rows in storage order.
struct Table {
  Matrix features;
  LabelVector labels;
  std::size_t num_classes = 0;
};

struct Split {
  Matrix features;
  LabelVector labels;
  std::vector<std::size_t> indices;  // row indices into the source table, ascending
};

struct DatasetSplit {
  std::size_t num_classes = 0;
  Split train;
  Split val;
  Split test;
  std::vector<std::size_t> class_train_counts;

  std::size_t feature_dim() const { return train.features.cols(); }
};

/// Validation and test sizes; the remainder goes to training.
struct SplitPlan {
  std::size_t n_val = 0;
  std::size_t n_test = 0;

  /// floor(fraction * n) for validation and test; train takes the remainder.
  static SplitPlan from_fractions(std::size_t n, double val_fraction, double test_fraction);
};

/// Shuffles row indices with a seeded engine and cuts them into train/val/test.
/// Throws InvalidData if a split would be empty.
DatasetSplit split_table(const Table& table, const SplitPlan& plan, std::uint64_t seed);

/// Samples spec.n_total() rows in a fixed order (label, then features).
Table sample_table(const SyntheticSpec& spec);

/// sample_table followed by split_table with the spec's own seed and sizes.
DatasetSplit generate(const SyntheticSpec& spec);

/// Closed-form P(Y = j | X = x) for a SyntheticSpec, evaluated in log space.
class PosteriorOracle {
 public:
  explicit PosteriorOracle(SyntheticSpec spec);

  std::vector<double> posterior(std::span<const double> x) const;
  ProbMatrix posterior_matrix(const Matrix& xs) const;
  const SyntheticSpec& spec() const { return spec_; }

 private:
  SyntheticSpec spec_;
  std::vector<double> log_priors_;
};

struct BayesResult {
  Threshold threshold;
  PredictionSet sets;
  /// Mean over xs of the posterior mass inside g*(x): a Monte-Carlo estimate of 1 - R(g*).
  double accuracy = 0.0;
  double mean_set_size = 0.0;
};

/// Thresholds the true posteriors at the lambda that returns K classes on average over xs.
BayesResult bayes_avgk_classifier(const PosteriorOracle& oracle, const Matrix& xs,
                                  std::size_t k_target);

/// Writes `x0,...,x{D-1},label` then one row per example, shortest round-trip formatting.
void write_table_csv(std::ostream& os, const Table& table);

struct CsvOptions {
  char delimiter = ',';
  /// Declared class count; inferred as max label + 1 when absent.
  std::optional<std::size_t> num_classes;
};

/// Numeric table whose final column is an integer label. A non-numeric first
/// row is treated as a header. Throws ParseError naming the offending line.
Table read_table_csv(std::istream& is, const CsvOptions& options = {});

struct IngestOptions {
  CsvOptions csv;
  double val_fraction = 0.1;
  double test_fraction = 0.2;
  std::optional<SplitPlan> plan;  // overrides the fractions when set
  std::uint64_t seed = 0;
};

DatasetSplit ingest_table(const std::filesystem::path& path, const IngestOptions& options);

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec spec_from_json(const nlohmann::json& j);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// A dataset directory: data.csv (all rows) plus manifest.json describing the
/// split sizes, seed, class counts and, for synthetic data, the generating spec.
struct DatasetFiles {
  DatasetSplit split;
  nlohmann::json manifest;
  std::string manifest_hash;
  std::optional<SyntheticSpec> spec;
};

/// Writes data.csv and manifest.json into `dir`, creating it if needed.
void save_dataset(const std::filesystem::path& dir, const Table& table, const SplitPlan& plan,
                  std::uint64_t split_seed, const std::optional<SyntheticSpec>& spec);

DatasetFiles load_dataset(const std::filesystem::path& dir);

}  // namespace avgk

#endif  // AVGK_DATA_HPP_
