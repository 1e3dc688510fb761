#ifndef AVGK_EXPERIMENT_HPP_
#define AVGK_EXPERIMENT_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "avgk/calibration.hpp"
#include "avgk/data.hpp"
#include "avgk/model.hpp"
#include "avgk/training.hpp"
#include "json.hpp"

namespace avgk {

inline constexpr const char* kCodeVersion = "0.1.0";

/// Output root: $AVGK_RESULTS_DIR when set, otherwise ./results.
std::filesystem::path results_root();

/// Everything needed to re-run one training job.
struct ExperimentConfig {
  std::filesystem::path data_dir;
  TrainConfig train;
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::kTanh;
  GroupBounds groups;
  /// Run directory; derived from the config hash under <root>/runs when empty.
  std::filesystem::path out_dir;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// FNV-1a of the serialized config.
std::string config_hash(const ExperimentConfig& cfg);

/// "150:10,225:10" -> {{150, 10}, {225, 10}}. Throws InvalidConfig on bad syntax.
std::vector<LrStep> parse_lr_schedule(const std::string& text);
std::string format_lr_schedule(const std::vector<LrStep>& steps);

/// Test metrics of `model` with lambda calibrated on the validation split.
SetMetrics evaluate_model(const TwoHeadMlp& model, const DatasetSplit& data,
                          std::size_t k_target, const GroupBounds& bounds,
                          std::size_t batch_size = 1024);

struct ExperimentOutcome {
  nlohmann::json record;
  std::filesystem::path run_dir;
  TrainResult training;
  SetMetrics test_metrics;
};

/// Trains on an already-loaded dataset; pure, writes nothing.
ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const DatasetFiles& dataset,
                                 const std::filesystem::path& root);

/// Loads the dataset, trains, and writes checkpoint.bin, train_log.jsonl,
/// record.json and histogram CSVs into the run directory.
ExperimentOutcome run_and_persist(const ExperimentConfig& cfg, const std::filesystem::path& root);

/// Appends one line to `path`.
void append_record(const std::filesystem::path& path, const nlohmann::json& record);

std::vector<nlohmann::json> read_records(const std::filesystem::path& path);

struct SummaryRow {
  nlohmann::json config;  // config with the seed removed
  std::size_t n = 0;
  double mean = 0.0;
  double ci95 = 0.0;  // 1.96 * sample standard error
  double mean_set_size = 0.0;
};

/// Groups records by config (seed excluded) in first-appearance order.
std::vector<SummaryRow> summarize(const std::vector<nlohmann::json>& records);

/// Mean and 1.96 * stddev/sqrt(n) with the n-1 sample variance; ci is 0 for n < 2.
std::pair<double, double> mean_ci95(const std::vector<double>& values);

/// CLI entry point. Returns 0 on success, 1 on runtime failure, 2 on usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace avgk

#endif  // AVGK_EXPERIMENT_HPP_
