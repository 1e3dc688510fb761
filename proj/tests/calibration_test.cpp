#include "avgk/calibration.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "avgk/error.hpp"
#include "support/oracles.hpp"

namespace avgk {
namespace {

TEST(Calibrate, HandSortedExample) {
  // Flattened and sorted: 0.9, 0.6, 0.4, 0.1 -> midpoint of the 2nd and 3rd.
  const Threshold thr = calibrate(Matrix::from_rows({{0.9, 0.1}, {0.6, 0.4}}), 1);
  EXPECT_DOUBLE_EQ(thr.lambda(), 0.5);
  EXPECT_EQ(thr.k_target(), 1u);
  EXPECT_EQ(thr.n_val(), 2u);
}

TEST(Calibrate, AllTied) {
  Matrix p(7, 2, 0.5);
  EXPECT_EQ(calibrate(p, 1).lambda(), 0.5);
}

TEST(Calibrate, MatchesFullSortOracle) {
  std::mt19937_64 rng(21);
  const Matrix p = testing::random_probs(rng, 50, 10);
  EXPECT_EQ(calibrate(p, 3).lambda(), testing::full_sort_threshold(p, 3));
}

TEST(Calibrate, Errors) {
  EXPECT_THROW(calibrate(Matrix(3, 2, 0.5), 2), InvalidConfig);
  EXPECT_THROW(calibrate(Matrix(3, 2, 0.5), 0), InvalidConfig);
  EXPECT_THROW(calibrate(Matrix(0, 2), 1), InvalidData);
}

TEST(PredictSets, Examples) {
  const PredictionSet a = predict_sets(Matrix::from_rows({{0.9, 0.1}}), 0.5);
  EXPECT_EQ(a.sets[0], (std::vector<Label>{0}));
  const PredictionSet b = predict_sets(Matrix::from_rows({{0.34, 0.33, 0.33}}), 0.2);
  EXPECT_EQ(b.sets[0], (std::vector<Label>{0, 1, 2}));
  // Inclusive comparison.
  EXPECT_EQ(predict_sets(Matrix::from_rows({{0.5, 0.5}}), 0.5).sets[0].size(), 2u);
}

TEST(PredictSets, CalibrationSetAveragesK) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 5 + trial;
    const std::size_t l = 3 + trial % 8;
    const std::size_t k = 1 + trial % (l - 1);
    const Matrix p = testing::random_probs(rng, n, l);
    const Threshold thr = calibrate(p, k);
    std::size_t total = 0;
    for (std::size_t s : predict_sets(p, thr).sizes()) total += s;
    EXPECT_EQ(total, k * n);
  }
}

TEST(AvgKAccuracy, Examples) {
  const Matrix p = Matrix::from_rows({{0.9, 0.1}, {0.3, 0.7}});
  const LabelVector y{0, 0};
  EXPECT_DOUBLE_EQ(avg_k_accuracy(p, y, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(avg_k_accuracy(p, y, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(avg_k_accuracy(p, y, 1.0001), 0.0);
  EXPECT_THROW(avg_k_accuracy(p, LabelVector{0, 2}, 0.5), InvalidLabel);
}

TEST(Threshold, RaisingLambdaNeverGrowsSetsOrAccuracy) {
  std::mt19937_64 rng(23);
  const Matrix p = testing::random_probs(rng, 40, 6);
  const LabelVector y = testing::random_labels(rng, 40, 6);
  std::vector<std::size_t> prev_sizes = predict_sets(p, 0.0).sizes();
  double prev_acc = avg_k_accuracy(p, y, 0.0);
  for (double lambda = 0.01; lambda <= 1.01; lambda += 0.01) {
    const auto sizes = predict_sets(p, lambda).sizes();
    for (std::size_t i = 0; i < sizes.size(); ++i) EXPECT_LE(sizes[i], prev_sizes[i]);
    const double acc = avg_k_accuracy(p, y, lambda);
    EXPECT_LE(acc, prev_acc);
    prev_sizes = sizes;
    prev_acc = acc;
  }
}

TEST(SetSizeHistogram, Examples) {
  PredictionSet pred;
  pred.sets = {{0}, {0, 1}, {1, 2}, {0, 1, 2, 3, 4}};
  const SizeHistogram h = set_size_histogram(pred);
  EXPECT_EQ(h.counts, (std::map<std::size_t, std::size_t>{{1, 1}, {2, 2}, {5, 1}}));
  EXPECT_DOUBLE_EQ(h.mean_size, 2.5);
  EXPECT_EQ(h.total, 4u);

  pred.sets.push_back({});
  const SizeHistogram with_empty = set_size_histogram(pred);
  EXPECT_EQ(with_empty.counts.at(0), 1u);
  std::size_t sum = 0;
  for (const auto& [size, count] : with_empty.counts) sum += count;
  EXPECT_EQ(sum, pred.size());

  std::ostringstream csv;
  write_histogram_csv(csv, h);
  EXPECT_EQ(csv.str(), "size,count\n1,1\n2,2\n5,1\n");
}

TEST(GroupBreakdown, AllManyShot) {
  std::mt19937_64 rng(24);
  const Matrix p = testing::random_probs(rng, 30, 4);
  const LabelVector y = testing::random_labels(rng, 30, 4);
  const std::vector<std::size_t> counts(4, 500);
  const GroupBreakdown g = group_breakdown(p, y, 0.25, counts);
  EXPECT_FALSE(g[FrequencyGroup::kFew].has_value());
  EXPECT_FALSE(g[FrequencyGroup::kMedium].has_value());
  ASSERT_TRUE(g[FrequencyGroup::kMany].has_value());
  EXPECT_EQ(g[FrequencyGroup::kMany]->accuracy, avg_k_accuracy(p, y, 0.25));
}

TEST(GroupBreakdown, BoundaryMapping) {
  const GroupBounds b;
  EXPECT_EQ(frequency_group(19, b), FrequencyGroup::kFew);
  EXPECT_EQ(frequency_group(20, b), FrequencyGroup::kMedium);
  EXPECT_EQ(frequency_group(100, b), FrequencyGroup::kMedium);
  EXPECT_EQ(frequency_group(101, b), FrequencyGroup::kMany);

  const Matrix p = Matrix::from_rows({{0.6, 0.2, 0.2}, {0.2, 0.6, 0.2}, {0.2, 0.2, 0.6}, {0.1, 0.1, 0.8}});
  const LabelVector y{0, 1, 2, 2};
  const std::vector<std::size_t> counts{10, 50, 500};
  const GroupBreakdown g = group_breakdown(p, y, 0.5, counts);
  EXPECT_EQ(g[FrequencyGroup::kFew]->n_examples, 1u);
  EXPECT_EQ(g[FrequencyGroup::kMedium]->n_examples, 1u);
  EXPECT_EQ(g[FrequencyGroup::kMany]->n_examples, 2u);
  EXPECT_THROW(group_breakdown(p, y, 0.5, std::vector<std::size_t>{1, 2}), ShapeError);
}

TEST(GroupBreakdown, WeightedRecombination) {
  std::mt19937_64 rng(25);
  const std::size_t l = 12;
  const Matrix p = testing::random_probs(rng, 400, l);
  LabelVector y(400);
  std::discrete_distribution<std::size_t> skew{40, 30, 20, 10, 8, 6, 5, 4, 3, 2, 1, 1};
  for (auto& v : y) v = skew(rng);
  const std::vector<std::size_t> counts{900, 600, 300, 150, 99, 80, 40, 20, 19, 10, 3, 1};
  const Threshold thr = calibrate(p, 3);
  const GroupBreakdown g = group_breakdown(p, y, thr.lambda(), counts);
  double weighted = 0.0;
  std::size_t n = 0;
  for (const auto& r : g.groups) {
    ASSERT_TRUE(r.has_value());
    weighted += r->accuracy * static_cast<double>(r->n_examples);
    n += r->n_examples;
  }
  EXPECT_EQ(n, 400u);
  EXPECT_NEAR(weighted / static_cast<double>(n), avg_k_accuracy(p, y, thr), 1e-12);
}

TEST(SetMetrics, JsonRecord) {
  const Matrix p = Matrix::from_rows({{0.9, 0.1}, {0.3, 0.7}});
  const SetMetrics m = evaluate_sets(p, LabelVector{0, 0}, 0.5, std::vector<std::size_t>{200, 5});
  const nlohmann::json j = to_json(m);
  EXPECT_EQ(j.at("avg_k_accuracy").get<double>(), 0.5);
  EXPECT_EQ(j.at("mean_set_size").get<double>(), 1.0);
  EXPECT_TRUE(j.at("groups").at("few").is_null());
  EXPECT_EQ(j.at("groups").at("many").at("n_examples").get<std::size_t>(), 2u);
  EXPECT_EQ(j.dump().find('\n'), std::string::npos);
}

}  // namespace
}  // namespace avgk
