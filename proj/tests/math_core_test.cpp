#include "avgk/math_core.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "avgk/error.hpp"
#include "support/oracles.hpp"

namespace avgk {
namespace {

TEST(SoftmaxRows, UniformLogits) {
  const ProbMatrix p = softmax_rows(Matrix::from_rows({{0, 0, 0, 0}}));
  for (double v : p.values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(SoftmaxRows, ClosedForm) {
  const ProbMatrix p = softmax_rows(Matrix::from_rows({{0.0, std::log(3.0)}}));
  EXPECT_NEAR(p(0, 0), 0.25, 1e-15);
  EXPECT_NEAR(p(0, 1), 0.75, 1e-15);
}

TEST(SoftmaxRows, LargeLogitsDoNotOverflow) {
  const ProbMatrix p = softmax_rows(Matrix::from_rows({{1000, 1000}}));
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p(0, 1), 0.5);
}

TEST(SoftmaxRows, RejectsNonFinite) {
  Matrix z = Matrix::from_rows({{0.0, 1.0}});
  z(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(softmax_rows(z), InvalidInput);
  z(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(softmax_rows(z), InvalidInput);
  EXPECT_THROW(softmax_rows(Matrix(1, 1)), InvalidInput);
}

TEST(SoftmaxRows, ShiftInvarianceAndSimplex) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> shift(-50.0, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix z = testing::random_matrix(rng, 1 + trial % 7, 2 + trial % 11, 3.0);
    Matrix shifted = z;
    for (std::size_t i = 0; i < z.rows(); ++i) {
      const double c = shift(rng);
      for (double& v : shifted.row(i)) v += c;
    }
    const ProbMatrix p = softmax_rows(z);
    const ProbMatrix q = softmax_rows(shifted);
    for (std::size_t i = 0; i < z.rows(); ++i) {
      double total = 0.0;
      const auto ref = testing::naive_softmax(z.row(i));
      for (std::size_t j = 0; j < z.cols(); ++j) {
        EXPECT_GE(p(i, j), 0.0);
        EXPECT_NEAR(p(i, j), q(i, j), 1e-9);
        EXPECT_NEAR(p(i, j), ref[j], 1e-12);
        total += p(i, j);
      }
      EXPECT_NEAR(total, 1.0, 1e-9);
    }
  }
}

TEST(Sigmoid, Values) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(1000.0), 1.0, 1e-12);
  EXPECT_GE(sigmoid(-1000.0), 0.0);
  EXPECT_NEAR(sigmoid(std::log(3.0)), 0.75, 1e-15);
}

TEST(Sigmoid, SymmetryAndMonotone) {
  double prev = 0.0;
  for (double t = -40.0; t <= 40.0; t += 0.37) {
    EXPECT_NEAR(sigmoid(-t), 1.0 - sigmoid(t), 1e-12);
    EXPECT_GE(sigmoid(t), prev);
    prev = sigmoid(t);
  }
}

TEST(LogSigmoid, Values) {
  EXPECT_NEAR(log_sigmoid(0.0), -std::log(2.0), 1e-15);
  EXPECT_NEAR(log_sigmoid(-50.0), -50.0, 1e-12);
  // -log(1 + e^-50) evaluated at 50 digits.
  const double expected = -1.928749847963917783e-22;
  EXPECT_LT(log_sigmoid(50.0), 0.0);
  EXPECT_NEAR(log_sigmoid(50.0) / expected, 1.0, 1e-12);
  EXPECT_TRUE(std::isfinite(log_sigmoid(-1e6)));
}

TEST(LogSigmoid, ConsistentWithSigmoid) {
  for (double t = -30.0; t <= 30.0; t += 0.25) {
    EXPECT_NEAR(std::exp(log_sigmoid(t)), sigmoid(t), 1e-9);
    // log sigma(t) - log sigma(-t) = t
    EXPECT_NEAR(log_sigmoid(t) - log_sigmoid(-t), t, 1e-9);
  }
}

TEST(KthLargest, Examples) {
  const std::vector<double> v{0.9, 0.6, 0.4, 0.1};
  EXPECT_EQ(kth_largest(v, 2), 0.6);
  const std::vector<double> same{0.5, 0.5, 0.5};
  EXPECT_EQ(kth_largest(same, 3), 0.5);
}

TEST(KthLargest, OutOfRange) {
  const std::vector<double> v{1.0, 2.0};
  EXPECT_THROW(kth_largest(v, 0), InvalidArgument);
  EXPECT_THROW(kth_largest(v, 3), InvalidArgument);
}

TEST(KthLargest, MatchesFullSort) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> d;
  std::vector<double> v(1000);
  for (double& x : v) x = d(rng);
  EXPECT_EQ(kth_largest(v, 137), testing::sorted_kth_largest(v, 137));

  std::uniform_int_distribution<int> small(0, 4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> w(1 + trial);
    for (double& x : w) x = small(rng);  // many duplicates
    for (std::size_t k = 1; k <= w.size(); ++k) {
      ASSERT_EQ(kth_largest(w, k), testing::sorted_kth_largest(w, k));
    }
  }
}

TEST(ValidateLabels, Errors) {
  const LabelVector y{0, 3};
  EXPECT_THROW(validate_labels(y, 2, 3), InvalidLabel);
  EXPECT_THROW(validate_labels(y, 3, 4), ShapeError);
  EXPECT_NO_THROW(validate_labels(y, 2, 4));
}

}  // namespace
}  // namespace avgk
