#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "synfault/metrics.hpp"

using namespace synfault;
using namespace synfault::metrics;

namespace {

// F1 via precision and recall, independent of the TP/FP/FN form used in the library.
double f1_by_hand(double tp, double predicted, double actual) {
  const double p = tp / predicted, r = tp / actual;
  return 2 * p * r / (p + r);
}

ConfusionMatrix permuted(const ConfusionMatrix& cm, const std::vector<std::size_t>& perm) {
  ConfusionMatrix out(cm.classes());
  for (std::size_t r = 0; r < cm.classes(); ++r)
    for (std::size_t c = 0; c < cm.classes(); ++c) out.at(perm[r], perm[c]) = cm.at(r, c);
  return out;
}

}  // namespace

TEST(BalancedAccuracy, Examples) {
  EXPECT_DOUBLE_EQ(balanced_accuracy(ConfusionMatrix::from_rows({{5, 0, 0}, {0, 2, 0}, {0, 0, 9}})), 1.0);
  EXPECT_NEAR(balanced_accuracy(ConfusionMatrix::from_rows({{90, 10}, {1, 9}})), 0.9, 1e-12);
  EXPECT_THROW(balanced_accuracy(ConfusionMatrix::from_rows({{3, 1}, {0, 0}})), ParameterError);
}

TEST(BalancedAccuracy, EqualsAccuracyOnBalancedSets) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + trial % 5, per = 1 + trial % 13;
    ConfusionMatrix cm(k);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(k) - 1);
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t i = 0; i < per; ++i) cm.add(static_cast<int>(c), pick(rng));
    // Equal class sizes: (1/K) sum P_k / M = sum P_k / (K M), bit for bit.
    EXPECT_EQ(balanced_accuracy(cm), accuracy(cm));
  }
}

TEST(BalancedAccuracy, UniformRandomPredictionsGiveOneOverK) {
  std::mt19937_64 rng(8);
  const int k = 4;
  ConfusionMatrix cm(k);
  std::uniform_int_distribution<int> pick(0, k - 1);
  std::discrete_distribution<int> skewed({70, 20, 9, 1});
  for (int i = 0; i < 200000; ++i) cm.add(skewed(rng), pick(rng));
  EXPECT_NEAR(balanced_accuracy(cm), 0.25, 0.02);
}

TEST(F1, Examples) {
  const auto perfect = f1_scores(ConfusionMatrix::from_rows({{4, 0}, {0, 6}}));
  EXPECT_DOUBLE_EQ(perfect.macro, 1.0);
  EXPECT_DOUBLE_EQ(perfect.micro, 1.0);

  const auto cm = ConfusionMatrix::from_rows({{8, 2}, {3, 7}});
  const double expected = 0.5 * (f1_by_hand(8, 11, 10) + f1_by_hand(7, 9, 10));
  const auto f1 = f1_scores(cm);
  EXPECT_NEAR(f1.macro, expected, 1e-12);
  EXPECT_NEAR(f1.macro, 0.7497, 1e-3);
  EXPECT_NEAR(f1.micro, accuracy(cm), 1e-12);
}

TEST(F1, MicroEqualsAccuracyAndDegenerateClassScoresZero) {
  const auto cm = ConfusionMatrix::from_rows({{5, 3, 0}, {2, 7, 0}, {0, 0, 0}});
  const auto f1 = f1_scores(cm);
  EXPECT_EQ(f1.per_class[2], 0.0);
  EXPECT_NEAR(f1.micro, 12.0 / 17.0, 1e-12);
}

TEST(Kappa, Examples) {
  EXPECT_DOUBLE_EQ(cohens_kappa(ConfusionMatrix::from_rows({{3, 0, 0}, {0, 4, 0}, {0, 0, 1}})), 1.0);
  EXPECT_NEAR(cohens_kappa(ConfusionMatrix::from_rows({{45, 5}, {15, 35}})), 0.6, 1e-9);
  EXPECT_THROW(cohens_kappa(ConfusionMatrix::from_rows({{10, 0}, {0, 0}})), DegenerateInputError);
  EXPECT_THROW(cohens_kappa(ConfusionMatrix(3)), ParameterError);
}

TEST(Kappa, IndependentPredictionsNearZero) {
  std::mt19937_64 rng(10);
  std::discrete_distribution<int> marginal({50, 30, 20});
  ConfusionMatrix cm(3);
  for (int i = 0; i < 200000; ++i) cm.add(marginal(rng), marginal(rng));
  EXPECT_NEAR(cohens_kappa(cm), 0.0, 0.01);
}

TEST(Metrics, InvariantUnderClassRelabelling) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::uint64_t> count(0, 40);
  for (int trial = 0; trial < 100; ++trial) {
    ConfusionMatrix cm(4);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 4; ++c) cm.at(r, c) = count(rng) + (r == c ? 1 : 0);
    std::vector<std::size_t> perm{0, 1, 2, 3};
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto p = permuted(cm, perm);
    EXPECT_NEAR(balanced_accuracy(p), balanced_accuracy(cm), 1e-12);
    EXPECT_NEAR(f1_scores(p).macro, f1_scores(cm).macro, 1e-12);
    EXPECT_NEAR(f1_scores(p).micro, f1_scores(cm).micro, 1e-12);
    EXPECT_NEAR(cohens_kappa(p), cohens_kappa(cm), 1e-12);
  }
}

TEST(Metrics, FromPredictionsAndErrors) {
  const std::vector<int> truth{0, 0, 1, 2, 2, 2}, pred{0, 1, 1, 2, 0, 2};
  const auto cm = ConfusionMatrix::from_predictions(truth, pred, 3);
  EXPECT_EQ(cm.at(0, 1), 1u);
  EXPECT_EQ(cm.at(2, 0), 1u);
  EXPECT_EQ(cm.row_sum(2), 3u);
  EXPECT_THROW(ConfusionMatrix::from_predictions(truth, std::vector<int>{0}, 3), ShapeError);
  EXPECT_THROW(ConfusionMatrix::from_predictions(truth, pred, 2), ParameterError);
  EXPECT_THROW(ConfusionMatrix::from_rows({{1, 2}, {3}}), ShapeError);
}

TEST(Report, MeanOfRunsNotPooled) {
  const auto a = evaluate(ConfusionMatrix::from_rows({{10, 0}, {0, 1}}));
  const auto b = evaluate(ConfusionMatrix::from_rows({{0, 1}, {1, 0}}));
  const std::vector<Report> runs{a, b};
  const auto m = mean_report(runs);
  EXPECT_DOUBLE_EQ(m.balanced_accuracy, 0.5);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
  std::ostringstream os;
  write_tsv(os, {{{{"method", "dann"}}, a}});
  EXPECT_EQ(os.str().substr(0, 16), "method\taccuracy\t");
  const auto kv = to_key_value(a, {{"seed", "3"}});
  EXPECT_NE(kv.find("seed=3 accuracy=1 balanced_accuracy=1"), std::string::npos);
}
