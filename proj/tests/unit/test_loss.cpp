#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "l2copy/loss.hpp"

using namespace l2copy;

namespace {

Tensor scalar(double v) { return Tensor::scalar(static_cast<Real>(v)); }

}  // namespace

TEST(LossTest, PerfectModelHasZeroApeLoss) {
  const Tensor probs = Tensor::from({2, 3}, {0, 1, 0, 0, 0, 1});
  const std::vector<int> targets = {1, 2};
  EXPECT_EQ(loss_ape(probs, targets).item(), 0.0f);
}

TEST(LossTest, UniformModelCostsLogVPerToken) {
  const Tensor probs = Tensor::full({3, 5}, 0.2f);
  const std::vector<int> targets = {0, 3, 4};
  EXPECT_NEAR(loss_ape(probs, targets).item(), std::log(5.0), 1e-6);
}

TEST(LossTest, ApeLossMatchesSummationOracle) {
  std::mt19937_64 rng(3);
  const Tensor probs = softmax(Tensor::randn({4, 6}, 1.0f, rng));
  const std::vector<int> targets = {5, 0, 2, 2};
  double ref = 0;
  for (std::size_t j = 0; j < 4; ++j) ref -= std::log(static_cast<double>(probs.at(j, targets[j])));
  EXPECT_NEAR(ape_nll_sum(probs, targets, 1e-9f).item(), ref, 1e-5);
  EXPECT_NEAR(loss_ape(probs, targets).item(), ref / 4, 1e-6);
}

TEST(LossTest, ProbabilityFloorBoundsTheLoss) {
  const Tensor probs = Tensor::from({1, 2}, {1, 0});
  const std::vector<int> targets = {1};
  EXPECT_NEAR(loss_ape(probs, targets).item(), -std::log(1e-9), 1e-3);
}

TEST(LossTest, CopyLossIsZeroForExactMass) {
  const std::vector<std::uint8_t> labels = {1, 0, 1};
  EXPECT_EQ(loss_copy(Tensor::from({3}, {1, 0, 1}), labels).item(), 0.0f);
}

TEST(LossTest, CopyLossHandValues) {
  const std::vector<std::uint8_t> two = {1, 0};
  EXPECT_FLOAT_EQ(loss_copy(Tensor::from({2}, {0, 0}), two).item(), 0.5f);
  const std::vector<std::uint8_t> three = {1, 0, 1};
  EXPECT_NEAR(loss_copy(Tensor::from({3}, {0.5f, 0.25f, 2.0f}), three).item(), 0.4375, 1e-7);
}

TEST(LossTest, CopyLossRejectsLengthMismatch) {
  const std::vector<std::uint8_t> labels = {1, 0};
  EXPECT_THROW(loss_copy(Tensor::from({3}, {0, 0, 0}), labels), ContractError);
}

TEST(LossTest, PredictionLossAtHalfIsTwoLogTwo) {
  const std::vector<std::uint8_t> labels = {1, 0};
  EXPECT_NEAR(loss_pred(Tensor::from({2}, {0.5f, 0.5f}), labels).item(), 2 * std::log(2.0), 1e-6);
}

TEST(LossTest, PredictionLossHandValue) {
  const std::vector<std::uint8_t> labels = {1, 0};
  EXPECT_NEAR(loss_pred(Tensor::from({2}, {0.9f, 0.2f}), labels).item(), 0.328504066972036, 1e-6);
}

TEST(LossTest, PerfectScoresAreClampedToNearZero) {
  const std::vector<std::uint8_t> labels = {1, 0, 1};
  const Real l = loss_pred(Tensor::from({3}, {1, 0, 1}), labels).item();
  EXPECT_TRUE(std::isfinite(l));
  EXPECT_LT(l, 1e-5);
}

TEST(LossTest, CombinedLossHandValue) {
  LossWeights w;
  w.alpha = 0.9;
  w.lambda = 1.0;
  EXPECT_NEAR(loss_all(scalar(2.0), scalar(0.5), scalar(1.0), w).item(), 1.15, 1e-6);
}

TEST(LossTest, CombinedLossEndpoints) {
  LossWeights w;
  w.alpha = 1.0;
  EXPECT_NEAR(loss_all(scalar(2.0), scalar(0.5), scalar(1.0), w).item(), 1.0, 1e-7);
  w.alpha = 0.0;
  w.lambda = 0.0;
  EXPECT_NEAR(loss_all(scalar(2.0), scalar(0.5), scalar(1.0), w).item(), 2.0, 1e-7);
}

TEST(LossTest, DisabledTermsAreDropped) {
  LossWeights w;
  w.alpha = 0.5;
  w.lambda = 1.0;
  EXPECT_NEAR(loss_all(scalar(2.0), Tensor{}, Tensor{}, w, {false, false}).item(), 1.0, 1e-7);
  EXPECT_NEAR(loss_all(scalar(2.0), scalar(4.0), Tensor{}, w, {true, false}).item(), 3.0, 1e-7);
}
