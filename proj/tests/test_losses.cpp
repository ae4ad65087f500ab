#include <cmath>

#include <gtest/gtest.h>

#include "laneseg/errors.hpp"
#include "laneseg/losses.hpp"
#include "gradcheck.hpp"

namespace laneseg::losses {
namespace {

torch::Tensor binary_target(std::int64_t b, std::int64_t h, std::int64_t w, double p = 0.4) {
  return (torch::rand({b, h, w}, torch::kDouble) < p).to(torch::kDouble);
}

TEST(BinaryDice, PerfectPredictionIsZero) {
  torch::manual_seed(1);
  const torch::Tensor t = binary_target(2, 6, 6);
  EXPECT_NEAR(binary_dice_loss(t, t).value, 0.0, 1e-12);
}

TEST(BinaryDice, EmptyPairIsZero) {
  const torch::Tensor z = torch::zeros({1, 4, 4});
  EXPECT_NEAR(binary_dice_loss(z, z).value, 0.0, 1e-12);
}

TEST(BinaryDice, HalfSupport) {
  torch::Tensor t = torch::zeros({1, 4, 4}, torch::kDouble);
  t.index_put_({0, torch::indexing::Slice(0, 2)}, 1.0);  // 8 target pixels
  torch::Tensor p = torch::zeros({1, 4, 4}, torch::kDouble);
  p.index_put_({0, 0}, 1.0);  // 4 of them predicted
  const LossValue v = binary_dice_loss(p, t);
  EXPECT_NEAR(v.value, 4.0 / 13.0, 1e-12);
  EXPECT_NEAR(v.components.at("dice"), 4.0 / 13.0, 1e-12);
}

TEST(BinaryDice, SymmetricForBinaryPredictions) {
  torch::manual_seed(2);
  for (int trial = 0; trial < 10; ++trial) {
    const torch::Tensor a = binary_target(2, 6, 6), b = binary_target(2, 6, 6);
    EXPECT_NEAR(binary_dice_loss(a, b).value, binary_dice_loss(b, a).value, 1e-12);
  }
}

TEST(BinaryDice, RejectsBadInputs) {
  const torch::Tensor t = torch::zeros({1, 4, 4});
  EXPECT_THROW(binary_dice_loss(torch::zeros({1, 4, 5}), t), ShapeError);
  EXPECT_THROW(binary_dice_loss(torch::full({1, 4, 4}, 1.5), t), DomainError);
  EXPECT_THROW(binary_dice_loss(torch::full({1, 4, 4}, -0.1), t), DomainError);
  EXPECT_THROW(binary_dice_loss(t, torch::full({1, 4, 4}, 0.5)), DomainError);
  EXPECT_THROW(binary_dice_loss(t, t, 0.0), ArgumentError);
  EXPECT_THROW(binary_dice_loss(torch::zeros({4, 4}), torch::zeros({4, 4})), ShapeError);
}

/// B x H x W x 3 probabilities with the given left/right channels on the
/// given targets and background elsewhere.
torch::Tensor three_class(const torch::Tensor& left, const torch::Tensor& right) {
  return torch::stack({1.0 - left - right, left, right}, 3);
}

TEST(MultiDice, OneHotCorrectIsZero) {
  torch::Tensor l = torch::zeros({1, 6, 6}, torch::kDouble);
  torch::Tensor r = torch::zeros({1, 6, 6}, torch::kDouble);
  l.index_put_({0, torch::indexing::Slice(), 1}, 1.0);
  r.index_put_({0, torch::indexing::Slice(), 4}, 1.0);
  EXPECT_NEAR(multi_dice_loss(three_class(l, r), l, r).value, 0.0, 1e-12);
}

TEST(MultiDice, ConstructedComponentsAverage) {
  // Four target pixels per lane predicted with probability q and nothing
  // elsewhere: dice loss = 1 - (8q + 1) / (4q + 5). q = 5/8 gives 0.2 and
  // q = 5/14 gives 0.4.
  torch::Tensor tl = torch::zeros({1, 6, 6}, torch::kDouble);
  torch::Tensor tr = torch::zeros({1, 6, 6}, torch::kDouble);
  tl.index_put_({0, torch::indexing::Slice(0, 4), 0}, 1.0);
  tr.index_put_({0, torch::indexing::Slice(0, 4), 5}, 1.0);
  const LossValue v = multi_dice_loss(three_class(tl * 0.625, tr * (5.0 / 14.0)), tl, tr);
  EXPECT_NEAR(v.components.at("dice_left"), 0.2, 1e-12);
  EXPECT_NEAR(v.components.at("dice_right"), 0.4, 1e-12);
  EXPECT_NEAR(v.value, 0.3, 1e-12);
}

TEST(MultiDice, ChannelsMustSumToOne) {
  const torch::Tensor t = torch::zeros({1, 4, 4});
  EXPECT_THROW(multi_dice_loss(torch::full({1, 4, 4, 3}, 0.5), t, t), DomainError);
  EXPECT_THROW(multi_dice_loss(torch::full({1, 4, 4, 2}, 0.5), t, t), ShapeError);
}

TEST(Bce, HalfEverywhereIsLn2) {
  torch::manual_seed(3);
  const torch::Tensor t = binary_target(2, 5, 5);
  EXPECT_NEAR(bce_loss(torch::full({2, 5, 5}, 0.5, torch::kDouble), t).value, std::log(2.0), 1e-12);
}

TEST(Bce, PerfectPredictionIsTiny) {
  torch::manual_seed(4);
  const torch::Tensor t = binary_target(1, 6, 6);
  const LossValue v = bce_loss(t, t);
  EXPECT_LT(v.value, 1e-5);
  EXPECT_GE(v.value, 0.0);
}

TEST(Bce, SinglePixel) {
  const LossValue v = bce_loss(torch::full({1, 1, 1}, 0.25, torch::kDouble), torch::ones({1, 1, 1}));
  EXPECT_NEAR(v.value, -std::log(0.25), 1e-12);
  EXPECT_NEAR(v.components.at("bce"), v.value, 1e-15);
  EXPECT_THROW(bce_loss(torch::zeros({1, 2, 2}), torch::zeros({1, 2, 3})), ShapeError);
}

TEST(LossProperties, NonNegativeBoundedAndPermutationInvariant) {
  torch::manual_seed(5);
  for (int trial = 0; trial < 20; ++trial) {
    const torch::Tensor p = torch::rand({2, 6, 6}, torch::kDouble);
    const torch::Tensor t = binary_target(2, 6, 6);
    const double dice = binary_dice_loss(p, t).value;
    const double bce = bce_loss(p, t).value;
    EXPECT_GE(dice, 0.0);
    EXPECT_LE(dice, 1.0);
    EXPECT_GE(bce, 0.0);

    const torch::Tensor perm = torch::randperm(36);
    auto shuffle = [&](const torch::Tensor& x) { return x.reshape({2, 36}).index_select(1, perm).reshape({2, 6, 6}); };
    EXPECT_NEAR(binary_dice_loss(shuffle(p), shuffle(t)).value, dice, 1e-12);
    EXPECT_NEAR(bce_loss(shuffle(p), shuffle(t)).value, bce, 1e-12);

    const torch::Tensor logits = torch::randn({2, 6, 6, 3}, torch::kDouble);
    const torch::Tensor probs = torch::softmax(logits, 3);
    const torch::Tensor tl = binary_target(2, 6, 6), tr = binary_target(2, 6, 6);
    const double md = multi_dice_loss(probs, tl, tr).value;
    EXPECT_GE(md, 0.0);
    EXPECT_LE(md, 1.0);
    const torch::Tensor pp = probs.reshape({2, 36, 3}).index_select(1, perm).reshape({2, 6, 6, 3});
    EXPECT_NEAR(multi_dice_loss(pp, shuffle(tl), shuffle(tr)).value, md, 1e-12);
  }
}

// Gradient checks on 6x6 inputs, central differences with step 1e-6.

TEST(LossGradients, BinaryDiceMatchesFiniteDifferences) {
  torch::manual_seed(6);
  const torch::Tensor p = 0.1 + 0.8 * torch::rand({2, 6, 6}, torch::kDouble);
  const torch::Tensor t = binary_target(2, 6, 6);
  const torch::Tensor var = p.clone().requires_grad_(true);
  binary_dice_loss(var, t).tensor.backward();
  const torch::Tensor fd = oracle::finite_difference(
      [&](const torch::Tensor& x) { return binary_dice_loss(x, t).value; }, p, 1e-6);
  EXPECT_LT(oracle::relative_error(var.grad(), fd), 1e-4);
  EXPECT_LT(oracle::relative_error(binary_dice_grad(p, t), fd), 1e-4);
}

TEST(LossGradients, BceMatchesFiniteDifferences) {
  torch::manual_seed(7);
  const torch::Tensor p = 0.05 + 0.9 * torch::rand({2, 6, 6}, torch::kDouble);
  const torch::Tensor t = binary_target(2, 6, 6);
  const torch::Tensor var = p.clone().requires_grad_(true);
  bce_loss(var, t).tensor.backward();
  const torch::Tensor fd =
      oracle::finite_difference([&](const torch::Tensor& x) { return bce_loss(x, t).value; }, p, 1e-6);
  EXPECT_LT(oracle::relative_error(var.grad(), fd), 1e-4);
  EXPECT_LT(oracle::relative_error(bce_grad(p, t), fd), 1e-4);
}

TEST(LossGradients, MultiDiceMatchesFiniteDifferences) {
  torch::manual_seed(8);
  const torch::Tensor logits = torch::randn({2, 6, 6, 3}, torch::kDouble);
  const torch::Tensor tl = binary_target(2, 6, 6), tr = binary_target(2, 6, 6);

  // Through softmax, so every probe keeps the sum-to-one precondition.
  const torch::Tensor var = logits.clone().requires_grad_(true);
  multi_dice_loss(torch::softmax(var, 3), tl, tr).tensor.backward();
  const torch::Tensor fd = oracle::finite_difference(
      [&](const torch::Tensor& z) { return multi_dice_loss(torch::softmax(z, 3), tl, tr).value; }, logits, 1e-6);
  EXPECT_LT(oracle::relative_error(var.grad(), fd), 1e-4);

  // The closed form w.r.t. probabilities against the mean of two dice terms.
  const torch::Tensor probs = torch::softmax(logits, 3);
  const torch::Tensor fd_probs = oracle::finite_difference(
      [&](const torch::Tensor& q) {
        return 0.5 * (binary_dice_loss(q.select(3, 1), tl).value + binary_dice_loss(q.select(3, 2), tr).value);
      },
      probs, 1e-6);
  EXPECT_LT(oracle::relative_error(multi_dice_grad(probs, tl, tr), fd_probs), 1e-4);
}

}  // namespace
}  // namespace laneseg::losses
