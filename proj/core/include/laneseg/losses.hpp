#pragma once

#include <map>
#include <string>

#include <torch/torch.h>

namespace laneseg::losses {

/// A differentiable scalar loss plus its named sub-terms.
struct LossValue {
  torch::Tensor tensor;  ///< 0-dim, carries the autograd graph
  double value = 0.0;
  std::map<std::string, double> components;
};

inline constexpr double kDiceSmoothing = 1.0;
inline constexpr double kBceClamp = 1e-7;

/// 1 - (2 sum(p t) + eps) / (sum p + sum t + eps) per batch item, averaged.
/// pred and target are B x H x W; pred must lie in [0,1].
LossValue binary_dice_loss(const torch::Tensor& pred, const torch::Tensor& target,
                           double epsilon = kDiceSmoothing);

/// Mean of the left and right dice losses of a B x H x W x 3 softmax output
/// with channel order (background, left, right).
LossValue multi_dice_loss(const torch::Tensor& pred, const torch::Tensor& target_left,
                          const torch::Tensor& target_right, double epsilon = kDiceSmoothing);

/// Mean binary cross-entropy with pred clamped to [1e-7, 1 - 1e-7].
LossValue bce_loss(const torch::Tensor& pred, const torch::Tensor& target);

// Closed-form gradients of each loss w.r.t. pred. The loss functions above
// use these in their backward pass.
torch::Tensor binary_dice_grad(const torch::Tensor& pred, const torch::Tensor& target,
                               double epsilon = kDiceSmoothing);
torch::Tensor multi_dice_grad(const torch::Tensor& pred, const torch::Tensor& target_left,
                              const torch::Tensor& target_right, double epsilon = kDiceSmoothing);
torch::Tensor bce_grad(const torch::Tensor& pred, const torch::Tensor& target);

}  // namespace laneseg::losses
