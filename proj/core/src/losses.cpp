#include "laneseg/losses.hpp"

#include "laneseg/errors.hpp"

using torch::autograd::AutogradContext;
using torch::autograd::variable_list;

namespace laneseg::losses {

namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) throw ShapeError(std::string(what) + ": prediction and target shapes differ");
}

void check_probabilities(const torch::Tensor& pred, const char* what) {
  if ((pred < 0).any().item<bool>() || (pred > 1).any().item<bool>()) {
    throw DomainError(std::string(what) + ": predictions must lie in [0,1]");
  }
}

void check_binary(const torch::Tensor& target, const char* what) {
  if (((target != 0) & (target != 1)).any().item<bool>()) {
    throw DomainError(std::string(what) + ": targets must be binary");
  }
}

void check_bhw(const torch::Tensor& t, const char* what) {
  if (t.dim() != 3) throw ShapeError(std::string(what) + ": expected a B x H x W tensor");
}

/// Per-item dice loss, shape [B].
torch::Tensor dice_per_item(const torch::Tensor& pred, const torch::Tensor& target, double eps) {
  const torch::Tensor inter = (pred * target).sum({1, 2});
  const torch::Tensor total = pred.sum({1, 2}) + target.sum({1, 2});
  return 1.0 - (2.0 * inter + eps) / (total + eps);
}

struct DiceFunction : public torch::autograd::Function<DiceFunction> {
  static torch::Tensor forward(AutogradContext* ctx, const torch::Tensor& pred,
                               const torch::Tensor& target, double eps) {
    ctx->save_for_backward({pred, target});
    ctx->saved_data["eps"] = eps;
    return dice_per_item(pred, target, eps).mean();
  }

  static variable_list backward(AutogradContext* ctx, variable_list grad_output) {
    const auto saved = ctx->get_saved_variables();
    const double eps = ctx->saved_data["eps"].toDouble();
    return {binary_dice_grad(saved[0], saved[1], eps) * grad_output[0], torch::Tensor(),
            torch::Tensor()};
  }
};

torch::Tensor bce_value(const torch::Tensor& pred, const torch::Tensor& target) {
  const torch::Tensor p = pred.clamp(kBceClamp, 1.0 - kBceClamp);
  return -(target * p.log() + (1.0 - target) * (1.0 - p).log()).mean();
}

struct BceFunction : public torch::autograd::Function<BceFunction> {
  static torch::Tensor forward(AutogradContext* ctx, const torch::Tensor& pred,
                               const torch::Tensor& target) {
    ctx->save_for_backward({pred, target});
    return bce_value(pred, target);
  }

  static variable_list backward(AutogradContext* ctx, variable_list grad_output) {
    const auto saved = ctx->get_saved_variables();
    return {bce_grad(saved[0], saved[1]) * grad_output[0], torch::Tensor()};
  }
};

LossValue make_value(torch::Tensor tensor, std::map<std::string, double> components) {
  LossValue v;
  v.value = tensor.item<double>();
  v.tensor = std::move(tensor);
  v.components = std::move(components);
  return v;
}

}  // namespace

torch::Tensor binary_dice_grad(const torch::Tensor& pred, const torch::Tensor& target, double eps) {
  const torch::NoGradGuard no_grad;
  // L_b = 1 - (2 I + eps) / (S + eps), I = sum p t, S = sum p + sum t.
  // dL_b/dp = -(2 t (S + eps) - (2 I + eps)) / (S + eps)^2, averaged over B.
  const auto batch = static_cast<double>(pred.size(0));
  const torch::Tensor inter = (pred * target).sum({1, 2}, true);
  const torch::Tensor denom = pred.sum({1, 2}, true) + target.sum({1, 2}, true) + eps;
  return -(2.0 * target * denom - (2.0 * inter + eps)) / (denom * denom) / batch;
}

torch::Tensor multi_dice_grad(const torch::Tensor& pred, const torch::Tensor& target_left,
                              const torch::Tensor& target_right, double eps) {
  const torch::NoGradGuard no_grad;
  torch::Tensor grad = torch::zeros_like(pred);
  grad.select(3, 1).copy_(0.5 * binary_dice_grad(pred.select(3, 1), target_left, eps));
  grad.select(3, 2).copy_(0.5 * binary_dice_grad(pred.select(3, 2), target_right, eps));
  return grad;
}

torch::Tensor bce_grad(const torch::Tensor& pred, const torch::Tensor& target) {
  const torch::NoGradGuard no_grad;
  const auto n = static_cast<double>(pred.numel());
  const torch::Tensor p = pred.clamp(kBceClamp, 1.0 - kBceClamp);
  const torch::Tensor inside = (pred >= kBceClamp) & (pred <= 1.0 - kBceClamp);
  const torch::Tensor g = (-(target / p) + (1.0 - target) / (1.0 - p)) / n;
  return g * inside.to(g.dtype());
}

LossValue binary_dice_loss(const torch::Tensor& pred, const torch::Tensor& target, double epsilon) {
  check_bhw(pred, "binary_dice_loss");
  check_same_shape(pred, target, "binary_dice_loss");
  if (!(epsilon > 0.0)) throw ArgumentError("binary_dice_loss: epsilon must be positive");
  check_probabilities(pred, "binary_dice_loss");
  check_binary(target, "binary_dice_loss");
  torch::Tensor value = DiceFunction::apply(pred, target.to(pred.dtype()), epsilon);
  const double v = value.item<double>();
  return make_value(std::move(value), {{"dice", v}});
}

LossValue multi_dice_loss(const torch::Tensor& pred, const torch::Tensor& target_left,
                          const torch::Tensor& target_right, double epsilon) {
  if (pred.dim() != 4 || pred.size(3) != 3) {
    throw ShapeError("multi_dice_loss: expected a B x H x W x 3 prediction");
  }
  const auto channel_sum = pred.detach().sum(3);
  if ((channel_sum - 1.0).abs().max().item<double>() > 1e-4) {
    throw DomainError("multi_dice_loss: class channels must sum to 1 per pixel");
  }
  const LossValue left = binary_dice_loss(pred.select(3, 1), target_left, epsilon);
  const LossValue right = binary_dice_loss(pred.select(3, 2), target_right, epsilon);
  torch::Tensor value = 0.5 * (left.tensor + right.tensor);
  return make_value(std::move(value), {{"dice_left", left.value}, {"dice_right", right.value}});
}

LossValue bce_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  check_same_shape(pred, target, "bce_loss");
  check_binary(target, "bce_loss");
  torch::Tensor value = BceFunction::apply(pred, target.to(pred.dtype()));
  const double v = value.item<double>();
  return make_value(std::move(value), {{"bce", v}});
}

}  // namespace laneseg::losses
