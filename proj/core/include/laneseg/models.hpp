#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace laneseg::models {

enum class Arch { kFpn, kUnetAttention };

std::string to_string(Arch arch);
/// Accepts "fpn" and "unet_attn".
Arch parse_arch(const std::string& text);

/// Architecture selection and geometry.
struct ModelConfig {
  Arch arch = Arch::kUnetAttention;
  int input_height = 256;
  int input_width = 320;
  /// U-Net encoder width C; stages are C, 2C, 4C, 8C and the bottleneck 16C.
  int base_width = 44;
  int pyramid_channels = 256;
  int head_channels = 128;
  int num_classes = 1;
  bool pretrained_encoder = false;
  /// libtorch archive with encoder weights, required when pretrained_encoder is set.
  std::string encoder_weights;

  /// Per-architecture defaults: fpn 224x224 / 3 classes, unet_attn 256x320 / 1 class.
  static ModelConfig defaults(Arch arch);

  bool operator==(const ModelConfig&) const = default;
};

/// Throws ConfigError for indivisible input sizes or wrong class counts.
void validate(const ModelConfig& config);

nlohmann::json to_json(const ModelConfig& config);
/// Missing keys fall back to the defaults of the given arch.
ModelConfig config_from_json(const nlohmann::json& doc);

// ---------------------------------------------------------------------------
// Building blocks (NCHW tensors)
// ---------------------------------------------------------------------------

/// Two 3x3 same-padding convolutions, each followed by ReLU.
class DoubleConvImpl : public torch::nn::Module {
 public:
  DoubleConvImpl(std::int64_t in_channels, std::int64_t out_channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
};
TORCH_MODULE(DoubleConv);

/// Additive attention gate on a U-Net skip connection.
///
///   alpha = sigmoid(psi(relu(W_x skip + W_g gate)))
///   out   = skip * alpha   (alpha broadcast over channels)
///
/// W_x, W_g and psi are 1x1 convolutions; W_x and W_g project to
/// `inter_channels`, psi to a single channel. `gate` must already have the
/// spatial size of `skip`.
class AttentionGateImpl : public torch::nn::Module {
 public:
  AttentionGateImpl(std::int64_t skip_channels, std::int64_t gate_channels,
                    std::int64_t inter_channels);

  torch::Tensor forward(const torch::Tensor& skip, const torch::Tensor& gate);

  /// Gating coefficients, B x 1 x h x w in (0,1).
  torch::Tensor coefficients(const torch::Tensor& skip, const torch::Tensor& gate);

  /// Test hook: replace the learned coefficients with a constant.
  void force_alpha(std::optional<double> value) { forced_alpha_ = value; }

 private:
  torch::nn::Conv2d theta_x_{nullptr};
  torch::nn::Conv2d phi_g_{nullptr};
  torch::nn::Conv2d psi_{nullptr};
  std::optional<double> forced_alpha_;
};
TORCH_MODULE(AttentionGate);

/// Common interface of both segmentation networks. forward() maps
/// B x 3 x H x W images to per-pixel probabilities B x K x H x W.
class SegmentationNetImpl : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(const torch::Tensor& x) = 0;
  /// Pre-activation scores, same shape as forward().
  virtual torch::Tensor logits(const torch::Tensor& x) = 0;
};

class AttentionUNetImpl : public SegmentationNetImpl {
 public:
  explicit AttentionUNetImpl(int base_width);

  torch::Tensor forward(const torch::Tensor& x) override;
  torch::Tensor logits(const torch::Tensor& x) override;

  AttentionGate gate(int level) const { return gates_.at(level); }

 private:
  std::vector<DoubleConv> encoder_;
  DoubleConv bottleneck_{nullptr};
  std::vector<AttentionGate> gates_;  // index 0 = finest level
  std::vector<DoubleConv> decoder_;
  torch::nn::Conv2d head_{nullptr};
};

/// Small randomly initialised encoder with output strides {4, 8, 16, 32}.
class PyramidEncoderImpl : public torch::nn::Module {
 public:
  PyramidEncoderImpl();

  /// Feature maps at strides 4, 8, 16, 32 (finest first).
  std::vector<torch::Tensor> forward(const torch::Tensor& x);

  static const std::vector<std::int64_t>& channels();

 private:
  torch::nn::Sequential stem_{nullptr};
  std::vector<torch::nn::Sequential> stages_;
};
TORCH_MODULE(PyramidEncoder);

class FpnImpl : public SegmentationNetImpl {
 public:
  FpnImpl(int pyramid_channels, int head_channels, int num_classes);

  torch::Tensor forward(const torch::Tensor& x) override;
  torch::Tensor logits(const torch::Tensor& x) override;

  /// Top-down pyramid levels P2..P5 (strides 4..32), finest first.
  std::vector<torch::Tensor> pyramid(const torch::Tensor& x);

  PyramidEncoder encoder() const { return encoder_; }
  torch::nn::Conv2d classifier() const { return classifier_; }

 private:
  PyramidEncoder encoder_{nullptr};
  std::vector<torch::nn::Conv2d> laterals_;
  std::vector<torch::nn::Conv2d> heads_;
  torch::nn::Conv2d classifier_{nullptr};
};

/// Per-parameter line of an architecture summary.
struct LayerSummary {
  std::string name;
  std::vector<std::int64_t> shape;
  std::int64_t count = 0;
};

/// A constructed network together with its configuration.
///
/// Copies share the underlying module.
class ModelGraph {
 public:
  ModelGraph(ModelConfig config, std::shared_ptr<SegmentationNetImpl> net);

  const ModelConfig& config() const { return config_; }
  Arch arch() const { return config_.arch; }

  /// B x H x W x 3 images -> B x H x W x K probabilities.
  torch::Tensor forward(const torch::Tensor& images_nhwc) const;
  torch::Tensor forward_nchw(const torch::Tensor& images_nchw) const;

  std::int64_t parameter_count() const;
  std::vector<LayerSummary> summary() const;
  std::string summary_text() const;

  SegmentationNetImpl& net() const { return *net_; }
  std::shared_ptr<SegmentationNetImpl> net_ptr() const { return net_; }

 private:
  ModelConfig config_;
  std::shared_ptr<SegmentationNetImpl> net_;
};

ModelGraph build_unet_attention(const ModelConfig& config);
ModelGraph build_fpn(const ModelConfig& config);
ModelGraph build_model(const ModelConfig& config);

/// Total trainable scalar parameters.
std::int64_t count_parameters(const torch::nn::Module& module);
std::int64_t count_parameters(const ModelGraph& model);

}  // namespace laneseg::models
