#include "laneseg/models.hpp"

#include <numeric>
#include <sstream>

#include "laneseg/errors.hpp"

namespace F = torch::nn::functional;
using nlohmann::json;

namespace laneseg::models {

namespace {

torch::nn::Conv2d conv(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride = 1) {
  return torch::nn::Conv2d(
      torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2).bias(true));
}

torch::Tensor resize_bilinear(const torch::Tensor& x, std::int64_t h, std::int64_t w) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<std::int64_t>{h, w})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

torch::Tensor resize_nearest(const torch::Tensor& x, std::int64_t h, std::int64_t w) {
  return F::interpolate(
      x, F::InterpolateFuncOptions().size(std::vector<std::int64_t>{h, w}).mode(torch::kNearest));
}

int required_divisor(Arch arch) { return arch == Arch::kFpn ? 32 : 16; }

}  // namespace

std::string to_string(Arch arch) { return arch == Arch::kFpn ? "fpn" : "unet_attn"; }

Arch parse_arch(const std::string& text) {
  if (text == "fpn") return Arch::kFpn;
  if (text == "unet_attn") return Arch::kUnetAttention;
  throw ConfigError("unknown architecture '" + text + "' (expected fpn or unet_attn)");
}

ModelConfig ModelConfig::defaults(Arch arch) {
  ModelConfig c;
  c.arch = arch;
  if (arch == Arch::kFpn) {
    c.input_height = 224;
    c.input_width = 224;
    c.num_classes = 3;
  } else {
    c.input_height = 256;
    c.input_width = 320;
    c.num_classes = 1;
  }
  return c;
}

void validate(const ModelConfig& c) {
  const int div = required_divisor(c.arch);
  if (c.input_height <= 0 || c.input_width <= 0 || c.input_height % div != 0 || c.input_width % div != 0) {
    throw ConfigError(to_string(c.arch) + " input size " + std::to_string(c.input_height) + "x" +
                      std::to_string(c.input_width) + " must be positive and divisible by " +
                      std::to_string(div));
  }
  const int classes = c.arch == Arch::kFpn ? 3 : 1;
  if (c.num_classes != classes) {
    throw ConfigError(to_string(c.arch) + " requires num_classes = " + std::to_string(classes));
  }
  if (c.base_width < 1 || c.pyramid_channels < 1 || c.head_channels < 1) {
    throw ConfigError("layer widths must be positive");
  }
  if (c.pretrained_encoder && (c.arch != Arch::kFpn || c.encoder_weights.empty())) {
    throw ConfigError("pretrained_encoder needs arch fpn and an encoder_weights path");
  }
}

json to_json(const ModelConfig& c) {
  return {{"arch", to_string(c.arch)},
          {"input_size", {c.input_height, c.input_width}},
          {"base_width", c.base_width},
          {"pyramid_channels", c.pyramid_channels},
          {"head_channels", c.head_channels},
          {"num_classes", c.num_classes},
          {"pretrained_encoder", c.pretrained_encoder},
          {"encoder_weights", c.encoder_weights}};
}

ModelConfig config_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("arch")) throw ConfigError("model config needs an 'arch' field");
  try {
    ModelConfig c = ModelConfig::defaults(parse_arch(doc.at("arch").get<std::string>()));
    if (doc.contains("input_size")) {
      const auto& size = doc.at("input_size");
      if (!size.is_array() || size.size() != 2) throw ConfigError("input_size must be [H, W]");
      c.input_height = size[0].get<int>();
      c.input_width = size[1].get<int>();
    }
    c.base_width = doc.value("base_width", c.base_width);
    c.pyramid_channels = doc.value("pyramid_channels", c.pyramid_channels);
    c.head_channels = doc.value("head_channels", c.head_channels);
    c.num_classes = doc.value("num_classes", c.num_classes);
    c.pretrained_encoder = doc.value("pretrained_encoder", c.pretrained_encoder);
    c.encoder_weights = doc.value("encoder_weights", c.encoder_weights);
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

DoubleConvImpl::DoubleConvImpl(std::int64_t in_channels, std::int64_t out_channels)
    : conv1_(register_module("conv1", conv(in_channels, out_channels, 3))),
      conv2_(register_module("conv2", conv(out_channels, out_channels, 3))) {}

torch::Tensor DoubleConvImpl::forward(const torch::Tensor& x) {
  return torch::relu(conv2_->forward(torch::relu(conv1_->forward(x))));
}

AttentionGateImpl::AttentionGateImpl(std::int64_t skip_channels, std::int64_t gate_channels,
                                     std::int64_t inter_channels)
    : theta_x_(register_module("theta_x", conv(skip_channels, inter_channels, 1))),
      phi_g_(register_module("phi_g", conv(gate_channels, inter_channels, 1))),
      psi_(register_module("psi", conv(inter_channels, 1, 1))) {}

torch::Tensor AttentionGateImpl::coefficients(const torch::Tensor& skip, const torch::Tensor& gate) {
  if (skip.dim() != 4 || gate.dim() != 4 || skip.size(0) != gate.size(0) ||
      skip.size(2) != gate.size(2) || skip.size(3) != gate.size(3)) {
    throw ShapeError("attention gate: skip and gate must be spatially aligned NCHW tensors");
  }
  if (forced_alpha_) {
    return torch::full({skip.size(0), 1, skip.size(2), skip.size(3)}, *forced_alpha_, skip.options());
  }
  return torch::sigmoid(psi_->forward(torch::relu(theta_x_->forward(skip) + phi_g_->forward(gate))));
}

torch::Tensor AttentionGateImpl::forward(const torch::Tensor& skip, const torch::Tensor& gate) {
  return skip * coefficients(skip, gate);
}

AttentionUNetImpl::AttentionUNetImpl(int base_width) {
  const std::int64_t c = base_width;
  const std::vector<std::int64_t> widths{c, 2 * c, 4 * c, 8 * c};
  std::int64_t prev = 3;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    encoder_.push_back(register_module("enc" + std::to_string(i + 1), DoubleConv(prev, widths[i])));
    prev = widths[i];
  }
  bottleneck_ = register_module("bottleneck", DoubleConv(prev, 16 * c));
  prev = 16 * c;

  gates_.resize(widths.size(), nullptr);
  decoder_.resize(widths.size(), nullptr);
  for (std::size_t k = widths.size(); k-- > 0;) {
    const std::int64_t w = widths[k];
    gates_[k] = register_module("gate" + std::to_string(k + 1),
                                AttentionGate(w, prev, std::max<std::int64_t>(1, w / 2)));
    decoder_[k] = register_module("dec" + std::to_string(k + 1), DoubleConv(prev + w, w));
    prev = w;
  }
  head_ = register_module("head", conv(c, 1, 1));

  // He-normal keeps activations alive through the normalisation-free stack.
  for (auto& m : modules(false)) {
    if (auto* cv = m->as<torch::nn::Conv2d>()) {
      torch::nn::init::kaiming_normal_(cv->weight, 0.0, torch::kFanIn, torch::kReLU);
      torch::nn::init::zeros_(cv->bias);
    }
  }
}

torch::Tensor AttentionUNetImpl::logits(const torch::Tensor& x) {
  std::vector<torch::Tensor> skips;
  torch::Tensor h = x;
  for (auto& stage : encoder_) {
    h = stage->forward(h);
    skips.push_back(h);
    h = F::max_pool2d(h, F::MaxPool2dFuncOptions(2));
  }
  h = bottleneck_->forward(h);
  for (std::size_t k = skips.size(); k-- > 0;) {
    const auto& skip = skips[k];
    const torch::Tensor up = resize_bilinear(h, skip.size(2), skip.size(3));
    const torch::Tensor gated = gates_[k]->forward(skip, up);
    h = decoder_[k]->forward(torch::cat({up, gated}, 1));
  }
  return head_->forward(h);
}

torch::Tensor AttentionUNetImpl::forward(const torch::Tensor& x) { return torch::sigmoid(logits(x)); }

const std::vector<std::int64_t>& PyramidEncoderImpl::channels() {
  static const std::vector<std::int64_t> ch{24, 40, 112, 320};
  return ch;
}

PyramidEncoderImpl::PyramidEncoderImpl() {
  stem_ = register_module("stem", torch::nn::Sequential(conv(3, 16, 3, 2), torch::nn::ReLU()));
  std::int64_t prev = 16;
  for (std::size_t i = 0; i < channels().size(); ++i) {
    const std::int64_t ch = channels()[i];
    stages_.push_back(register_module(
        "stage" + std::to_string(i + 1),
        torch::nn::Sequential(conv(prev, ch, 3, 2), torch::nn::ReLU(), conv(ch, ch, 3), torch::nn::ReLU())));
    prev = ch;
  }
}

std::vector<torch::Tensor> PyramidEncoderImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> features;
  torch::Tensor h = stem_->forward(x);
  for (auto& stage : stages_) {
    h = stage->forward(h);
    features.push_back(h);
  }
  return features;
}

FpnImpl::FpnImpl(int pyramid_channels, int head_channels, int num_classes) {
  encoder_ = register_module("encoder", PyramidEncoder());
  const auto& enc = PyramidEncoderImpl::channels();
  for (std::size_t i = 0; i < enc.size(); ++i) {
    laterals_.push_back(register_module("lateral" + std::to_string(i + 2), conv(enc[i], pyramid_channels, 1)));
  }
  for (std::size_t i = 0; i < enc.size(); ++i) {
    heads_.push_back(register_module("head" + std::to_string(i + 2), conv(pyramid_channels, head_channels, 3)));
  }
  classifier_ = register_module("classifier", conv(head_channels, num_classes, 1));
}

std::vector<torch::Tensor> FpnImpl::pyramid(const torch::Tensor& x) {
  const auto features = encoder_->forward(x);
  std::vector<torch::Tensor> levels(features.size());
  for (std::size_t k = features.size(); k-- > 0;) {
    torch::Tensor lateral = laterals_[k]->forward(features[k]);
    if (k + 1 < features.size()) {
      lateral = lateral + resize_nearest(levels[k + 1], lateral.size(2), lateral.size(3));
    }
    levels[k] = lateral;
  }
  return levels;
}

torch::Tensor FpnImpl::logits(const torch::Tensor& x) {
  const auto levels = pyramid(x);
  const std::int64_t h4 = levels[0].size(2);
  const std::int64_t w4 = levels[0].size(3);
  torch::Tensor merged;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    torch::Tensor y = torch::relu(heads_[k]->forward(levels[k]));
    if (k > 0) y = resize_bilinear(y, h4, w4);
    merged = merged.defined() ? merged + y : y;
  }
  return resize_bilinear(classifier_->forward(merged), x.size(2), x.size(3));
}

torch::Tensor FpnImpl::forward(const torch::Tensor& x) { return torch::softmax(logits(x), 1); }

// ---------------------------------------------------------------------------

ModelGraph::ModelGraph(ModelConfig config, std::shared_ptr<SegmentationNetImpl> net)
    : config_(std::move(config)), net_(std::move(net)) {}

torch::Tensor ModelGraph::forward_nchw(const torch::Tensor& images) const {
  const int div = required_divisor(config_.arch);
  if (images.dim() != 4 || images.size(1) != 3) {
    throw ShapeError("model input must be B x 3 x H x W");
  }
  if (images.size(2) % div != 0 || images.size(3) % div != 0) {
    throw ShapeError(to_string(config_.arch) + " input H and W must be divisible by " + std::to_string(div));
  }
  return net_->forward(images);
}

torch::Tensor ModelGraph::forward(const torch::Tensor& images_nhwc) const {
  if (images_nhwc.dim() != 4 || images_nhwc.size(3) != 3) {
    throw ShapeError("model input must be B x H x W x 3");
  }
  const torch::Tensor out = forward_nchw(images_nhwc.permute({0, 3, 1, 2}).contiguous());
  return out.permute({0, 2, 3, 1}).contiguous();
}

std::int64_t ModelGraph::parameter_count() const { return count_parameters(*net_); }

std::vector<LayerSummary> ModelGraph::summary() const {
  std::vector<LayerSummary> out;
  for (const auto& item : net_->named_parameters(true)) {
    LayerSummary s;
    s.name = item.key();
    s.shape = item.value().sizes().vec();
    s.count = item.value().numel();
    out.push_back(std::move(s));
  }
  return out;
}

std::string ModelGraph::summary_text() const {
  std::ostringstream os;
  std::int64_t total = 0;
  for (const auto& layer : summary()) {
    os << layer.name << " [";
    for (std::size_t i = 0; i < layer.shape.size(); ++i) os << (i ? "," : "") << layer.shape[i];
    os << "] " << layer.count << '\n';
    total += layer.count;
  }
  os << "total " << total << '\n';
  return os.str();
}

ModelGraph build_unet_attention(const ModelConfig& config) {
  if (config.arch != Arch::kUnetAttention) throw ConfigError("build_unet_attention needs arch unet_attn");
  validate(config);
  return ModelGraph(config, std::make_shared<AttentionUNetImpl>(config.base_width));
}

ModelGraph build_fpn(const ModelConfig& config) {
  if (config.arch != Arch::kFpn) throw ConfigError("build_fpn needs arch fpn");
  validate(config);
  auto net = std::make_shared<FpnImpl>(config.pyramid_channels, config.head_channels, config.num_classes);
  if (config.pretrained_encoder) {
    try {
      torch::serialize::InputArchive archive;
      archive.load_from(config.encoder_weights);
      net->encoder()->load(archive);
    } catch (const c10::Error& e) {
      throw ConfigError("cannot load encoder weights '" + config.encoder_weights + "': " + e.what_without_backtrace());
    }
  }
  return ModelGraph(config, net);
}

ModelGraph build_model(const ModelConfig& config) {
  return config.arch == Arch::kFpn ? build_fpn(config) : build_unet_attention(config);
}

std::int64_t count_parameters(const torch::nn::Module& module) {
  std::int64_t total = 0;
  for (const auto& p : module.parameters(true)) {
    if (p.requires_grad()) total += p.numel();
  }
  return total;
}

std::int64_t count_parameters(const ModelGraph& model) { return model.parameter_count(); }

}  // namespace laneseg::models
