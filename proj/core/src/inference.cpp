#include "laneseg/inference.hpp"
#include <cstring>
#include <tuple>

#include <opencv2/imgproc.hpp>
#include <torch/torch.h>

#include "laneseg/errors.hpp"

namespace laneseg {

namespace {

constexpr std::size_t kChunk = 8;

cv::Mat tensor_to_mask(const torch::Tensor& t) {
  const torch::Tensor c = t.to(torch::kUInt8).contiguous();
  cv::Mat m(static_cast<int>(c.size(0)), static_cast<int>(c.size(1)), CV_8UC1);
  std::memcpy(m.data, c.data_ptr<std::uint8_t>(), static_cast<std::size_t>(c.numel()));
  return m;
}

cv::Mat fit_to(const cv::Mat& mask, cv::Size size) {
  if (mask.size() == size) return mask;
  cv::Mat out;
  cv::resize(mask, out, size, 0, 0, cv::INTER_NEAREST);
  return out;
}

std::vector<PredictedMasks> predict_images(const models::ModelGraph& model, const std::vector<cv::Mat>& images,
                                           double threshold) {
  const auto& cfg = model.config();
  const cv::Size input(cfg.input_width, cfg.input_height);
  std::vector<torch::Tensor> items;
  for (const auto& img : images) {
    if (img.type() != CV_32FC3) throw ShapeError("predict expects CV_32FC3 RGB images");
    cv::Mat x = img;
    if (x.size() != input) cv::resize(img, x, input, 0, 0, cv::INTER_LINEAR);
    if (!x.isContinuous()) x = x.clone();
    items.push_back(torch::from_blob(x.data, {x.rows, x.cols, 3}, torch::kFloat32).clone());
  }
  const torch::NoGradGuard no_grad;
  const torch::Tensor out = model.forward_nchw(torch::stack(items).permute({0, 3, 1, 2}).contiguous());

  std::vector<PredictedMasks> result;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto idx = static_cast<std::int64_t>(i);
    PredictedMasks p;
    if (model.arch() == models::Arch::kFpn) {
      const torch::Tensor cls = out[idx].argmax(0);
      p.left = tensor_to_mask(cls == 1);
      p.right = tensor_to_mask(cls == 2);
      p.lane = union_of(p.left, p.right);
    } else {
      p.lane = tensor_to_mask(out[idx][0] >= threshold);
      std::tie(p.left, p.right) = split_union_mask(p.lane);
    }
    const cv::Size original = images[i].size();
    p.left = fit_to(p.left, original);
    p.right = fit_to(p.right, original);
    p.lane = fit_to(p.lane, original);
    result.push_back(std::move(p));
  }
  return result;
}

}  // namespace

PredictedMasks predict(const models::ModelGraph& model, const cv::Mat& image_rgb, double threshold) {
  return predict_images(model, {image_rgb}, threshold).front();
}

std::vector<PredictedMasks> predict_batch(const models::ModelGraph& model, std::span<const Sample> samples,
                                          double threshold) {
  std::vector<PredictedMasks> out;
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    std::vector<cv::Mat> images;
    for (std::size_t i = start; i < std::min(samples.size(), start + kChunk); ++i) {
      images.push_back(samples[i].image);
    }
    for (auto& p : predict_images(model, images, threshold)) out.push_back(std::move(p));
  }
  return out;
}

Evaluation evaluate_predictions(std::span<const PredictedMasks> predictions, std::span<const Sample> samples) {
  if (predictions.size() != samples.size()) throw ShapeError("one prediction per sample is required");
  Evaluation ev;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ev.pixels += metrics::confusion(predictions[i].lane, samples[i].mask_union);
    ev.lanes.push_back({metrics::mask_iou(predictions[i].left, samples[i].mask_left),
                        metrics::mask_iou(predictions[i].right, samples[i].mask_right)});
  }
  return ev;
}

Evaluation evaluate(const models::ModelGraph& model, std::span<const Sample> samples, double threshold) {
  const auto predictions = predict_batch(model, samples, threshold);
  return evaluate_predictions(predictions, samples);
}

}  // namespace laneseg
