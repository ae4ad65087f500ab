#pragma once

#include <span>
#include <vector>

#include <opencv2/core.hpp>

#include "laneseg/metrics.hpp"
#include "laneseg/models.hpp"
#include "laneseg/sample.hpp"

namespace laneseg {

/// Binary masks predicted for one frame.
struct PredictedMasks {
  cv::Mat left;
  cv::Mat right;
  cv::Mat lane;  ///< union
};

/// Runs the model on an RGB [0,1] image of the model's input size.
/// fpn: argmax over (background, left, right). unet_attn: probability >=
/// threshold, split into left/right by connected components.
PredictedMasks predict(const models::ModelGraph& model, const cv::Mat& image_rgb,
                       double threshold = 0.5);

std::vector<PredictedMasks> predict_batch(const models::ModelGraph& model,
                                          std::span<const Sample> samples, double threshold = 0.5);

struct Evaluation {
  metrics::ConfusionMatrix pixels;
  std::vector<metrics::LaneIou> lanes;
};

/// Scores predictions against the samples' union (pixels) and per-lane
/// masks (frame level).
Evaluation evaluate_predictions(std::span<const PredictedMasks> predictions,
                                std::span<const Sample> samples);

Evaluation evaluate(const models::ModelGraph& model, std::span<const Sample> samples,
                    double threshold = 0.5);

}  // namespace laneseg
