#include <gtest/gtest.h>

#include "laneseg/errors.hpp"
#include "laneseg/inference.hpp"
#include "laneseg/synth.hpp"

namespace laneseg {
namespace {

models::ModelConfig tiny(models::Arch arch) {
  models::ModelConfig c = models::ModelConfig::defaults(arch);
  c.input_height = 32;
  c.input_width = 32;
  c.base_width = 4;
  c.pyramid_channels = 16;
  c.head_channels = 8;
  return c;
}

TEST(Evaluate, PerfectPredictionsScoreOne) {
  std::vector<Sample> samples;
  std::vector<PredictedMasks> preds;
  for (std::uint64_t s = 0; s < 3; ++s) {
    samples.push_back(synth::generate_scene(s, synth::params_for_size({64, 48})).sample);
    preds.push_back({samples.back().mask_left, samples.back().mask_right, samples.back().mask_union});
  }
  const Evaluation ev = evaluate_predictions(preds, samples);
  const auto m = metrics::pixel_metrics(ev.pixels);
  EXPECT_DOUBLE_EQ(m.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(m.iou_fg, 1.0);
  EXPECT_DOUBLE_EQ(m.iou_mean, 1.0);
  const auto f = metrics::frame_lane_accuracy(ev.lanes);
  EXPECT_EQ(f.both_detected, 3);
  EXPECT_THROW(evaluate_predictions(std::span(preds).first(2), samples), ShapeError);
}

TEST(Predict, MasksComeBackAtSourceSize) {
  for (auto arch : {models::Arch::kFpn, models::Arch::kUnetAttention}) {
    torch::manual_seed(0);
    const auto model = models::build_model(tiny(arch));
    const Sample s = synth::generate_scene(1, synth::params_for_size({80, 64})).sample;
    const PredictedMasks p = predict(model, s.image);
    for (const cv::Mat* m : {&p.left, &p.right, &p.lane}) {
      EXPECT_EQ(m->size(), s.image.size());
      EXPECT_EQ(m->type(), CV_8UC1);
      EXPECT_EQ(cv::countNonZero((*m != 0) & (*m != 1)), 0);
    }
    EXPECT_EQ(cv::countNonZero(p.lane != (p.left | p.right)), 0);
  }
}

TEST(Predict, BatchMatchesSingle) {
  torch::manual_seed(0);
  const auto model = models::build_model(tiny(models::Arch::kUnetAttention));
  std::vector<Sample> samples;
  for (std::uint64_t s = 0; s < 10; ++s) samples.push_back(synth::generate_scene(s, synth::params_for_size({32, 32})).sample);
  const auto batch = predict_batch(model, samples);
  ASSERT_EQ(batch.size(), 10u);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const PredictedMasks one = predict(model, samples[i].image);
    EXPECT_EQ(cv::countNonZero(one.lane != batch[i].lane), 0) << i;
  }
}

}  // namespace
}  // namespace laneseg
