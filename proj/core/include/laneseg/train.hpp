#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "laneseg/augment.hpp"
#include "laneseg/losses.hpp"
#include "laneseg/data.hpp"
#include "laneseg/models.hpp"
#include "laneseg/sample.hpp"

namespace laneseg::train {

enum class LossKind { kMultiDice, kBce };
std::string to_string(LossKind kind);
LossKind parse_loss(const std::string& text);

enum class AugmentMode { kNone, kOffline, kOnline };
std::string to_string(AugmentMode mode);
AugmentMode parse_augment_mode(const std::string& text);

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 10;
  int batch_size = 8;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::kBce;
  /// Stop after this many optimisation steps (0 = run all epochs).
  int max_steps = 0;
  /// Intra-op threads; 1 is the bit-deterministic reference mode.
  int workers = 1;
  AugmentMode augment_mode = AugmentMode::kNone;
  std::optional<AugmentationSpec> augmentation;
  /// Augmented copies per training sample in offline mode.
  int augment_copies = 1;
  /// Probability threshold used for validation masks.
  double threshold = 0.5;

  /// fpn: multi-dice, 4 epochs; unet_attn: BCE, 10 epochs; both Adam 1e-4, batch 8.
  static TrainConfig defaults(models::Arch arch);
};

void validate(const TrainConfig& config);
nlohmann::json to_json(const TrainConfig& config);
/// Missing keys keep the values of `base`.
TrainConfig config_from_json(const nlohmann::json& doc, TrainConfig base);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double val_iou_fg = 0.0;
  double val_iou_mean = 0.0;
};

nlohmann::json to_json(const EpochRecord& record);

struct CheckpointBundle {
  models::ModelGraph model;
  TrainConfig train_config;
  int epoch = 0;
  std::vector<EpochRecord> history;
  /// Loss of every optimisation step; kept in memory only.
  std::vector<double> step_losses;
};

inline constexpr int kCheckpointVersion = 1;

/// Writes config.json, train_config.json, weights.bin and history.jsonl.
void save_checkpoint(const CheckpointBundle& bundle, const std::filesystem::path& dir);

/// Rebuilds the model from config.json and loads its weights.
/// Throws CorruptCheckpointError for unreadable or truncated files.
CheckpointBundle load_checkpoint(const std::filesystem::path& dir);

/// Loads weights into an existing model; ConfigMismatchError when the stored
/// ModelConfig differs from the model's.
void load_weights(models::ModelGraph& model, const std::filesystem::path& dir);

struct TrainingData {
  std::vector<Sample> train;
  std::vector<Sample> val;
};

/// Permutation of [0, n) for an epoch; a pure function of (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

/// Stacks sample images into a B x 3 x H x W float tensor.
torch::Tensor images_to_tensor(const std::vector<const Sample*>& batch);
/// Stacks one mask type into B x H x W float.
enum class MaskKind { kLeft, kRight, kUnion };
torch::Tensor masks_to_tensor(const std::vector<const Sample*>& batch, MaskKind kind);

/// Loss of `model` on a batch under `kind`.
losses::LossValue batch_loss(const models::ModelGraph& model, const std::vector<const Sample*>& batch,
                             LossKind kind);

/// Called after every optimisation step with (step index, loss).
using StepCallback = std::function<void(int, const losses::LossValue&)>;

/// Adam optimisation per `cfg`. Writes `out_dir/last` and `out_dir/best`
/// checkpoints when out_dir is non-empty. Returns the final state.
CheckpointBundle train(models::ModelGraph& model, const TrainingData& data, const TrainConfig& cfg,
                       const std::filesystem::path& out_dir, const StepCallback& on_step = {});

CheckpointBundle train(models::ModelGraph& model, const DatasetManifest& manifest,
                       const TrainConfig& cfg, const std::filesystem::path& out_dir,
                       const StepCallback& on_step = {});

}  // namespace laneseg::train
