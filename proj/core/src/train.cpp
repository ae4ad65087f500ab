#include "laneseg/train.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "laneseg/errors.hpp"
#include "laneseg/inference.hpp"
#include "laneseg/losses.hpp"
#include "laneseg/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace laneseg::train {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  return splitmix64(a ^ splitmix64(b ^ splitmix64(c)));
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("missing checkpoint file '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw CorruptCheckpointError("malformed checkpoint file '" + path.string() + "': " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

double number_or_nan(const json& doc, const char* key) {
  return doc.contains(key) && doc.at(key).is_number() ? doc.at(key).get<double>() : nan();
}

models::ModelConfig read_model_config(const fs::path& dir) {
  const json doc = read_json(dir / "config.json");
  if (!doc.contains("version") || doc.at("version") != kCheckpointVersion) {
    throw LoadError("checkpoint '" + dir.string() + "' has an unsupported version");
  }
  try {
    return models::config_from_json(doc);
  } catch (const ConfigError& e) {
    throw CorruptCheckpointError("checkpoint '" + dir.string() + "': " + e.what());
  }
}

void load_archive_into(models::ModelGraph& model, const fs::path& weights) {
  if (!fs::exists(weights)) throw LoadError("missing checkpoint file '" + weights.string() + "'");
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(weights.string());
  } catch (const c10::Error& e) {
    throw CorruptCheckpointError("corrupt checkpoint weights '" + weights.string() +
                                 "': " + e.what_without_backtrace());
  }
  // Module::load resizes tensors to whatever the archive holds, so shapes
  // are compared explicitly.
  std::vector<std::pair<std::string, std::vector<std::int64_t>>> expected;
  for (const auto& p : model.net().named_parameters(true)) expected.emplace_back(p.key(), p.value().sizes().vec());
  try {
    model.net().load(archive);
  } catch (const c10::Error& e) {
    throw ConfigMismatchError("checkpoint weights '" + weights.string() +
                              "' do not fit the model: " + e.what_without_backtrace());
  }
  const auto loaded = model.net().named_parameters(true);
  for (const auto& [name, shape] : expected) {
    if (loaded[name].sizes().vec() != shape) {
      throw ConfigMismatchError("checkpoint weights '" + weights.string() + "': parameter '" + name +
                                "' has a different shape than the model");
    }
  }
}

}  // namespace

std::string to_string(LossKind kind) { return kind == LossKind::kMultiDice ? "multi_dice" : "bce"; }

LossKind parse_loss(const std::string& text) {
  if (text == "multi_dice") return LossKind::kMultiDice;
  if (text == "bce") return LossKind::kBce;
  throw ConfigError("unknown loss '" + text + "' (expected multi_dice or bce)");
}

std::string to_string(AugmentMode mode) {
  switch (mode) {
    case AugmentMode::kNone:
      return "none";
    case AugmentMode::kOffline:
      return "offline";
    case AugmentMode::kOnline:
      return "online";
  }
  return "none";
}

AugmentMode parse_augment_mode(const std::string& text) {
  if (text == "none") return AugmentMode::kNone;
  if (text == "offline") return AugmentMode::kOffline;
  if (text == "online") return AugmentMode::kOnline;
  throw ConfigError("unknown augment_mode '" + text + "'");
}

TrainConfig TrainConfig::defaults(models::Arch arch) {
  TrainConfig c;
  c.learning_rate = 1e-4;
  c.batch_size = 8;
  if (arch == models::Arch::kFpn) {
    c.epochs = 4;
    c.loss = LossKind::kMultiDice;
  } else {
    c.epochs = 10;
    c.loss = LossKind::kBce;
  }
  return c;
}

void validate(const TrainConfig& c) {
  if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) {
    throw ConfigError("learning_rate must be finite and non-negative");
  }
  if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (c.max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  if (c.augment_copies < 0) throw ConfigError("augment_copies must be >= 0");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0 && c.beta2 >= 0.0 && c.beta2 < 1.0 && c.adam_eps > 0.0)) {
    throw ConfigError("invalid Adam coefficients");
  }
  if (!(c.threshold > 0.0 && c.threshold < 1.0)) throw ConfigError("threshold must lie in (0,1)");
  if (c.augment_mode != AugmentMode::kNone && !c.augmentation) {
    throw ConfigError("augment_mode " + to_string(c.augment_mode) + " needs an augmentation spec");
  }
  if (c.augmentation) validate_spec(*c.augmentation);
}

json to_json(const TrainConfig& c) {
  return {{"optimizer", "adam"},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"loss", to_string(c.loss)},
          {"max_steps", c.max_steps},
          {"workers", c.workers},
          {"augment_mode", to_string(c.augment_mode)},
          {"augment_copies", c.augment_copies},
          {"augmentation", c.augmentation ? spec_to_json(*c.augmentation) : json(nullptr)},
          {"threshold", c.threshold}};
}

TrainConfig config_from_json(const json& doc, TrainConfig c) {
  if (!doc.is_object()) throw ConfigError("train config must be a JSON object");
  try {
    if (doc.contains("optimizer") && doc.at("optimizer") != "adam") {
      throw ConfigError("only the adam optimizer is supported");
    }
    c.learning_rate = doc.value("learning_rate", c.learning_rate);
    c.beta1 = doc.value("beta1", c.beta1);
    c.beta2 = doc.value("beta2", c.beta2);
    c.adam_eps = doc.value("adam_eps", c.adam_eps);
    c.epochs = doc.value("epochs", c.epochs);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.seed = doc.value("seed", c.seed);
    if (doc.contains("loss")) c.loss = parse_loss(doc.at("loss").get<std::string>());
    c.max_steps = doc.value("max_steps", c.max_steps);
    c.workers = doc.value("workers", c.workers);
    c.augment_copies = doc.value("augment_copies", c.augment_copies);
    c.threshold = doc.value("threshold", c.threshold);
    if (doc.contains("augmentation") && !doc.at("augmentation").is_null()) {
      c.augmentation = spec_from_json(doc.at("augmentation"));
      c.augment_mode = AugmentMode::kOffline;
    }
    if (doc.contains("augment_mode")) c.augment_mode = parse_augment_mode(doc.at("augment_mode").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed train config: ") + e.what());
  }
  return c;
}

json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"train_loss", r.train_loss},
          {"val_accuracy", r.val_accuracy},
          {"val_iou_fg", r.val_iou_fg},
          {"val_iou_mean", r.val_iou_mean}};
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const CheckpointBundle& bundle, const fs::path& dir) {
  try {
    fs::create_directories(dir);
  } catch (const fs::filesystem_error& e) {
    throw IoError("cannot create checkpoint directory '" + dir.string() + "': " + e.what());
  }
  json config = models::to_json(bundle.model.config());
  config["version"] = kCheckpointVersion;
  write_text(dir / "config.json", config.dump(2) + "\n");
  write_text(dir / "train_config.json", to_json(bundle.train_config).dump(2) + "\n");

  std::string history;
  for (const auto& r : bundle.history) history += to_json(r).dump() + "\n";
  write_text(dir / "history.jsonl", history);

  torch::serialize::OutputArchive archive;
  bundle.model.net().save(archive);
  archive.save_to((dir / "weights.bin").string());
}

CheckpointBundle load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw LoadError("checkpoint directory '" + dir.string() + "' not found");
  const models::ModelConfig config = read_model_config(dir);
  models::ModelGraph model = models::build_model(config);
  load_archive_into(model, dir / "weights.bin");

  CheckpointBundle bundle{model, TrainConfig::defaults(config.arch), 0, {}, {}};
  const fs::path tc = dir / "train_config.json";
  if (fs::exists(tc)) {
    try {
      bundle.train_config = config_from_json(read_json(tc), bundle.train_config);
    } catch (const ConfigError& e) {
      throw CorruptCheckpointError("checkpoint '" + dir.string() + "': " + e.what());
    }
  }
  std::ifstream hist(dir / "history.jsonl");
  std::string line;
  while (std::getline(hist, line)) {
    if (line.empty()) continue;
    json r;
    try {
      r = json::parse(line);
    } catch (const json::parse_error& e) {
      throw CorruptCheckpointError("malformed history in '" + dir.string() + "': " + e.what());
    }
    EpochRecord rec;
    rec.epoch = r.value("epoch", 0);
    rec.train_loss = number_or_nan(r, "train_loss");
    rec.val_accuracy = number_or_nan(r, "val_accuracy");
    rec.val_iou_fg = number_or_nan(r, "val_iou_fg");
    rec.val_iou_mean = number_or_nan(r, "val_iou_mean");
    bundle.history.push_back(rec);
  }
  bundle.epoch = bundle.history.empty() ? 0 : bundle.history.back().epoch;
  return bundle;
}

void load_weights(models::ModelGraph& model, const fs::path& dir) {
  const models::ModelConfig stored = read_model_config(dir);
  if (!(stored == model.config())) {
    throw ConfigMismatchError("checkpoint '" + dir.string() + "' was saved for a different model config");
  }
  load_archive_into(model, dir / "weights.bin");
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::uint64_t state = mix(seed, static_cast<std::uint64_t>(epoch), 0x5eedULL);
  for (std::size_t i = n; i > 1; --i) {
    state = splitmix64(state);
    const std::size_t j = static_cast<std::size_t>(state % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

torch::Tensor images_to_tensor(const std::vector<const Sample*>& batch) {
  std::vector<torch::Tensor> items;
  items.reserve(batch.size());
  for (const Sample* s : batch) {
    cv::Mat img = s->image.isContinuous() ? s->image : s->image.clone();
    items.push_back(torch::from_blob(img.data, {img.rows, img.cols, 3}, torch::kFloat32).clone());
  }
  return torch::stack(items).permute({0, 3, 1, 2}).contiguous();
}

torch::Tensor masks_to_tensor(const std::vector<const Sample*>& batch, MaskKind kind) {
  std::vector<torch::Tensor> items;
  items.reserve(batch.size());
  for (const Sample* s : batch) {
    const cv::Mat& m = kind == MaskKind::kLeft ? s->mask_left : kind == MaskKind::kRight ? s->mask_right : s->mask_union;
    cv::Mat mc = m.isContinuous() ? m : m.clone();
    items.push_back(torch::from_blob(mc.data, {mc.rows, mc.cols}, torch::kUInt8).to(torch::kFloat32));
  }
  return torch::stack(items);
}

losses::LossValue batch_loss(const models::ModelGraph& model, const std::vector<const Sample*>& batch,
                             LossKind kind) {
  const torch::Tensor out = model.forward_nchw(images_to_tensor(batch));
  if (kind == LossKind::kMultiDice) {
    if (out.size(1) != 3) throw ConfigError("multi_dice loss needs a 3-class model");
    return losses::multi_dice_loss(out.permute({0, 2, 3, 1}), masks_to_tensor(batch, MaskKind::kLeft),
                                   masks_to_tensor(batch, MaskKind::kRight));
  }
  if (out.size(1) != 1) throw ConfigError("bce loss needs a single-channel model");
  return losses::bce_loss(out.select(1, 0), masks_to_tensor(batch, MaskKind::kUnion));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

CheckpointBundle train(models::ModelGraph& model, const TrainingData& data, const TrainConfig& cfg,
                       const fs::path& out_dir, const StepCallback& on_step) {
  validate(cfg);
  if (data.train.empty()) throw ConfigError("training split is empty");
  at::set_num_threads(cfg.workers);
  torch::manual_seed(cfg.seed);

  const auto& mc = model.config();
  const cv::Size input(mc.input_width, mc.input_height);
  auto prepare = [&](const Sample& s) { return s.image.size() == input ? s : resize_pair(s, input); };

  std::vector<Sample> train_set;
  for (const auto& s : data.train) train_set.push_back(prepare(s));
  if (cfg.augment_mode == AugmentMode::kOffline) {
    const std::size_t originals = train_set.size();
    for (int copy = 0; copy < cfg.augment_copies; ++copy) {
      for (std::size_t i = 0; i < originals; ++i) {
        train_set.push_back(augment(train_set[i], *cfg.augmentation, mix(cfg.seed, copy + 1, i)));
      }
    }
  }
  std::vector<Sample> val_set;
  for (const auto& s : data.val) val_set.push_back(prepare(s));

  torch::optim::Adam optimizer(
      model.net().parameters(),
      torch::optim::AdamOptions(cfg.learning_rate).betas({cfg.beta1, cfg.beta2}).eps(cfg.adam_eps));

  const std::size_t n = train_set.size();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  // The trailing partial batch is dropped unless it is the only one.
  const std::size_t batches = n < bs ? 1 : n / bs;

  CheckpointBundle bundle{model, cfg, 0, {}, {}};
  double best_iou = -1.0;
  int step = 0;
  bool stop = false;
  for (int epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
    model.net().train();
    const auto order = epoch_order(n, cfg.seed, epoch);
    double loss_sum = 0.0;
    int loss_count = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<Sample> online;
      std::vector<const Sample*> batch;
      const std::size_t end = std::min(n, (b + 1) * bs);
      if (cfg.augment_mode == AugmentMode::kOnline) {
        for (std::size_t i = b * bs; i < end; ++i) {
          online.push_back(augment(train_set[order[i]], *cfg.augmentation, mix(cfg.seed, epoch, order[i])));
        }
        for (const auto& s : online) batch.push_back(&s);
      } else {
        for (std::size_t i = b * bs; i < end; ++i) batch.push_back(&train_set[order[i]]);
      }

      losses::LossValue loss = batch_loss(model, batch, cfg.loss);
      if (!std::isfinite(loss.value)) {
        std::ostringstream os;
        os << "non-finite loss at step " << step << " (epoch " << epoch << "):";
        for (const auto& [name, v] : loss.components) os << ' ' << name << '=' << v;
        throw NonFiniteLossError(os.str());
      }
      optimizer.zero_grad();
      loss.tensor.backward();
      optimizer.step();

      bundle.step_losses.push_back(loss.value);
      loss_sum += loss.value;
      ++loss_count;
      if (on_step) on_step(step, loss);
      ++step;
      if (cfg.max_steps > 0 && step >= cfg.max_steps) {
        stop = true;
        break;
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / std::max(1, loss_count);
    record.val_accuracy = record.val_iou_fg = record.val_iou_mean = nan();
    model.net().eval();
    if (!val_set.empty()) {
      const torch::NoGradGuard no_grad;
      const Evaluation ev = evaluate(model, val_set, cfg.threshold);
      const auto m = metrics::pixel_metrics(ev.pixels);
      record.val_accuracy = m.accuracy;
      record.val_iou_fg = m.iou_fg;
      record.val_iou_mean = m.iou_mean;
    }
    bundle.history.push_back(record);
    bundle.epoch = epoch;

    if (!out_dir.empty()) {
      save_checkpoint(bundle, out_dir / "last");
      const double score = std::isnan(record.val_iou_fg) ? 0.0 : record.val_iou_fg;
      if (score > best_iou || val_set.empty()) {
        best_iou = score;
        save_checkpoint(bundle, out_dir / "best");
      }
    }
  }
  return bundle;
}

CheckpointBundle train(models::ModelGraph& model, const DatasetManifest& manifest, const TrainConfig& cfg,
                       const fs::path& out_dir, const StepCallback& on_step) {
  TrainingData data;
  data.train = load_split(manifest, Split::kTrain);
  data.val = load_split(manifest, Split::kVal);
  if (data.train.empty()) throw ConfigError("manifest has an empty training split");
  return train(model, data, cfg, out_dir, on_step);
}

}  // namespace laneseg::train
