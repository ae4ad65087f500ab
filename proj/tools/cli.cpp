#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <regex>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/videoio.hpp>
#include <torch/torch.h>

#include "laneseg/data.hpp"
#include "laneseg/errors.hpp"
#include "laneseg/inference.hpp"
#include "laneseg/metrics.hpp"
#include "laneseg/models.hpp"
#include "laneseg/overlay.hpp"
#include "laneseg/synth.hpp"
#include "laneseg/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace laneseg::cli {

namespace {

/// Thrown for bad flag values discovered after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed config '" + path.string() + "': " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

cv::Size parse_size(const std::string& text) {
  static const std::regex pattern(R"((\d+)x(\d+))");
  std::smatch m;
  if (!std::regex_match(text, m, pattern)) throw UsageError("--size must look like HxW, got '" + text + "'");
  return {std::stoi(m[2]), std::stoi(m[1])};
}

RowBand parse_band(const std::string& text) {
  static const std::regex pattern(R"(([0-9.]+),([0-9.]+))");
  std::smatch m;
  if (!std::regex_match(text, m, pattern)) throw UsageError("--band must look like LO,HI, got '" + text + "'");
  RowBand band{std::stod(m[1]), std::stod(m[2])};
  if (!(band.lo >= 0.0 && band.lo < band.hi && band.hi <= 1.0)) {
    throw UsageError("--band needs 0 <= LO < HI <= 1");
  }
  return band;
}

/// Model config: arch defaults, then the config file's "model" object, then flags.
models::ModelConfig resolve_model_config(const std::string& arch_flag, const json& file) {
  json doc = file.contains("model") ? file.at("model") : json::object();
  if (!doc.is_object()) throw ConfigError("config 'model' must be an object");
  std::string arch = arch_flag;
  if (arch.empty()) {
    if (!doc.contains("arch")) throw UsageError("--arch is required");
    arch = doc.at("arch").get<std::string>();
  }
  doc["arch"] = arch;
  const models::ModelConfig cfg = models::config_from_json(doc);
  models::validate(cfg);
  return cfg;
}

std::string stem_of(const std::string& relative) { return fs::path(relative).stem().string(); }

void set_threads(int workers) {
  if (workers < 1) throw UsageError("--workers must be >= 1");
  at::set_num_threads(workers);
}

// ---------------------------------------------------------------------------

struct ExtractArgs {
  std::string video;
  std::string out;
  int stride = 1;
};

int do_extract(const ExtractArgs& a, std::ostream& out) {
  const std::size_t n = extract_frames(a.video, a.out, a.stride);
  out << "extracted " << n << " frames to " << a.out << '\n';
  return kExitOk;
}

struct SynthArgs {
  int n = 0;
  std::string out;
  std::uint64_t seed = 0;
  std::string size;
  double val_fraction = 0.1;
};

int do_synth(const SynthArgs& a, std::ostream& out) {
  synth::SceneParams params;
  if (!a.size.empty()) params = synth::params_for_size(parse_size(a.size));
  synth::DatasetOptions options;
  options.val_fraction = a.val_fraction;
  const DatasetManifest m = synth::generate_dataset(a.seed, a.n, params, a.out, options);
  const SplitCounts c = m.counts();
  out << "wrote " << m.entries.size() << " scenes (" << c.train << " train / " << c.val << " val) to " << a.out
      << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string arch;
  std::string data;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<int> max_steps;
  std::optional<double> lr;
  std::optional<std::string> loss;
  std::optional<std::string> augment;
  int workers = 1;
};

int do_train(const TrainArgs& a, std::ostream& out) {
  set_threads(a.workers);
  const json file = a.config.empty() ? json::object() : read_json_file(a.config);
  const models::ModelConfig mc = resolve_model_config(a.arch, file);

  train::TrainConfig tc = train::TrainConfig::defaults(mc.arch);
  if (file.contains("train")) tc = train::config_from_json(file.at("train"), tc);
  if (a.seed) tc.seed = *a.seed;
  if (a.epochs) tc.epochs = *a.epochs;
  if (a.batch_size) tc.batch_size = *a.batch_size;
  if (a.max_steps) tc.max_steps = *a.max_steps;
  if (a.lr) tc.learning_rate = *a.lr;
  if (a.loss) tc.loss = train::parse_loss(*a.loss);
  if (a.augment) {
    tc.augmentation = load_augmentation_spec(*a.augment);
    if (tc.augment_mode == train::AugmentMode::kNone) tc.augment_mode = train::AugmentMode::kOffline;
  }
  tc.workers = a.workers;
  train::validate(tc);

  const DatasetManifest manifest = load_manifest(a.data);
  torch::manual_seed(tc.seed);
  models::ModelGraph model = models::build_model(mc);
  out << models::to_string(mc.arch) << ": " << model.parameter_count() << " parameters\n";

  const train::CheckpointBundle bundle = train::train(model, manifest, tc, a.out);
  for (const auto& r : bundle.history) {
    out << "epoch " << r.epoch << " train_loss " << r.train_loss << " val_iou_fg " << r.val_iou_fg
        << " val_iou_mean " << r.val_iou_mean << '\n';
  }
  out << "checkpoints in " << (fs::path(a.out) / "best").string() << " and " << (fs::path(a.out) / "last").string()
      << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string ckpt;
  std::string pred;
  std::string data;
  std::string report;
  std::string split = "val";
  double tau = 0.5;
  double threshold = 0.5;
  int workers = 1;
};

std::vector<Sample> samples_for(const DatasetManifest& m, const std::string& split) {
  if (split == "all") {
    std::vector<Sample> out;
    for (const auto& e : m.entries) out.push_back(load_sample(m, e));
    return out;
  }
  try {
    return load_split(m, parse_split(split));
  } catch (const LoadError&) {
    throw UsageError("--split must be train, val or all");
  }
}

int do_eval(const EvalArgs& a, std::ostream& out) {
  set_threads(a.workers);
  if (a.ckpt.empty() == a.pred.empty()) throw UsageError("eval needs exactly one of --ckpt and --pred");
  if (!(a.tau > 0.0 && a.tau < 1.0)) throw UsageError("--tau must lie in (0,1)");
  const DatasetManifest manifest = load_manifest(a.data);
  std::vector<ManifestEntry> entries;
  if (a.split == "all") {
    entries = manifest.entries;
  } else {
    entries = manifest.split(a.split == "train" ? Split::kTrain : Split::kVal);
  }
  const std::vector<Sample> samples = samples_for(manifest, a.split);
  if (samples.empty()) throw ArgumentError("split '" + a.split + "' has no frames to evaluate");

  std::vector<PredictedMasks> predictions;
  if (!a.ckpt.empty()) {
    const train::CheckpointBundle bundle = train::load_checkpoint(a.ckpt);
    bundle.model.net().eval();
    predictions = predict_batch(bundle.model, samples, a.threshold);
  } else {
    for (const auto& e : entries) {
      const std::string stem = stem_of(e.frame);
      PredictedMasks p;
      p.left = read_mask(fs::path(a.pred) / (stem + "_left.png"));
      p.right = read_mask(fs::path(a.pred) / (stem + "_right.png"));
      p.lane = union_of(p.left, p.right);
      predictions.push_back(std::move(p));
    }
  }
  const Evaluation ev = evaluate_predictions(predictions, samples);
  const auto pixel = metrics::pixel_metrics(ev.pixels);
  const auto frame = metrics::frame_lane_accuracy(ev.lanes, a.tau);
  json report = metrics::report_to_json(pixel, frame);
  write_text(a.report, report.dump(2) + "\n");

  out << std::fixed << std::setprecision(4) << "accuracy " << pixel.accuracy << "  precision " << pixel.precision
      << "  recall " << pixel.recall << "  iou_fg " << pixel.iou_fg << "  iou_mean " << pixel.iou_mean << '\n'
      << "frames " << frame.total_frames << "  both lanes " << frame.both_detected << " ("
      << metrics::truncated_percent(frame.both_detected, frame.total_frames) << "%)  at least one "
      << frame.one_detected << " (" << metrics::truncated_percent(frame.one_detected, frame.total_frames)
      << "%)\n"
      << "report written to " << a.report << '\n';
  return kExitOk;
}

struct InferArgs {
  std::string ckpt;
  std::string input;
  std::string out;
  bool overlay = false;
  bool deviation = false;
  std::string band = "0.70,0.95";
  double alpha = 0.5;
  double threshold = 0.5;
  int workers = 1;
};

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

/// Calls `fn(id, rgb)` for every frame of a directory (sorted) or video.
template <typename Fn>
void for_each_frame(const fs::path& input, Fn&& fn) {
  if (fs::is_directory(input)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(input)) {
      if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IngestError("no image files in '" + input.string() + "'");
    for (const auto& f : files) fn(f.stem().string(), read_frame(f));
    return;
  }
  if (!fs::exists(input)) throw IngestError("input '" + input.string() + "' does not exist");
  if (is_image_file(input)) {
    fn(input.stem().string(), read_frame(input));
    return;
  }
  cv::VideoCapture capture(input.string());
  if (!capture.isOpened()) throw IngestError("cannot decode video '" + input.string() + "'");
  cv::Mat frame;
  int index = 0;
  char id[32];
  while (capture.read(frame) && !frame.empty()) {
    std::snprintf(id, sizeof(id), "frame_%06d", index++);
    fn(id, to_rgb_normalized(frame));
  }
  if (index == 0) throw EmptyVideoError("video '" + input.string() + "' contains no decodable frames");
}

int do_infer(const InferArgs& a, std::ostream& out) {
  set_threads(a.workers);
  const RowBand band = parse_band(a.band);
  if (!(a.alpha >= 0.0 && a.alpha <= 1.0)) throw UsageError("--alpha must lie in [0,1]");
  const train::CheckpointBundle bundle = train::load_checkpoint(a.ckpt);
  bundle.model.net().eval();
  const fs::path root(a.out);
  fs::create_directories(root / "masks");
  if (a.overlay) fs::create_directories(root / "overlay");

  std::ostringstream deviations;
  int frames = 0;
  int valid = 0;
  for_each_frame(a.input, [&](const std::string& id, const cv::Mat& rgb) {
    const PredictedMasks p = predict(bundle.model, rgb, a.threshold);
    write_mask(root / "masks" / (id + "_left.png"), p.left);
    write_mask(root / "masks" / (id + "_right.png"), p.right);
    write_mask(root / "masks" / (id + "_lane.png"), p.lane);
    if (a.overlay) {
      const cv::Mat composite = bundle.model.arch() == models::Arch::kFpn
                                    ? overlay(rgb, p.left, p.right, a.alpha)
                                    : overlay(rgb, p.lane, a.alpha);
      write_frame(root / "overlay" / (id + ".png"), composite);
    }
    if (a.deviation) {
      const DeviationRecord rec = center_deviation(p.left, p.right, band, rgb.cols, id);
      deviations << to_json(rec).dump() << '\n';
      valid += rec.valid ? 1 : 0;
    }
    ++frames;
  });
  if (a.deviation) write_text(root / "deviation.jsonl", deviations.str());
  out << "processed " << frames << " frames into " << a.out;
  if (a.deviation) out << " (" << valid << " with a valid deviation)";
  out << '\n';
  return kExitOk;
}

struct ParamsArgs {
  std::string arch;
  std::string config;
  bool summary = false;
};

int do_params(const ParamsArgs& a, std::ostream& out) {
  const json file = a.config.empty() ? json::object() : read_json_file(a.config);
  const models::ModelConfig mc = resolve_model_config(a.arch, file);
  const models::ModelGraph model = models::build_model(mc);
  if (a.summary) out << model.summary_text();
  out << models::to_string(mc.arch) << " parameters: " << models::count_parameters(model) << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lane segmentation toolkit", "laneseg"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  ExtractArgs ex;
  auto* extract = app.add_subcommand("extract", "Decode a video into PNG frames");
  extract->add_option("--video", ex.video, "Input video")->required();
  extract->add_option("--out", ex.out, "Output directory")->required();
  extract->add_option("--stride", ex.stride, "Keep every K-th frame")->check(CLI::PositiveNumber);

  SynthArgs sy;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic lane dataset");
  synth_cmd->add_option("--n", sy.n, "Number of scenes")->required()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--out", sy.out, "Output directory")->required();
  synth_cmd->add_option("--seed", sy.seed, "Random seed");
  synth_cmd->add_option("--size", sy.size, "Image size HxW (default 256x320)");
  synth_cmd->add_option("--val-fraction", sy.val_fraction, "Share of scenes routed to validation")
      ->check(CLI::Range(0.0, 1.0));

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset directory");
  train_cmd->add_option("--arch", tr.arch, "fpn or unet_attn")->check(CLI::IsMember({"fpn", "unet_attn"}));
  train_cmd->add_option("--data", tr.data, "Dataset directory or manifest")->required();
  train_cmd->add_option("--config", tr.config, "JSON config {\"model\":{...},\"train\":{...}}");
  train_cmd->add_option("--out", tr.out, "Checkpoint directory")->required();
  train_cmd->add_option("--seed", tr.seed, "Random seed");
  train_cmd->add_option("--epochs", tr.epochs, "Epochs")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch-size", tr.batch_size, "Batch size")->check(CLI::PositiveNumber);
  train_cmd->add_option("--max-steps", tr.max_steps, "Stop after this many steps")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--lr", tr.lr, "Learning rate")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--loss", tr.loss, "multi_dice or bce")->check(CLI::IsMember({"multi_dice", "bce"}));
  train_cmd->add_option("--augment", tr.augment, "Augmentation spec JSON");
  train_cmd->add_option("--workers", tr.workers, "Threads (1 = deterministic)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint or saved masks against a dataset");
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint directory");
  eval_cmd->add_option("--pred", ev.pred, "Directory of <frame>_left.png / <frame>_right.png masks");
  eval_cmd->add_option("--data", ev.data, "Dataset directory or manifest")->required();
  eval_cmd->add_option("--report", ev.report, "Report JSON path")->required();
  eval_cmd->add_option("--split", ev.split, "train, val or all")->check(CLI::IsMember({"train", "val", "all"}));
  eval_cmd->add_option("--tau", ev.tau, "Per-lane IoU threshold");
  eval_cmd->add_option("--threshold", ev.threshold, "Probability threshold (unet_attn)");
  eval_cmd->add_option("--workers", ev.workers, "Threads");

  InferArgs in;
  auto* infer_cmd = app.add_subcommand("infer", "Predict masks, overlays and centre deviation");
  infer_cmd->add_option("--ckpt", in.ckpt, "Checkpoint directory")->required();
  infer_cmd->add_option("--input", in.input, "Frame directory, image or video")->required();
  infer_cmd->add_option("--out", in.out, "Output directory")->required();
  infer_cmd->add_flag("--overlay", in.overlay, "Write overlay frames");
  infer_cmd->add_flag("--deviation", in.deviation, "Write deviation.jsonl");
  infer_cmd->add_option("--band", in.band, "Measurement rows as fractions LO,HI");
  infer_cmd->add_option("--alpha", in.alpha, "Overlay opacity");
  infer_cmd->add_option("--threshold", in.threshold, "Probability threshold (unet_attn)");
  infer_cmd->add_option("--workers", in.workers, "Threads");

  ParamsArgs pa;
  auto* params_cmd = app.add_subcommand("params", "Report the parameter count of a model");
  params_cmd->add_option("--arch", pa.arch, "fpn or unet_attn")->check(CLI::IsMember({"fpn", "unet_attn"}));
  params_cmd->add_option("--config", pa.config, "JSON config with a \"model\" object");
  params_cmd->add_flag("--summary", pa.summary, "Print every parameter tensor");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*extract) return do_extract(ex, out);
    if (*synth_cmd) return do_synth(sy, out);
    if (*train_cmd) return do_train(tr, out);
    if (*eval_cmd) return do_eval(ev, out);
    if (*infer_cmd) return do_infer(in, out);
    if (*params_cmd) return do_params(pa, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace laneseg::cli
