#include "tseg/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "tseg/network/checkpoint.hpp"

namespace tseg {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::Config, "config: invalid value '" + value + "' for " + key);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::Config, "config: invalid value '" + value + "' for " + key);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw Error(ErrorCode::Config, "config: invalid boolean '" + value + "' for " + key);
}

template <typename F>
auto in_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e);
  }
}

}  // namespace

PipelineConfig PipelineConfig::from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open config " + path.string());
  PipelineConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::Config, path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  if (key == "seed") master_seed = parse_number<std::uint64_t>(key, value);
  else if (key == "workers") workers = parse_number<int>(key, value);
  else if (key == "correction.enabled") correction_enabled = parse_bool(key, value);
  else if (key == "correction.sigma") correction.smoothing_sigma = parse_double(key, value);
  else if (key == "correction.iters") correction.iterations = parse_number<int>(key, value);
  else if (key == "correction.epsilon") correction.epsilon = parse_double(key, value);
  else if (key == "correction.max_step") correction.max_step = parse_double(key, value);
  else if (key == "augment.n") augmentation.n_deformations = parse_number<int>(key, value);
  else if (key == "augment.spacing") augmentation.spacing = parse_number<int>(key, value);
  else if (key == "augment.max_disp") augmentation.max_disp = parse_double(key, value);
  else if (key == "augment.seed") augment_seed = parse_number<std::uint64_t>(key, value);
  else if (key == "train.lr") train.learning_rate = parse_double(key, value);
  else if (key == "train.momentum") train.momentum = parse_double(key, value);
  else if (key == "train.epochs") train.epochs = parse_number<int>(key, value);
  else if (key == "train.seed") train_seed = parse_number<std::uint64_t>(key, value);
  else if (key == "train.max_iterations") train.max_iterations = parse_number<std::int64_t>(key, value);
  else if (key == "train.scale") {
    if (value == "full") train.architecture = nn::Architecture::full();
    else if (value == "desk") train.architecture = nn::Architecture::desk();
    else throw Error(ErrorCode::Config, "config: train.scale must be full or desk");
  } else if (key == "postprocess.gamma") postprocess.gamma = parse_number<int>(key, value);
  else if (key == "postprocess.flood_fill") postprocess.flood_fill = parse_bool(key, value);
  else throw Error(ErrorCode::Config, "config: unknown key '" + key + "'");
}

void PipelineConfig::validate() const {
  try {
    correction.validate();
    train.validate();
    postprocess.validate();
    if (augmentation.n_deformations < 0) throw Error(ErrorCode::InvalidArgument, "augment.n must be >= 0");
    if (augmentation.spacing <= 0) throw Error(ErrorCode::InvalidArgument, "augment.spacing must be > 0");
    if (!(augmentation.max_disp >= 0.0)) throw Error(ErrorCode::InvalidArgument, "augment.max_disp must be >= 0");
    if (workers < 1) throw Error(ErrorCode::InvalidArgument, "workers must be >= 1");
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, e.what());
  }
}

std::uint64_t PipelineConfig::augmentation_seed() const {
  return augment_seed ? *augment_seed : stage_seed(master_seed, "augment");
}

std::uint64_t PipelineConfig::training_seed() const {
  return train_seed ? *train_seed : stage_seed(master_seed, "train");
}

GrayImage correct_image(const GrayImage& img, const PipelineConfig& cfg) {
  if (!cfg.correction_enabled) return img;
  if (!(img.data() > 0.0f).any()) return img;  // nothing to correct in a black frame
  return correct_volume(ImageStack({img}), cfg.correction).plane(0);
}

TrainingStageResult run_training_stage(const PipelineConfig& cfg, const LabeledPairs& pairs,
                                       const nn::TrainObserver& observer) {
  in_stage("config", [&] { cfg.validate(); });
  if (pairs.empty()) throw StageError("load", Error(ErrorCode::EmptyDataset, "no training pairs"));

  const LabeledPairs corrected = in_stage("correct", [&] {
    LabeledPairs out;
    for (const auto& [img, mask] : pairs) out.emplace_back(correct_image(img, cfg), mask);
    return out;
  });

  const auto augmented = in_stage("augment", [&] {
    AugmentationConfig acfg = cfg.augmentation;
    acfg.rng_seed = cfg.augmentation_seed();
    return augment_dataset(corrected, acfg);
  });

  return in_stage("train", [&] {
    std::vector<std::pair<GrayImage, BinaryMask>> data;
    data.reserve(augmented.size());
    for (const auto& a : augmented) data.emplace_back(a.image, a.mask.binarize());
    nn::TrainConfig tcfg = cfg.train;
    tcfg.rng_seed = cfg.training_seed();
    nn::TrainResult r = nn::train(data, tcfg, observer);
    return TrainingStageResult{std::move(r.model), std::move(r.losses), augmented.size()};
  });
}

InstanceMask segment_image(const nn::Model<float>& model, const GrayImage& img, const PipelineConfig& cfg) {
  const GrayImage corrected = in_stage("correct", [&] { return correct_image(img, cfg); });
  const BinaryMask raw = in_stage("predict", [&] { return nn::predict(model, corrected); });
  return in_stage("postprocess", [&] { return postprocess(raw, cfg.postprocess); });
}

std::vector<InstanceMask> run_inference_stage(const PipelineConfig& cfg, const nn::Model<float>& model,
                                              const std::vector<GrayImage>& images) {
  in_stage("config", [&] { cfg.validate(); });
  std::vector<InstanceMask> out(images.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < images.size(); i = next++) {
      try {
        out[i] = segment_image(model, images[i], cfg);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), std::max<std::size_t>(images.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

Plane<std::uint8_t> overlay_rgb(const GrayImage& img, const InstanceMask& mask) {
  if (img.height() != mask.height() || img.width() != mask.width()) {
    throw Error(ErrorCode::ShapeMismatch, "overlay: image and mask shapes differ");
  }
  Plane<std::uint8_t> rgb(img.height(), 3 * img.width());
  for (Eigen::Index y = 0; y < img.height(); ++y) {
    for (Eigen::Index x = 0; x < img.width(); ++x) {
      const double g = 255.0 * img(y, x);
      double c[3] = {g, g, g};
      if (const auto l = mask(y, x); l > 0) {
        // Golden-angle hue spacing keeps neighbouring labels distinct.
        const double hue = std::fmod(l * 137.50776405, 360.0) / 60.0;
        const double f = hue - std::floor(hue);
        const double tint[6][3] = {{1, f, 0}, {1 - f, 1, 0}, {0, 1, f}, {0, 1 - f, 1}, {f, 0, 1}, {1, 0, 1 - f}};
        const auto* t = tint[static_cast<int>(hue) % 6];
        for (int k = 0; k < 3; ++k) c[k] = 0.5 * g + 0.5 * 255.0 * t[k];
      }
      for (int k = 0; k < 3; ++k) rgb(y, 3 * x + k) = static_cast<std::uint8_t>(std::lround(std::clamp(c[k], 0.0, 255.0)));
    }
  }
  return rgb;
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingFile, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if ((ext == ".png" || ext == ".pgm") && e.path().filename().string().front() != '.') out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

LabeledPairs load_pairs(const fs::path& image_dir, const fs::path& mask_dir) {
  LabeledPairs pairs;
  for (const auto& img : list_images(image_dir)) {
    const fs::path mask = mask_dir / img.filename();
    if (!fs::exists(mask)) throw Error(ErrorCode::MissingFile, "missing mask for " + img.filename().string());
    pairs.emplace_back(load_gray(img), load_instance_mask(mask));
    if (pairs.back().first.height() != pairs.back().second.height() ||
        pairs.back().first.width() != pairs.back().second.width()) {
      throw Error(ErrorCode::ShapeMismatch, "image and mask differ in size: " + img.filename().string());
    }
  }
  return pairs;
}

TrainingStageFiles run_training_stage(const PipelineConfig& cfg, const fs::path& image_dir, const fs::path& mask_dir,
                                      const fs::path& out_dir, const nn::TrainObserver& observer) {
  const LabeledPairs pairs = in_stage("load", [&] { return load_pairs(image_dir, mask_dir); });
  TrainingStageResult r = run_training_stage(cfg, pairs, observer);
  return in_stage("save", [&] {
    fs::create_directories(out_dir);
    TrainingStageFiles files{out_dir / "model.tseg", out_dir / "loss.csv", r.augmented_pairs};
    write_atomically(files.checkpoint, [&](const fs::path& p) { nn::save_checkpoint(r.model, p); });
    write_atomically(files.loss_csv, [&](const fs::path& p) {
      std::ofstream out(p);
      out << "iteration,loss\n";
      char buf[64];
      for (std::size_t i = 0; i < r.losses.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i, r.losses[i]);
        out << buf;
      }
      if (!out) throw Error(ErrorCode::Unwritable, "cannot write " + p.string());
    });
    return files;
  });
}

void write_report_csv(const fs::path& path, const std::vector<std::pair<std::string, EvaluationReport>>& rows) {
  write_atomically(path, [&](const fs::path& p) {
    std::ofstream out(p);
    out << report_csv_header() << '\n';
    for (const auto& [name, r] : rows) out << report_csv_row(name, r) << '\n';
    if (!out) throw Error(ErrorCode::Unwritable, "cannot write " + p.string());
  });
}

InferenceStageFiles run_inference_stage(const PipelineConfig& cfg, const fs::path& checkpoint,
                                        const std::vector<fs::path>& images, const fs::path& out_dir,
                                        const std::optional<fs::path>& gt_dir) {
  const nn::Model<float> model =
      in_stage("load", [&] { return nn::load_checkpoint(checkpoint, cfg.train.architecture); });
  std::vector<GrayImage> inputs = in_stage("load", [&] {
    std::vector<GrayImage> v;
    for (const auto& p : images) v.push_back(load_gray(p));
    return v;
  });
  const auto masks = run_inference_stage(cfg, model, inputs);

  return in_stage("save", [&] {
    fs::create_directories(out_dir);
    InferenceStageFiles files;
    std::vector<std::pair<std::string, EvaluationReport>> rows;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const std::string stem = images[i].stem().string();
      const fs::path mask_path = out_dir / (stem + "_mask.png");
      const fs::path overlay_path = out_dir / (stem + "_overlay.png");
      write_atomically(mask_path, [&](const fs::path& p) { save_instance_mask(masks[i], p); });
      write_atomically(overlay_path, [&](const fs::path& p) { save_rgb(overlay_rgb(inputs[i], masks[i]), p); });
      files.masks.push_back(mask_path);
      files.overlays.push_back(overlay_path);
      if (gt_dir) {
        const InstanceMask gt = in_stage("evaluate", [&] { return load_instance_mask(*gt_dir / images[i].filename()); });
        rows.emplace_back(images[i].filename().string(), in_stage("evaluate", [&] { return evaluate(masks[i], gt); }));
      }
    }
    if (gt_dir) {
      files.report = out_dir / "report.csv";
      write_report_csv(*files.report, rows);
    }
    return files;
  });
}

}  // namespace tseg
