#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tseg/augmentation.hpp"
#include "tseg/inhomogeneity.hpp"
#include "tseg/metrics.hpp"
#include "tseg/network/model.hpp"
#include "tseg/network/train.hpp"
#include "tseg/postprocess.hpp"

namespace tseg {

/// All stage settings. Read from a `key = value` file (with `#` comments);
/// later set() calls, e.g. from CLI flags, override file values.
///
///   seed, workers, correction.enabled, correction.sigma, correction.iters,
///   correction.epsilon, correction.max_step, augment.n, augment.spacing,
///   augment.max_disp, augment.seed, train.lr, train.momentum, train.epochs,
///   train.scale, train.seed, train.max_iterations, postprocess.gamma,
///   postprocess.flood_fill
struct PipelineConfig {
  std::uint64_t master_seed = 0;
  int workers = 1;
  bool correction_enabled = true;
  CorrectionConfig correction;
  AugmentationConfig augmentation;
  nn::TrainConfig train;
  PostprocessConfig postprocess;
  std::optional<std::uint64_t> augment_seed;
  std::optional<std::uint64_t> train_seed;

  static PipelineConfig from_file(const std::filesystem::path& path);
  /// Throws Config for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Validates every stage config.
  void validate() const;

  /// Stage seeds not set explicitly derive from the master seed by stage name.
  std::uint64_t augmentation_seed() const;
  std::uint64_t training_seed() const;
};

/// An error raised inside a named pipeline stage; keeps the original code.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.code(), "[" + stage + "] " + cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

using LabeledPairs = std::vector<std::pair<GrayImage, InstanceMask>>;

struct TrainingStageResult {
  nn::Model<float> model;
  std::vector<double> losses;
  std::size_t augmented_pairs = 0;
};

/// correct -> augment -> train.
TrainingStageResult run_training_stage(const PipelineConfig& cfg, const LabeledPairs& pairs,
                                       const nn::TrainObserver& observer = {});

/// Per-plane correction used by both stages (each image is a depth-1 stack).
GrayImage correct_image(const GrayImage& img, const PipelineConfig& cfg);

/// correct -> predict -> postprocess for one image.
InstanceMask segment_image(const nn::Model<float>& model, const GrayImage& img, const PipelineConfig& cfg);

/// segment_image over a batch using cfg.workers threads; output order follows input.
std::vector<InstanceMask> run_inference_stage(const PipelineConfig& cfg, const nn::Model<float>& model,
                                              const std::vector<GrayImage>& images);

/// Grayscale background with each instance tinted its own colour.
Plane<std::uint8_t> overlay_rgb(const GrayImage& img, const InstanceMask& mask);

// ---------------------------------------------------------------------------
// Directory-level helpers used by the CLI.

/// Sorted regular files with a .png or .pgm extension.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Pairs every image in image_dir with the same-named file in mask_dir.
LabeledPairs load_pairs(const std::filesystem::path& image_dir, const std::filesystem::path& mask_dir);

struct TrainingStageFiles {
  std::filesystem::path checkpoint;
  std::filesystem::path loss_csv;
  std::size_t augmented_pairs = 0;
};

TrainingStageFiles run_training_stage(const PipelineConfig& cfg, const std::filesystem::path& image_dir,
                                      const std::filesystem::path& mask_dir, const std::filesystem::path& out_dir,
                                      const nn::TrainObserver& observer = {});

struct InferenceStageFiles {
  std::vector<std::filesystem::path> masks;
  std::vector<std::filesystem::path> overlays;
  std::optional<std::filesystem::path> report;
};

/// Writes <stem>_mask.png and <stem>_overlay.png per image, plus report.csv
/// when gt_dir is given.
InferenceStageFiles run_inference_stage(const PipelineConfig& cfg, const std::filesystem::path& checkpoint,
                                        const std::vector<std::filesystem::path>& images,
                                        const std::filesystem::path& out_dir,
                                        const std::optional<std::filesystem::path>& gt_dir = std::nullopt);

/// Writes via a temporary sibling and rename so readers never see partial files.
template <typename Writer>
void write_atomically(const std::filesystem::path& path, Writer&& write) {
  const auto tmp = path.parent_path() / ("." + path.filename().string() + ".tmp" + path.extension().string());
  write(tmp);
  std::filesystem::rename(tmp, path);
}

void write_report_csv(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, EvaluationReport>>& rows);

}  // namespace tseg
