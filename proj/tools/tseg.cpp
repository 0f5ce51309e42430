// Command-line entry point: correct, augment, phantom, train, infer,
// postprocess, evaluate and the two-stage pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
// TSEG_LOG=0 silences progress output, TSEG_LOG=2 logs every iteration.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include "tseg/augmentation.hpp"
#include "tseg/imagedata.hpp"
#include "tseg/inhomogeneity.hpp"
#include "tseg/metrics.hpp"
#include "tseg/network/checkpoint.hpp"
#include "tseg/network/train.hpp"
#include "tseg/phantom.hpp"
#include "tseg/pipeline.hpp"
#include "tseg/postprocess.hpp"

namespace fs = std::filesystem;
using namespace tseg;

namespace {

int log_level() {
  const char* v = std::getenv("TSEG_LOG");
  return v ? std::atoi(v) : 1;
}

template <typename... Args>
void info(const char* fmt, Args... args) {
  if (log_level() >= 1) {
    std::fprintf(stderr, fmt, args...);
    std::fputc('\n', stderr);
  }
}

nn::TrainObserver progress_logger(std::int64_t every) {
  return [every](std::int64_t it, int epoch, double loss, const nn::Model<float>&) {
    if (log_level() >= 2 || (log_level() >= 1 && (it + 1) % every == 0)) {
      std::fprintf(stderr, "epoch %d iteration %lld loss %.6f\n", epoch, static_cast<long long>(it + 1), loss);
    }
  };
}

std::vector<fs::path> inputs_of(const fs::path& in) {
  return fs::is_directory(in) ? list_images(in) : std::vector<fs::path>{in};
}

int exit_code(const Error& e) {
  switch (e.code()) {
    case ErrorCode::NonFinite: return 3;
    case ErrorCode::Config: return 1;
    default: return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tubule segmentation: inhomogeneity correction, augmentation, encoder-decoder CNN, evaluation"};
  app.require_subcommand(1);

  // correct -------------------------------------------------------------------
  auto* correct_cmd = app.add_subcommand("correct", "Estimate and remove the multiplicative intensity field");
  fs::path correct_in, correct_out;
  CorrectionConfig ccfg;
  bool per_plane = false;
  int correct_depth = 16;
  correct_cmd->add_option("--in", correct_in, "Image file or directory holding an ordered stack")->required();
  correct_cmd->add_option("--out", correct_out, "Output directory")->required();
  correct_cmd->add_option("--sigma", ccfg.smoothing_sigma, "Gaussian sigma in pixels (default min(H,W)/8)");
  correct_cmd->add_option("--iters", ccfg.iterations, "Iterations")->capture_default_str();
  correct_cmd->add_option("--epsilon", ccfg.epsilon, "Division floor")->capture_default_str();
  correct_cmd->add_flag("--per-plane", per_plane, "Correct each plane independently instead of as a volume");
  correct_cmd->add_option("--bit-depth", correct_depth, "Output bit depth")->check(CLI::IsMember({8, 16}))->capture_default_str();

  // augment -------------------------------------------------------------------
  auto* augment_cmd = app.add_subcommand("augment", "Elastic deformation, rotation and flip augmentation");
  fs::path aug_images, aug_masks, aug_out;
  AugmentationConfig acfg;
  augment_cmd->add_option("--images", aug_images)->required();
  augment_cmd->add_option("--masks", aug_masks)->required();
  augment_cmd->add_option("--out", aug_out)->required();
  augment_cmd->add_option("--n", acfg.n_deformations, "Deformations per pair")->capture_default_str();
  augment_cmd->add_option("--seed", acfg.rng_seed)->capture_default_str();
  augment_cmd->add_option("--spacing", acfg.spacing, "Control point spacing (px)")->capture_default_str();
  augment_cmd->add_option("--max-disp", acfg.max_disp, "Max control point displacement (px)")->capture_default_str();

  // phantom -------------------------------------------------------------------
  auto* phantom_cmd = app.add_subcommand("phantom", "Generate synthetic tubule images with instance groundtruth");
  int phantom_n = 20;
  std::uint64_t phantom_seed = 0;
  fs::path phantom_out;
  PhantomConfig pcfg;
  phantom_cmd->add_option("--n", phantom_n)->capture_default_str();
  phantom_cmd->add_option("--size", pcfg.size)->capture_default_str();
  phantom_cmd->add_option("--seed", phantom_seed)->capture_default_str();
  phantom_cmd->add_option("--out", phantom_out)->required();
  phantom_cmd->add_option("--noise", pcfg.noise_sigma)->capture_default_str();
  phantom_cmd->add_option("--bias", pcfg.bias_amplitude)->capture_default_str();
  phantom_cmd->add_flag("--tubule-jitter", pcfg.jitter_per_tubule, "Vary brightness per tubule, not per image");

  // train ---------------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "Train the network on <data>/images and <data>/masks");
  fs::path train_data, train_out = "model.tseg";
  nn::TrainConfig tcfg;
  std::string scale = "full";
  train_cmd->add_option("--data", train_data)->required();
  train_cmd->add_option("--epochs", tcfg.epochs)->capture_default_str();
  train_cmd->add_option("--lr", tcfg.learning_rate)->capture_default_str();
  train_cmd->add_option("--momentum", tcfg.momentum)->capture_default_str();
  train_cmd->add_option("--seed", tcfg.rng_seed)->capture_default_str();
  train_cmd->add_option("--scale", scale)->check(CLI::IsMember({"full", "desk"}))->capture_default_str();
  train_cmd->add_option("--max-iterations", tcfg.max_iterations, "Stop early (0 = no limit)");
  train_cmd->add_option("--out", train_out, "Checkpoint path")->capture_default_str();

  // infer ---------------------------------------------------------------------
  auto* infer_cmd = app.add_subcommand("infer", "Predict a binary mask with a trained checkpoint");
  fs::path infer_model, infer_in, infer_out;
  std::optional<fs::path> infer_prob;
  infer_cmd->add_option("--model", infer_model)->required();
  infer_cmd->add_option("--in", infer_in)->required();
  infer_cmd->add_option("--out", infer_out)->required();
  infer_cmd->add_option("--prob", infer_prob, "Also write the tubule probability map (16-bit)");

  // postprocess ---------------------------------------------------------------
  auto* post_cmd = app.add_subcommand("postprocess", "Small-object removal and hole filling");
  fs::path post_in, post_out;
  PostprocessConfig ppcfg;
  bool post_is_prob = false;
  post_cmd->add_option("--in", post_in, "Binary/instance mask, or probability map with --prob")->required();
  post_cmd->add_option("--out", post_out)->required();
  post_cmd->add_option("--gamma", ppcfg.gamma)->capture_default_str();
  post_cmd->add_flag("--flood-fill", ppcfg.flood_fill, "Fill every enclosed hole instead of the 4-neighbour rule");
  post_cmd->add_flag("--prob", post_is_prob, "Input is a probability map; threshold at p > 0.5");

  // evaluate ------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("evaluate", "Pixel and object metrics against groundtruth");
  fs::path eval_seg, eval_gt, eval_out = "report.csv";
  eval_cmd->add_option("--seg", eval_seg, "Segmentation file or directory")->required();
  eval_cmd->add_option("--gt", eval_gt, "Groundtruth file or directory")->required();
  eval_cmd->add_option("--out", eval_out)->capture_default_str();

  // pipeline ------------------------------------------------------------------
  auto* pipe_cmd = app.add_subcommand("pipeline", "Training stage then inference stage");
  std::optional<fs::path> pipe_config;
  fs::path pipe_train_images, pipe_train_masks, pipe_out;
  std::optional<fs::path> pipe_test_images, pipe_test_masks, pipe_model;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> pipe_seed;
  std::optional<int> pipe_workers;
  pipe_cmd->add_option("--config", pipe_config, "key = value configuration file");
  pipe_cmd->add_option("--set", overrides, "Override a config key, e.g. --set train.epochs=10");
  pipe_cmd->add_option("--seed", pipe_seed, "Master seed");
  pipe_cmd->add_option("--workers", pipe_workers, "Inference worker threads");
  pipe_cmd->add_option("--train-images", pipe_train_images);
  pipe_cmd->add_option("--train-masks", pipe_train_masks);
  pipe_cmd->add_option("--model", pipe_model, "Skip training and use this checkpoint");
  pipe_cmd->add_option("--test-images", pipe_test_images);
  pipe_cmd->add_option("--test-masks", pipe_test_masks, "Groundtruth for the report (optional)");
  pipe_cmd->add_option("--out", pipe_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*correct_cmd) {
      ccfg.validate();
      const auto files = inputs_of(correct_in);
      if (files.empty()) throw Error(ErrorCode::MissingFile, "no images in " + correct_in.string());
      std::vector<GrayImage> planes;
      for (const auto& f : files) planes.push_back(load_gray(f));
      fs::create_directories(correct_out);
      std::vector<GrayImage> out;
      if (per_plane) {
        for (const auto& p : planes) out.push_back(correct_volume(ImageStack({p}), ccfg).plane(0));
      } else {
        out = correct_volume(ImageStack(planes), ccfg).planes();
      }
      for (std::size_t i = 0; i < files.size(); ++i) {
        auto name = files[i].filename();
        name.replace_extension(".png");
        save_gray(out[i], correct_out / name, correct_depth);
      }
      info("corrected %zu plane(s) into %s", files.size(), correct_out.c_str());
    } else if (*augment_cmd) {
      const auto pairs = load_pairs(aug_images, aug_masks);
      const auto names = list_images(aug_images);
      fs::create_directories(aug_out / "images");
      fs::create_directories(aug_out / "masks");
      std::size_t written = 0;
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        for (const auto& a : augment_pair(pairs[i].first, pairs[i].second, acfg, i)) {
          const std::string file = names[i].stem().string() + "_d" + std::to_string(a.deformation) + "_r" +
                                   std::to_string(a.rotation_degrees) + (a.flipped ? "_f" : "_n") + ".png";
          save_gray(a.image, aug_out / "images" / file, 16);
          save_instance_mask(a.mask, aug_out / "masks" / file);
          ++written;
        }
      }
      info("wrote %zu augmented pairs to %s", written, aug_out.c_str());
    } else if (*phantom_cmd) {
      pcfg.validate();
      fs::create_directories(phantom_out / "images");
      fs::create_directories(phantom_out / "masks");
      const auto data = generate_dataset(phantom_n, pcfg, phantom_seed);
      char name[32];
      for (std::size_t i = 0; i < data.size(); ++i) {
        std::snprintf(name, sizeof name, "phantom_%03zu.png", i);
        save_gray(data[i].first, phantom_out / "images" / name, 16);
        save_instance_mask(data[i].second, phantom_out / "masks" / name);
      }
      info("wrote %zu phantoms to %s", data.size(), phantom_out.c_str());
    } else if (*train_cmd) {
      tcfg.architecture = scale == "desk" ? nn::Architecture::desk() : nn::Architecture::full();
      const auto pairs = load_pairs(train_data / "images", train_data / "masks");
      std::vector<std::pair<GrayImage, BinaryMask>> data;
      for (const auto& [img, mask] : pairs) data.emplace_back(img, mask.binarize());
      info("training on %zu pairs (%s scale)", data.size(), scale.c_str());
      const auto r = nn::train(data, tcfg, progress_logger(static_cast<std::int64_t>(data.size())));
      nn::save_checkpoint(r.model, train_out);
      info("final loss %.6f, checkpoint %s", r.losses.empty() ? 0.0 : r.losses.back(), train_out.c_str());
    } else if (*infer_cmd) {
      const auto model = nn::load_checkpoint(infer_model);
      if (!model.trained()) throw Error(ErrorCode::UntrainedModel, "checkpoint has no batch-norm statistics");
      const GrayImage img = load_gray(infer_in);
      const auto fwd = nn::forward_infer(model, nn::image_tensor<float>(img));
      save_binary_mask(nn::threshold_probabilities(fwd.probabilities), infer_out);
      if (infer_prob) {
        save_gray(GrayImage::clamped(fwd.probabilities.plane(0, 1).array()), *infer_prob, 16);
      }
    } else if (*post_cmd) {
      const InstanceMask out = post_is_prob ? postprocess(load_gray(post_in), ppcfg)
                                            : postprocess(load_binary_mask(post_in), ppcfg);
      save_instance_mask(out, post_out);
      info("%d object(s) after postprocessing", out.count());
    } else if (*eval_cmd) {
      std::vector<std::pair<std::string, EvaluationReport>> rows;
      if (fs::is_directory(eval_seg)) {
        for (const auto& f : list_images(eval_seg)) {
          const fs::path gt = eval_gt / f.filename();
          if (!fs::exists(gt)) throw Error(ErrorCode::MissingFile, "missing groundtruth for " + f.filename().string());
          rows.emplace_back(f.filename().string(), evaluate(load_instance_mask(f), load_instance_mask(gt)));
        }
      } else {
        rows.emplace_back(eval_seg.filename().string(), evaluate(load_instance_mask(eval_seg), load_instance_mask(eval_gt)));
      }
      write_report_csv(eval_out, rows);
      for (const auto& [name, r] : rows) std::cout << report_csv_row(name, r) << '\n';
    } else if (*pipe_cmd) {
      PipelineConfig cfg = pipe_config ? PipelineConfig::from_file(*pipe_config) : PipelineConfig{};
      for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::Config, "--set expects key=value, got " + kv);
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (pipe_seed) cfg.master_seed = *pipe_seed;
      if (pipe_workers) cfg.workers = *pipe_workers;
      cfg.validate();

      fs::path checkpoint;
      if (pipe_model) {
        checkpoint = *pipe_model;
      } else {
        if (pipe_train_images.empty() || pipe_train_masks.empty()) {
          throw Error(ErrorCode::Config, "pipeline: --train-images and --train-masks are required without --model");
        }
        const auto files = run_training_stage(cfg, pipe_train_images, pipe_train_masks, pipe_out, progress_logger(1000));
        info("trained on %zu augmented pairs; checkpoint %s", files.augmented_pairs, files.checkpoint.c_str());
        checkpoint = files.checkpoint;
      }
      if (pipe_test_images) {
        const auto files = run_inference_stage(cfg, checkpoint, inputs_of(*pipe_test_images), pipe_out / "inference",
                                               pipe_test_masks);
        info("segmented %zu image(s)", files.masks.size());
        if (files.report) info("report %s", files.report->c_str());
      }
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
