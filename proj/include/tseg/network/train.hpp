#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "tseg/network/model.hpp"

namespace tseg::nn {

struct TrainConfig {
  double learning_rate = 1e-5;
  double momentum = 0.9;
  int epochs = 200;
  /// Batch size is fixed at one image per iteration.
  static constexpr int kBatchSize = 1;
  std::uint64_t rng_seed = 0;
  Architecture architecture = Architecture::full();
  /// Stop after this many iterations in total; 0 runs every epoch to completion.
  std::int64_t max_iterations = 0;

  void validate() const;
};

struct TrainResult {
  Model<float> model;
  std::vector<double> losses;  // one per iteration
};

/// Called after every iteration with (iteration, epoch, loss, model after the step).
using TrainObserver = std::function<void(std::int64_t, int, double, const Model<float>&)>;

/// Weights come from split_seed(rng_seed, 0); epoch e visits the dataset in
/// the order of a Fisher-Yates shuffle drawn from split_seed(rng_seed, e + 1).
TrainResult train(const std::vector<std::pair<GrayImage, BinaryMask>>& dataset, const TrainConfig& cfg,
                  const TrainObserver& observer = {});

/// Permutation of 0..n-1 used for an epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

/// Fraction of pixels where predict(model, image) equals the target.
double pixel_accuracy(const Model<float>& model, const std::vector<std::pair<GrayImage, BinaryMask>>& dataset);

}  // namespace tseg::nn
