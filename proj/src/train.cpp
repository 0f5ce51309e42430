#include "tseg/network/train.hpp"

#include <cmath>
#include <numeric>

namespace tseg::nn {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "train: learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorCode::InvalidArgument, "train: momentum must be in [0,1)");
  if (epochs < 1) throw Error(ErrorCode::InvalidArgument, "train: epochs must be >= 1");
  if (max_iterations < 0) throw Error(ErrorCode::InvalidArgument, "train: max_iterations must be >= 0");
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(split_seed(seed, static_cast<std::uint64_t>(epoch) + 1));
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i - 1)));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

TrainResult train(const std::vector<std::pair<GrayImage, BinaryMask>>& dataset, const TrainConfig& cfg,
                  const TrainObserver& observer) {
  cfg.validate();
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "train: empty dataset");
  const auto h = dataset.front().first.height(), w = dataset.front().first.width();
  for (const auto& [img, mask] : dataset) {
    if (img.height() != h || img.width() != w || mask.height() != h || mask.width() != w) {
      throw Error(ErrorCode::ShapeMismatch, "train: all images and masks must share one shape");
    }
  }
  check_spatial(h, w);

  TrainResult r{Model<float>(cfg.architecture, split_seed(cfg.rng_seed, 0)), {}};
  ModelGrads<float> velocity;
  const auto lr = static_cast<float>(cfg.learning_rate);
  const auto mom = static_cast<float>(cfg.momentum);
  std::int64_t iteration = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto idx : epoch_order(dataset.size(), cfg.rng_seed, epoch)) {
      if (cfg.max_iterations > 0 && iteration >= cfg.max_iterations) return r;
      const auto& [img, mask] = dataset[idx];
      const auto fwd = forward(r.model, image_tensor<float>(img));
      const auto bwd = backward(r.model, fwd.cache, std::span<const BinaryMask>(&mask, 1));
      if (!std::isfinite(bwd.loss)) {
        throw Error(ErrorCode::NonFinite, "train: non-finite loss at iteration " + std::to_string(iteration));
      }
      sgd_step(r.model, bwd.grads, velocity, lr, mom);
      r.losses.push_back(bwd.loss);
      if (observer) observer(iteration, epoch, bwd.loss, r.model);
      ++iteration;
    }
  }
  return r;
}

double pixel_accuracy(const Model<float>& model, const std::vector<std::pair<GrayImage, BinaryMask>>& dataset) {
  Index correct = 0, total = 0;
  for (const auto& [img, mask] : dataset) {
    const BinaryMask pred = predict(model, img);
    correct += (pred.data() == mask.data()).count();
    total += mask.data().size();
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

}  // namespace tseg::nn
