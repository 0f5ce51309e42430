#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "tseg/network/train.hpp"
#include "tseg/phantom.hpp"

using namespace tseg;
using namespace tseg::nn;

namespace {

std::vector<std::pair<GrayImage, BinaryMask>> small_dataset(int n, int size) {
  PhantomConfig cfg;
  cfg.size = size;
  cfg.min_tubules = 1;
  cfg.max_tubules = 3;
  cfg.min_axis = 8;
  cfg.max_axis = 14;
  std::vector<std::pair<GrayImage, BinaryMask>> out;
  for (auto& [img, mask] : generate_dataset(n, cfg, 5)) out.emplace_back(img, mask.binarize());
  return out;
}

TrainConfig quick(int epochs) {
  TrainConfig cfg;
  cfg.learning_rate = 5e-2;
  cfg.epochs = epochs;
  cfg.architecture = Architecture{2};
  cfg.rng_seed = 3;
  return cfg;
}

double mean(const std::vector<double>& v, std::size_t from, std::size_t to) {
  return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(from), v.begin() + static_cast<std::ptrdiff_t>(to), 0.0) /
         static_cast<double>(to - from);
}

}  // namespace

TEST_CASE("epoch order is a seeded permutation") {
  const auto a = epoch_order(10, 7, 0), b = epoch_order(10, 7, 0), c = epoch_order(10, 7, 1);
  CHECK(a == b);
  CHECK(a != c);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
}

TEST_CASE("training lowers the loss") {
  const auto data = small_dataset(8, 32);
  const TrainResult r = train(data, quick(6));
  REQUIRE(r.losses.size() == 48);
  CHECK(mean(r.losses, 40, 48) < mean(r.losses, 0, 8));
  CHECK(r.model.trained());
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto data = small_dataset(4, 32);
  const TrainResult a = train(data, quick(2)), b = train(data, quick(2));
  CHECK(a.losses == b.losses);
  auto cfg = quick(2);
  cfg.rng_seed = 4;
  CHECK(train(data, cfg).losses != a.losses);
}

TEST_CASE("observer sees every iteration and max_iterations stops early") {
  const auto data = small_dataset(4, 32);
  auto cfg = quick(5);
  cfg.max_iterations = 6;
  std::vector<std::int64_t> seen;
  std::vector<int> epochs;
  const TrainResult r = train(data, cfg, [&](std::int64_t it, int epoch, double loss, const Model<float>& m) {
    seen.push_back(it);
    epochs.push_back(epoch);
    CHECK(std::isfinite(loss));
    CHECK(m.trained());
  });
  CHECK(r.losses.size() == 6);
  CHECK(seen.size() == 6);
  CHECK(seen.front() == 0);
  CHECK(seen.back() == 5);
  CHECK(epochs.back() == 1);
}

TEST_CASE("training input validation") {
  auto code_of = [](const std::vector<std::pair<GrayImage, BinaryMask>>& data, const TrainConfig& cfg) {
    try {
      train(data, cfg);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Config;
  };
  CHECK(code_of({}, quick(1)) == ErrorCode::EmptyDataset);
  auto data = small_dataset(2, 32);
  data[1].second = BinaryMask(16, 16);
  CHECK(code_of(data, quick(1)) == ErrorCode::ShapeMismatch);
  const std::vector<std::pair<GrayImage, BinaryMask>> odd{{GrayImage(24, 24), BinaryMask(24, 24)}};
  CHECK(code_of(odd, quick(1)) == ErrorCode::IndivisibleDims);
  auto cfg = quick(1);
  cfg.learning_rate = 0.0;
  CHECK(code_of(small_dataset(1, 32), cfg) == ErrorCode::InvalidArgument);
  cfg = quick(1);
  cfg.momentum = 1.0;
  CHECK(code_of(small_dataset(1, 32), cfg) == ErrorCode::InvalidArgument);
}

TEST_CASE("pixel accuracy counts agreeing pixels") {
  const auto data = small_dataset(3, 32);
  const TrainResult r = train(data, quick(1));
  const double acc = pixel_accuracy(r.model, data);
  Index agree = 0, total = 0;
  for (const auto& [img, mask] : data) {
    agree += (predict(r.model, img).data() == mask.data()).count();
    total += mask.data().size();
  }
  CHECK(acc == static_cast<double>(agree) / static_cast<double>(total));
}
