#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"

using namespace tseg;
using namespace tseg::nn;

namespace {

Tensor4<double> from_rows(Index h, Index w, std::initializer_list<double> v) {
  Tensor4<double> t(1, 1, h, w);
  Index i = 0;
  for (double x : v) t.vec()[i++] = x;
  return t;
}

}  // namespace

TEST_CASE("every layer passes a finite-difference check") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (const auto& r : gradcheck::check_all_layers(seed)) {
      INFO(r.name << " seed " << seed);
      CHECK(r.error < 1e-5);
    }
  }
}

TEST_CASE("identity kernel reproduces the input") {
  ConvLayer<double> p(1, 1);
  p.weight[4] = 1.0;
  Rng rng(1);
  const Tensor4<double> x = gradcheck::random_tensor(rng, 1, 1, 5, 7);
  CHECK(conv2d_forward(x, p).vec() == x.vec());
}

TEST_CASE("all-ones kernel on a ones image counts in-bounds neighbours") {
  ConvLayer<double> p(1, 1);
  p.weight.setOnes();
  Tensor4<double> x(1, 1, 4, 4);
  x.vec().setOnes();
  const Tensor4<double> y = conv2d_forward(x, p);
  CHECK(y(0, 0, 1, 1) == 9.0);
  CHECK(y(0, 0, 0, 1) == 6.0);
  CHECK(y(0, 0, 0, 0) == 4.0);
  ConvLayer<double> wrong(2, 1);
  CHECK_THROWS_AS(conv2d_forward(x, wrong), Error);
}

TEST_CASE("max-pool picks the maximum and records its offset") {
  const auto [y, idx] = maxpool2x2_forward(from_rows(2, 2, {1, 3, 2, 0}));
  CHECK(y(0, 0, 0, 0) == 3.0);
  CHECK(idx.offsets[0] == 1);
  const auto [yt, it] = maxpool2x2_forward(from_rows(2, 2, {5, 5, 5, 5}));
  CHECK(yt(0, 0, 0, 0) == 5.0);
  CHECK(it.offsets[0] == 0);
  CHECK_THROWS_AS(maxpool2x2_forward(Tensor4<double>(1, 1, 3, 4)), Error);
}

TEST_CASE("unpooling scatters to the recorded positions") {
  const auto [y, idx] = maxpool2x2_forward(from_rows(2, 4, {1, 3, 0, 0, 2, 0, 7, 0}));
  const Tensor4<double> u = maxunpool2x2(y, idx);
  CHECK(u.vec() == from_rows(2, 4, {0, 3, 0, 0, 0, 0, 7, 0}).vec());
  CHECK_THROWS_AS(maxunpool2x2(Tensor4<double>(1, 1, 2, 2), idx), Error);
}

TEST_CASE("equal logits cost ln 2 per pixel") {
  const Tensor4<double> logits(1, 2, 3, 3);
  const std::vector<BinaryMask> t{BinaryMask(3, 3)};
  const auto r = softmax_cross_entropy<double>(logits, t);
  CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const Tensor4<double> p = softmax(logits);
  CHECK(p(0, 0, 1, 1) == 0.5);
  CHECK_THROWS_AS(softmax_cross_entropy<double>(Tensor4<double>(1, 3, 3, 3), t), Error);
}

TEST_CASE("softmax is stable for large logits and sums to one") {
  Tensor4<double> logits(1, 2, 1, 2);
  logits(0, 0, 0, 0) = 1000.0;
  logits(0, 1, 0, 1) = -1000.0;
  const Tensor4<double> p = softmax(logits);
  CHECK(p(0, 0, 0, 0) == 1.0);
  CHECK(p(0, 1, 0, 0) == 0.0);
  CHECK(p(0, 0, 0, 1) + p(0, 1, 0, 1) == doctest::Approx(1.0));
  Plane<std::uint8_t> t = Plane<std::uint8_t>::Zero(1, 2);
  t(0, 0) = 1;
  const std::vector<BinaryMask> targets{BinaryMask(t)};
  CHECK(std::isfinite(softmax_cross_entropy<double>(logits, targets).loss));
}

TEST_CASE("batch-norm of a constant channel outputs beta") {
  BatchNormLayer<double> p(1);
  p.gamma[0] = 3.0;
  p.beta[0] = 0.25;
  Tensor4<double> x(2, 1, 3, 3);
  x.vec().setConstant(4.0);
  const Tensor4<double> y = batchnorm_forward(x, p, Mode::Train);
  CHECK((y.vec().array() - 0.25).abs().maxCoeff() < 1e-12);
  CHECK(p.tracked);
  CHECK(p.running_mean[0] == doctest::Approx(0.4));
  CHECK(p.running_var[0] == doctest::Approx(0.9));
}

TEST_CASE("batch-norm inference needs running statistics") {
  BatchNormLayer<double> p(2);
  try {
    batchnorm_forward(Tensor4<double>(1, 2, 2, 2), p, Mode::Infer);
    FAIL("expected RunningStatsUnset");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RunningStatsUnset);
  }
  p.tracked = true;
  p.running_mean << 1.0, -1.0;
  p.running_var << 4.0, 1.0;
  Tensor4<double> x(1, 2, 1, 1);
  x(0, 0, 0, 0) = 3.0;
  const Tensor4<double> y = batchnorm_forward(x, p, Mode::Infer);
  CHECK(y(0, 0, 0, 0) == doctest::Approx(2.0 / std::sqrt(4.0 + 1e-5)));
  CHECK(y(0, 1, 0, 0) == doctest::Approx(1.0 / std::sqrt(1.0 + 1e-5)));
}

TEST_CASE("ReLU passes no gradient at zero") {
  const Tensor4<double> x = from_rows(1, 3, {-1.0, 0.0, 2.0});
  Tensor4<double> g(1, 1, 1, 3);
  g.vec().setOnes();
  const Tensor4<double> d = relu_backward(x, g);
  CHECK(d.vec() == from_rows(1, 3, {0.0, 0.0, 1.0}).vec());
  CHECK(relu_forward(x).vec() == from_rows(1, 3, {0.0, 0.0, 2.0}).vec());
}
