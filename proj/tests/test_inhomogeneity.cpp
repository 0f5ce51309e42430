#include <cmath>

#include "doctest.h"
#include "tseg/inhomogeneity.hpp"
#include "tseg/phantom.hpp"

using namespace tseg;

namespace {

double rms_diff(const Plane<double>& a, const Plane<double>& b) {
  return std::sqrt((a - b).square().mean());
}

ImageStack single(const GrayImage& img) { return ImageStack({img}); }

PhantomConfig noise_free() {
  PhantomConfig cfg;
  cfg.noise_sigma = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("normalized fields have mean one and reject bad values") {
  Plane<double> p(1, 3);
  p << 1.0, 2.0, 3.0;
  const BiasField f = BiasField::normalized({p});
  CHECK(f.mean() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(f.plane(0)(0, 2) == doctest::Approx(1.5));
  CHECK(f.max_step() == doctest::Approx(0.5));
  p(0, 1) = 0.0;
  CHECK_THROWS_AS(BiasField::normalized({p}), Error);
  p(0, 1) = std::nan("");
  CHECK_THROWS_AS(BiasField::normalized({p}), Error);
}

TEST_CASE("smoothing a constant volume with a normalizing indicator returns the constant") {
  const std::vector<Plane<double>> v{Plane<double>::Constant(20, 30, 0.7)};
  const std::vector<Plane<double>> one{Plane<double>::Ones(20, 30)};
  const auto s = gaussian_smooth(v, 3.0, 0.0);
  const auto n = gaussian_smooth(one, 3.0, 0.0);
  CHECK((s[0] / n[0] - 0.7).abs().maxCoeff() < 1e-12);
  // Interior pixels are untouched by the border and keep the value outright.
  CHECK(s[0](10, 15) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("a constant image has a unit field") {
  const BiasField f = estimate_field(single(GrayImage(32, 32, 0.4f)));
  CHECK((f.plane(0) - 1.0).abs().maxCoeff() < 1e-9);
}

TEST_CASE("an all-zero stack has no field") {
  try {
    estimate_field(single(GrayImage(16, 16, 0.0f)));
    FAIL("expected UndefinedField");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UndefinedField);
  }
}

TEST_CASE("correct divides by the field and clamps") {
  Plane<double> w(1, 3);
  w << 2.0, 0.5, 0.5;
  const BiasField f = BiasField::normalized({w});
  Plane<float> img(1, 3);
  img << 0.8f, 0.1f, 0.6f;
  const ImageStack out = correct(single(GrayImage(img)), f);
  CHECK(out.plane(0)(0, 0) == doctest::Approx(0.4));
  CHECK(out.plane(0)(0, 1) == doctest::Approx(0.2));
  CHECK(out.plane(0)(0, 2) == 1.0f);

  const BiasField unit = BiasField::normalized({Plane<double>::Ones(1, 3)});
  CHECK((correct(single(GrayImage(img)), unit).plane(0).data() == img).all());
  CHECK((correct(single(GrayImage(1, 3, 0.0f)), f).plane(0).data() == 0.0f).all());
  CHECK_THROWS_AS(correct(single(GrayImage(2, 3)), f), Error);
}

TEST_CASE("correction is monotone in the observed intensity") {
  Rng rng(4);
  const Phantom p = generate_phantom(PhantomConfig{}, rng);
  const ImageStack a = single(p.image);
  Plane<float> brighter = (p.image.data() * 1.1f + 0.01f).min(1.0f);
  const ImageStack b = single(GrayImage(brighter));
  const ImageStack ca = correct(a, p.field), cb = correct(b, p.field);
  CHECK((ca.plane(0).data() <= cb.plane(0).data()).all());
}

TEST_CASE("the estimated field is invariant to a global intensity scale") {
  Rng rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const Phantom p = generate_phantom(PhantomConfig{}, rng);
    const GrayImage dim((p.image.data() * 0.5f).eval());
    const BiasField a = estimate_field(single(p.image));
    const BiasField b = estimate_field(single(dim));
    CHECK((a.plane(0) - b.plane(0)).abs().maxCoeff() < 1e-3);
  }
}

TEST_CASE("estimated fields satisfy the field invariants") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    PhantomConfig cfg;
    cfg.noise_sigma = uniform(rng, 0.0, 0.05);
    cfg.bias_amplitude = uniform(rng, 0.0, 0.5);
    const Phantom p = generate_phantom(cfg, rng);
    const BiasField f = estimate_field(single(p.image));
    CHECK(std::abs(f.mean() - 1.0) <= 1e-6);
    CHECK(f.min() > 0.0);
    CHECK(f.max_step() <= 0.02 + 1e-12);
    CHECK(f.satisfies_invariants());
    CHECK(p.field.satisfies_invariants());
  }
}

TEST_CASE("the estimate recovers an injected field on noise-free phantoms") {
  Rng rng(31);
  double est_err = 0.0, flat_err = 0.0, corrected_err = 0.0, raw_err = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Phantom p = generate_phantom(noise_free(), rng);
    const BiasField f = estimate_field(single(p.image));
    est_err += rms_diff(f.plane(0), p.field.plane(0));
    flat_err += rms_diff(Plane<double>::Ones(p.field.height(), p.field.width()), p.field.plane(0));
    const Plane<double> clean = p.clean.data().cast<double>();
    corrected_err += rms_diff(correct(single(p.image), f).plane(0).data().cast<double>(), clean);
    raw_err += rms_diff(p.image.data().cast<double>(), clean);
  }
  CHECK(est_err < 0.5 * flat_err);
  CHECK(corrected_err < 0.5 * raw_err);
}

TEST_CASE("correcting twice changes little") {
  Rng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const Phantom p = generate_phantom(noise_free(), rng);
    const ImageStack once = correct_volume(single(p.image));
    const ImageStack twice = correct_volume(once);
    const double d = rms_diff(once.plane(0).data().cast<double>(), twice.plane(0).data().cast<double>());
    CHECK(d < 0.02);
  }
}

TEST_CASE("a stack of identical planes gets the single-plane field in every plane") {
  Rng rng(2);
  const Phantom p = generate_phantom(PhantomConfig{}, rng);
  const BiasField one = estimate_field(single(p.image));
  const BiasField three = estimate_field(ImageStack({p.image, p.image, p.image}));
  REQUIRE(three.depth() == 3);
  for (std::size_t z = 0; z < 3; ++z) CHECK((three.plane(z) - one.plane(0)).abs().maxCoeff() < 1e-9);
}

TEST_CASE("correction config validation") {
  CorrectionConfig cfg;
  CHECK(cfg.sigma_for(64, 128) == 8.0);
  cfg.iterations = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.epsilon = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.max_step = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
