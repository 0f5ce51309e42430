#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "tseg/phantom.hpp"
#include "tseg/postprocess.hpp"

using namespace tseg;

TEST_CASE("an empty phantom is the background times the field") {
  PhantomConfig cfg;
  cfg.min_tubules = cfg.max_tubules = 0;
  cfg.noise_sigma = 0.0;
  cfg.jitter = 0.0;
  Rng rng(1);
  const Phantom p = generate_phantom(cfg, rng);
  CHECK(p.mask.count() == 0);
  CHECK((p.clean.data() == static_cast<float>(cfg.background)).all());
  const Plane<double> expected = p.field.plane(0) * cfg.background;
  CHECK((p.image.data().cast<double>() - expected).abs().maxCoeff() < 1e-7);
}

TEST_CASE("without bias and noise a phantom has exactly three levels") {
  PhantomConfig cfg;
  cfg.bias_amplitude = 0.0;
  cfg.noise_sigma = 0.0;
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Phantom p = generate_phantom(cfg, rng);
    CHECK((p.image.data() == p.clean.data()).all());
    std::set<float> levels(p.image.data().data(), p.image.data().data() + p.image.data().size());
    CHECK(levels.size() == 3);
    // The darkest level is the background and the brightest is the membrane.
    CHECK(*levels.begin() >= cfg.background - cfg.jitter - 1e-6);
    CHECK(*levels.rbegin() >= cfg.membrane - cfg.jitter - 1e-6);
  }
}

TEST_CASE("per-tubule jitter varies the levels between tubules") {
  PhantomConfig cfg;
  cfg.bias_amplitude = 0.0;
  cfg.noise_sigma = 0.0;
  cfg.jitter_per_tubule = true;
  cfg.min_tubules = 4;
  Rng rng(3);
  const Phantom p = generate_phantom(cfg, rng);
  std::set<float> levels(p.image.data().data(), p.image.data().data() + p.image.data().size());
  CHECK(levels.size() > 3);
  CHECK(levels.size() <= 1 + 2 * static_cast<std::size_t>(p.mask.count()));
}

TEST_CASE("tubule shapes, counts and gaps") {
  PhantomConfig cfg;
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const Phantom p = generate_phantom(cfg, rng);
    const auto k = p.mask.count();
    CHECK(k >= cfg.min_tubules);
    CHECK(k <= cfg.max_tubules);
    for (std::int32_t label = 1; label <= k; ++label) {
      // Every tubule is one 4-connected piece with its lumen included.
      CHECK(connected_components(p.mask.object(label)).count() == 1);
      CHECK(fill_holes_flood(p.mask.object(label)) == p.mask.object(label));
    }
    // Distinct tubules are more than min_gap apart in Chebyshev distance.
    const auto& lab = p.mask.labels();
    bool too_close = false;
    for (Eigen::Index y = 0; y < lab.rows(); ++y) {
      for (Eigen::Index x = 0; x < lab.cols(); ++x) {
        if (!lab(y, x)) continue;
        for (Eigen::Index yy = std::max<Eigen::Index>(0, y - cfg.min_gap); yy <= std::min(lab.rows() - 1, y + cfg.min_gap); ++yy) {
          for (Eigen::Index xx = std::max<Eigen::Index>(0, x - cfg.min_gap); xx <= std::min(lab.cols() - 1, x + cfg.min_gap); ++xx) {
            too_close = too_close || (lab(yy, xx) && lab(yy, xx) != lab(y, x));
          }
        }
      }
    }
    CHECK_FALSE(too_close);
    CHECK(p.field.satisfies_invariants(cfg.bias_max_step));
  }
}

TEST_CASE("ground truth survives desk-scale postprocessing unchanged") {
  PhantomConfig cfg;
  const PostprocessConfig post{scaled_gamma(cfg.size), false};
  CHECK(post.gamma == 2);
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Phantom p = generate_phantom(cfg, rng);
    const InstanceMask out = postprocess(p.mask.binarize(), post);
    CHECK(out.count() == p.mask.count());
    CHECK(oracle::same_partition(out.labels(), p.mask.labels()));
  }
}

TEST_CASE("datasets are deterministic per seed and index") {
  PhantomConfig cfg;
  const auto a = generate_dataset(3, cfg, 9), b = generate_dataset(3, cfg, 9), c = generate_dataset(3, cfg, 10);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK((a[i].first.data() == b[i].first.data()).all());
    CHECK(a[i].second == b[i].second);
    CHECK_FALSE((a[i].first.data() == c[i].first.data()).all());
  }
  CHECK_FALSE((a[0].first.data() == a[1].first.data()).all());
  // Item i depends only on (seed, i).
  const auto longer = generate_dataset(5, cfg, 9);
  CHECK((longer[2].first.data() == a[2].first.data()).all());
}

TEST_CASE("gamma scaling and config validation") {
  CHECK(scaled_gamma(512) == 100);
  CHECK(scaled_gamma(256) == 25);
  CHECK(scaled_gamma(64) == 2);
  PhantomConfig cfg;
  cfg.size = 60;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.max_tubules = 1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.bias_amplitude = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("an impossible layout fails rejection sampling") {
  PhantomConfig cfg;
  cfg.size = 32;
  cfg.min_tubules = cfg.max_tubules = 20;
  cfg.min_axis = 20;
  cfg.max_axis = 24;
  cfg.max_attempts = 20;
  Rng rng(6);
  try {
    generate_phantom(cfg, rng);
    FAIL("expected RejectionSampling");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RejectionSampling);
  }
}

TEST_CASE("the radial field is brightest at the centre and bounded in step") {
  const BiasField f = radial_bias_field(64, 64, 0.4, 0.02);
  CHECK(f.mean() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f.plane(0)(32, 32) > f.plane(0)(0, 0));
  CHECK(f.max_step() <= 0.02);
  const BiasField flat = radial_bias_field(64, 64, 0.0, 0.02);
  CHECK((flat.plane(0) - 1.0).abs().maxCoeff() < 1e-12);
}
