#include "doctest.h"
#include "oracles.hpp"
#include "tseg/augmentation.hpp"
#include "tseg/phantom.hpp"

using namespace tseg;

namespace {

GrayImage random_gray(Rng& rng, Eigen::Index h, Eigen::Index w) {
  Plane<float> d(h, w);
  for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = static_cast<float>(uniform01(rng));
  return GrayImage(d);
}

bool same(const GrayImage& a, const GrayImage& b) {
  return a.height() == b.height() && a.width() == b.width() && (a.data() == b.data()).all();
}

ControlGrid constant_grid(Eigen::Index h, Eigen::Index w, int spacing, double dx, double dy) {
  ControlGrid g;
  g.spacing = spacing;
  g.dx = Plane<double>::Constant(grid_nodes(h, spacing), grid_nodes(w, spacing), dx);
  g.dy = Plane<double>::Constant(grid_nodes(h, spacing), grid_nodes(w, spacing), dy);
  return g;
}

}  // namespace

TEST_CASE("lattice size") {
  CHECK(grid_nodes(512, 64) == 11);
  CHECK(grid_nodes(64, 64) == 4);
  CHECK(grid_nodes(65, 64) == 5);
}

TEST_CASE("a zero grid is the identity warp") {
  Rng rng(1);
  const GrayImage img = random_gray(rng, 40, 40);
  const DeformationField f = grid_to_field(constant_grid(40, 40, 16, 0.0, 0.0), 40, 40);
  CHECK(f.max_abs() == 0.0);
  CHECK(same(warp_image(img, f), img));
  const InstanceMask m = oracle::random_instances(rng, 40, 40, 4);
  CHECK(warp_mask(m, f) == m);
}

TEST_CASE("a constant grid gives a constant field and an exact integer shift") {
  const DeformationField f = grid_to_field(constant_grid(48, 48, 16, 3.0, -2.0), 48, 48);
  CHECK((f.dx - 3.0).abs().maxCoeff() < 1e-12);
  CHECK((f.dy + 2.0).abs().maxCoeff() < 1e-12);

  Rng rng(2);
  const GrayImage img = random_gray(rng, 48, 48);
  const GrayImage out = warp_image(img, f);
  for (Eigen::Index y = 2; y < 48; ++y) {
    for (Eigen::Index x = 0; x + 3 < 48; ++x) REQUIRE(out(y, x) == doctest::Approx(img(y - 2, x + 3)).epsilon(1e-6));
  }
}

TEST_CASE("sampled fields never exceed the displacement bound") {
  Rng rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const ControlGrid g = sample_control_grid(64, 64, 16, 15.0, rng);
    REQUIRE(g.dx.abs().maxCoeff() <= 15.0);
    REQUIRE(g.dy.abs().maxCoeff() <= 15.0);
    worst = std::max(worst, grid_to_field(g, 64, 64).max_abs());
  }
  CHECK(worst <= 15.0);
  CHECK(worst > 5.0);
}

TEST_CASE("bad grid parameters are rejected") {
  Rng rng(0);
  CHECK_THROWS_AS(sample_control_grid(8, 8, 0, 1.0, rng), Error);
  CHECK_THROWS_AS(sample_control_grid(8, 8, 4, -1.0, rng), Error);
  CHECK_THROWS_AS(grid_to_field(constant_grid(16, 16, 8, 0, 0), 64, 64), Error);
}

TEST_CASE("rotations and flips form the dihedral group") {
  Rng rng(4);
  const GrayImage img = random_gray(rng, 9, 9);
  const InstanceMask m = oracle::random_instances(rng, 9, 9, 3);
  CHECK(same(rotate90(rotate90(rotate90(rotate90(img, 1), 1), 1), 1), img));
  CHECK(same(rotate90(img, 4), img));
  CHECK(same(rotate90(rotate90(img, 1), 3), img));
  CHECK(same(flip_horizontal(flip_horizontal(img)), img));
  CHECK(same(flip_horizontal(rotate90(img, 1)), rotate90(flip_horizontal(img), 3)));
  CHECK(rotate90(rotate90(rotate90(rotate90(m, 1), 1), 1), 1) == m);
  CHECK(flip_horizontal(flip_horizontal(m)) == m);

  // Counter-clockwise: the top-right corner moves to the top-left.
  CHECK(rotate90(img, 1)(0, 0) == img(0, 8));
  CHECK(flip_horizontal(img)(3, 0) == img(3, 8));
}

TEST_CASE("odd quarter turns need a square input") {
  const GrayImage img(4, 6);
  CHECK(rotate90(img, 2).height() == 4);
  try {
    rotate90(img, 1);
    FAIL("expected NotSquare");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotSquare);
  }
  CHECK_THROWS_AS(augment_pair(img, InstanceMask(4, 6), AugmentationConfig{}), Error);
}

TEST_CASE("augmentation counts and order") {
  Rng rng(5);
  const GrayImage img = random_gray(rng, 16, 16);
  const InstanceMask m = oracle::random_instances(rng, 16, 16, 3);
  AugmentationConfig cfg;
  cfg.n_deformations = 1;
  cfg.spacing = 8;
  cfg.max_disp = 2.0;
  const auto one = augment_pair(img, m, cfg);
  REQUIRE(one.size() == 8);
  CHECK(one[0].rotation_degrees == 0);
  CHECK_FALSE(one[0].flipped);
  CHECK(one[1].flipped);
  CHECK(one[7].rotation_degrees == 270);
  CHECK(one[7].flipped);
  CHECK(same(one[2].image, rotate90(one[0].image, 1)));
  CHECK(one[3].mask == flip_horizontal(rotate90(one[0].mask, 1)));

  cfg.n_deformations = 100;
  std::vector<std::pair<GrayImage, InstanceMask>> five(5, {img, m});
  const auto all = augment_dataset(five, cfg);
  CHECK(all.size() == 4000);
  CHECK(all.back().deformation == 99);
  cfg.n_deformations = 0;
  CHECK(augment_pair(img, m, cfg).empty());
}

TEST_CASE("augmentation is deterministic and pair-dependent") {
  Rng rng(6);
  const GrayImage img = random_gray(rng, 32, 32);
  const InstanceMask m = oracle::random_instances(rng, 32, 32, 3);
  AugmentationConfig cfg;
  cfg.n_deformations = 2;
  cfg.spacing = 16;
  cfg.rng_seed = 42;
  const auto a = augment_pair(img, m, cfg, 3), b = augment_pair(img, m, cfg, 3), c = augment_pair(img, m, cfg, 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(same(a[i].image, b[i].image));
    CHECK(a[i].mask == b[i].mask);
  }
  CHECK_FALSE(same(a[0].image, c[0].image));
}

TEST_CASE("warped masks stay aligned with warped images") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Phantom p = generate_phantom(PhantomConfig{}, rng);
    const GrayImage indicator(p.mask.binarize().data().cast<float>().eval());
    const DeformationField f = grid_to_field(sample_control_grid(64, 64, 64, 15.0, rng), 64, 64);
    const GrayImage wi = warp_image(indicator, f);
    const BinaryMask wm = warp_mask(p.mask, f).binarize();
    Eigen::Index agree = 0;
    for (Eigen::Index y = 0; y < 64; ++y) {
      for (Eigen::Index x = 0; x < 64; ++x) agree += (wi(y, x) > 0.5f) == wm(y, x);
    }
    CHECK(static_cast<double>(agree) / (64.0 * 64.0) >= 0.95);
    // Nearest-neighbour sampling invents no labels.
    CHECK(warp_mask(p.mask, f).labels().maxCoeff() <= p.mask.count());
  }
}
