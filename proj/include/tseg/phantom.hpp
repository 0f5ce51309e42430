#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tseg/imagedata.hpp"
#include "tseg/inhomogeneity.hpp"
#include "tseg/rng.hpp"

namespace tseg {

/// Synthetic tubule cross-sections: bright elliptical membranes around dim
/// lumens on a dark background, modulated by a radial bias field.
struct PhantomConfig {
  int size = 64;
  int min_tubules = 3;
  int max_tubules = 8;
  double membrane = 0.8;
  double lumen = 0.2;
  double background = 0.1;
  double jitter = 0.05;
  /// Draw membrane and lumen brightness per tubule instead of once per image.
  /// The background level is always drawn once per image.
  bool jitter_per_tubule = false;
  int min_thickness = 2;
  int max_thickness = 4;
  /// Full ellipse axis lengths in pixels.
  double min_axis = 8.0;
  double max_axis = 24.0;
  double noise_sigma = 0.03;
  /// Field spans roughly 1 +/- amplitude before mean normalization.
  double bias_amplitude = 0.4;
  /// Amplitude is reduced if needed so neighbouring field values differ by
  /// at most this much.
  double bias_max_step = 0.02;
  /// Minimum Chebyshev distance between two tubules.
  int min_gap = 3;
  int max_attempts = 500;

  void validate() const;
};

struct Phantom {
  GrayImage image;  // observed: field * clean + noise, clamped
  GrayImage clean;  // piecewise-constant, before field and noise
  InstanceMask mask;
  BiasField field;
};

Phantom generate_phantom(const PhantomConfig& cfg, Rng& rng);

/// Phantom i is drawn from Rng(split_seed(seed, i)).
std::vector<std::pair<GrayImage, InstanceMask>> generate_dataset(int n, const PhantomConfig& cfg,
                                                                 std::uint64_t seed);

/// Radial-quadratic field, brightest at the centre, mean 1.
BiasField radial_bias_field(Eigen::Index height, Eigen::Index width, double amplitude, double max_step);

/// Small-object threshold scaled from the 512x512 reference: round(100 * (size/512)^2).
int scaled_gamma(int size, int gamma_at_512 = 100);

}  // namespace tseg
