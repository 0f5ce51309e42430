#pragma once

#include <vector>

#include "tseg/imagedata.hpp"

namespace tseg {

/// Smooth multiplicative intensity field W with I_observed = W * I_true + noise.
/// Values are strictly positive and the arithmetic mean over the whole
/// volume is 1.
class BiasField {
 public:
  /// Rescales `planes` to mean 1. Rejects non-positive or non-finite values.
  static BiasField normalized(std::vector<Plane<double>> planes);

  std::size_t depth() const noexcept { return planes_.size(); }
  Eigen::Index height() const noexcept { return planes_.front().rows(); }
  Eigen::Index width() const noexcept { return planes_.front().cols(); }
  const Plane<double>& plane(std::size_t z) const { return planes_.at(z); }

  double mean() const;
  double min() const;
  /// Largest absolute difference between 4-neighbours within a plane
  /// (and between vertically adjacent planes when depth > 1).
  double max_step() const;
  bool satisfies_invariants(double max_step_bound = 0.02) const;

 private:
  explicit BiasField(std::vector<Plane<double>> planes) : planes_(std::move(planes)) {}
  std::vector<Plane<double>> planes_;
};

struct CorrectionConfig {
  /// In-plane Gaussian sigma in pixels; <= 0 selects min(height, width) / 8.
  double smoothing_sigma = 0.0;
  int iterations = 5;
  /// Division floor.
  double epsilon = 1e-3;
  /// Largest allowed difference between neighbouring field values. A rougher
  /// estimate has its deviation from 1 scaled down until it fits.
  double max_step = 0.02;

  double sigma_for(Eigen::Index height, Eigen::Index width) const;
  void validate() const;
};

/// Separable Gaussian smoothing with a kernel truncated at 3 sigma. Pixels
/// beyond the border contribute nothing; pair with a smoothed indicator to
/// get a normalized convolution. sigma_z <= 0 disables smoothing across planes.
std::vector<Plane<double>> gaussian_smooth(const std::vector<Plane<double>>& volume, double sigma,
                                           double sigma_z);

/// Alternating estimate. Each round lightly denoises the current corrected
/// volume, and the voxels whose denoised value lies within 50% of the median
/// positive intensity form the flat reference class. W is the normalized-convolution smoothing of
/// I_observed / mean(reference) over the class, floored at epsilon and
/// rescaled to mean 1, and the corrected volume becomes I_observed / W. After
/// cfg.iterations rounds a field rougher than cfg.max_step has its deviation
/// from 1 shrunk until it fits.
BiasField estimate_field(const ImageStack& stack, const CorrectionConfig& cfg = {});

/// clamp(I_observed / max(W, epsilon), 0, 1).
ImageStack correct(const ImageStack& stack, const BiasField& field, double epsilon = 1e-3);

ImageStack correct_volume(const ImageStack& stack, const CorrectionConfig& cfg = {});

}  // namespace tseg
