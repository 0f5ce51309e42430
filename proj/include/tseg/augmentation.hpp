#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tseg/imagedata.hpp"
#include "tseg/rng.hpp"

namespace tseg {

/// Control-point lattice for elastic deformation. Node (i, j) sits at pixel
/// ((j - 1) * spacing, (i - 1) * spacing); the extra ring at index 0 and at
/// the far end supplies the outer taps of the cubic B-spline.
struct ControlGrid {
  int spacing = 64;
  double max_disp = 15.0;
  Plane<double> dx;  // rows x cols
  Plane<double> dy;

  Eigen::Index rows() const noexcept { return dx.rows(); }
  Eigen::Index cols() const noexcept { return dx.cols(); }
};

/// Dense per-pixel backward-warp displacement.
struct DeformationField {
  Plane<double> dx;
  Plane<double> dy;

  Eigen::Index height() const noexcept { return dx.rows(); }
  Eigen::Index width() const noexcept { return dx.cols(); }
  double max_abs() const { return std::max(dx.abs().maxCoeff(), dy.abs().maxCoeff()); }
};

struct AugmentationConfig {
  int n_deformations = 100;
  int spacing = 64;
  double max_disp = 15.0;
  std::uint64_t rng_seed = 0;
};

/// Number of lattice nodes along an axis of `extent` pixels, ring included.
Eigen::Index grid_nodes(Eigen::Index extent, int spacing);

/// Each displacement component uniform on [-max_disp, max_disp] (per axis).
ControlGrid sample_control_grid(Eigen::Index height, Eigen::Index width, int spacing, double max_disp, Rng& rng);

/// Uniform cubic B-spline evaluation. The spline approximates rather than
/// interpolates the nodes; its weights are a partition of unity, so the
/// field is bounded by the largest node displacement.
DeformationField grid_to_field(const ControlGrid& grid, Eigen::Index height, Eigen::Index width);

/// out(y, x) = bicubic(img, x + dx, y + dy) with edge clamping, clamped to [0, 1].
GrayImage warp_image(const GrayImage& img, const DeformationField& field);
/// Same warp with nearest-neighbour sampling, so no labels are invented.
InstanceMask warp_mask(const InstanceMask& mask, const DeformationField& field);

/// Counter-clockwise quarter turns. Odd turns require a square input.
GrayImage rotate90(const GrayImage& img, int quarter_turns);
InstanceMask rotate90(const InstanceMask& mask, int quarter_turns);
GrayImage flip_horizontal(const GrayImage& img);
InstanceMask flip_horizontal(const InstanceMask& mask);

struct AugmentedPair {
  GrayImage image;
  InstanceMask mask;
  int deformation = 0;
  int rotation_degrees = 0;
  bool flipped = false;
};

/// n_deformations elastic warps, each emitted under 4 rotations x 2 flips,
/// in (deformation, rotation, flip) order. Deformation d uses
/// Rng(split_seed(split_seed(cfg.rng_seed, pair_index), d)).
std::vector<AugmentedPair> augment_pair(const GrayImage& img, const InstanceMask& gt, const AugmentationConfig& cfg,
                                        std::uint64_t pair_index = 0);

/// augment_pair over a list, pair i using pair_index = i.
std::vector<AugmentedPair> augment_dataset(const std::vector<std::pair<GrayImage, InstanceMask>>& pairs,
                                           const AugmentationConfig& cfg);

}  // namespace tseg
