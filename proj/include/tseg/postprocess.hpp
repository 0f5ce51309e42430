#pragma once

#include "tseg/imagedata.hpp"

namespace tseg {

struct PostprocessConfig {
  /// Components with fewer pixels than this are removed.
  int gamma = 100;
  /// Replace the 4-neighbour fill rule with flood fill of every enclosed
  /// background region.
  bool flood_fill = false;

  void validate() const;
};

/// 4-connected foreground regions labeled 1..n in row-major first-encounter order.
InstanceMask connected_components(const BinaryMask& mask);

/// Drops components with area < gamma (area == gamma survives) and compacts labels.
InstanceMask remove_small(const InstanceMask& inst, int gamma);

/// A background pixel becomes foreground when all four of its neighbours are
/// foreground. Updates are applied synchronously per pass and passes repeat
/// until nothing changes. Border pixels lack a neighbour and never fill, and
/// holes of 2x2 or larger are left untouched.
BinaryMask fill_holes(const BinaryMask& mask);

/// Fills every background region not 4-connected to the image border.
BinaryMask fill_holes_flood(const BinaryMask& mask);

/// remove_small on the 4-connected components, then hole filling, then relabel.
InstanceMask postprocess(const BinaryMask& mask, const PostprocessConfig& cfg = {});
/// Thresholds probabilities at p > 0.5 first.
InstanceMask postprocess(const GrayImage& probability, const PostprocessConfig& cfg = {});

}  // namespace tseg
