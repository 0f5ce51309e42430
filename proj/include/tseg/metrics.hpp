#pragma once

#include <string>
#include <vector>

#include "tseg/imagedata.hpp"

namespace tseg {

struct PixelMetrics {
  double pa = 0.0;     // (tp + tn) / total
  double type1 = 0.0;  // fp / total
  double type2 = 0.0;  // fn / total
  Eigen::Index tp = 0, tn = 0, fp = 0, fn = 0, total = 0;
};

PixelMetrics pixel_metrics(const BinaryMask& seg, const BinaryMask& gt);

/// Overlaps and maximal matches between segmented objects S_i and groundtruth
/// objects G_j. Index 0 of every per-object vector is unused (background).
struct ObjectMatching {
  /// overlap(i, j) = |S_i ∩ G_j|, background row/column included.
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic> overlap;
  std::vector<Eigen::Index> seg_area;
  std::vector<Eigen::Index> gt_area;
  /// Groundtruth label maximizing overlap with S_i (lowest label on ties);
  /// 0 when S_i touches no groundtruth object.
  std::vector<std::int32_t> seg_match;
  /// Segmented label maximizing overlap with G_j; 0 when none.
  std::vector<std::int32_t> gt_match;
  /// S_i is a true positive iff it covers at least half of its matched G.
  std::vector<bool> seg_tp;
  /// G_j is detected iff some true-positive S_i is matched to it.
  std::vector<bool> gt_detected;
  Eigen::Index tp = 0, fp = 0, fn = 0;
};

ObjectMatching match_objects(const InstanceMask& seg, const InstanceMask& gt);

struct F1Score {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// 0/0 ratios are reported as 0.
F1Score f1_score(const ObjectMatching& m);

/// 2|a ∩ b| / (|a| + |b|); throws EmptySet when both are empty.
double dice(const BinaryMask& a, const BinaryMask& b);

struct ObjectDice {
  double value = 0.0;
  /// Set when either mask has no objects; value is then 0.
  bool empty_input = false;
};

/// Size-weighted average of per-object Dice over maximal matches, taken in
/// both directions and halved. Objects without any overlap contribute 0.
ObjectDice object_dice(const InstanceMask& seg, const InstanceMask& gt);

/// Foreground pixels with a background 4-neighbour or lying on the image border.
BinaryMask boundary(const BinaryMask& mask);

/// Symmetric Euclidean Hausdorff distance between the boundaries of a and b.
double hausdorff(const BinaryMask& a, const BinaryMask& b);

/// Hausdorff analogue of object_dice. An object with no overlap is paired
/// with the counterpart whose boundary centroid is closest to its own.
/// Throws EmptySet if either mask has no objects.
double object_hausdorff(const InstanceMask& seg, const InstanceMask& gt);

struct EvaluationReport {
  PixelMetrics pixel;
  F1Score object;
  ObjectDice od;
  /// NaN when either mask has no objects.
  double oh = 0.0;
};

EvaluationReport evaluate(const InstanceMask& seg, const InstanceMask& gt);

/// "image,PA,TypeI,TypeII,Precision,Recall,F1,OD,OH"
std::string report_csv_header();
std::string report_csv_row(const std::string& image, const EvaluationReport& r);

}  // namespace tseg
