#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "tseg/error.hpp"

namespace tseg {

/// Row-major dense raster; rows = height, cols = width.
template <typename T>
using Plane = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Grayscale image with intensities normalized to [0, 1].
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(Eigen::Index height, Eigen::Index width, float fill = 0.0f);
  /// Validates that every value is finite and inside [0, 1].
  explicit GrayImage(Plane<float> data);

  Eigen::Index height() const noexcept { return data_.rows(); }
  Eigen::Index width() const noexcept { return data_.cols(); }
  const Plane<float>& data() const noexcept { return data_; }
  float operator()(Eigen::Index y, Eigen::Index x) const { return data_(y, x); }

  /// Clamps to [0, 1] (NaN maps to 0) instead of rejecting.
  static GrayImage clamped(const Plane<float>& data);

 private:
  Plane<float> data_;
};

/// Ordered stack of equally sized planes (a 3D volume, z = plane index).
class ImageStack {
 public:
  explicit ImageStack(std::vector<GrayImage> planes);

  std::size_t depth() const noexcept { return planes_.size(); }
  Eigen::Index height() const noexcept { return planes_.front().height(); }
  Eigen::Index width() const noexcept { return planes_.front().width(); }
  const GrayImage& plane(std::size_t z) const { return planes_.at(z); }
  const std::vector<GrayImage>& planes() const noexcept { return planes_; }

 private:
  std::vector<GrayImage> planes_;
};

/// Foreground (1) / background (0) mask.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(Eigen::Index height, Eigen::Index width);
  /// Rejects any value other than 0 or 1.
  explicit BinaryMask(Plane<std::uint8_t> data);

  Eigen::Index height() const noexcept { return data_.rows(); }
  Eigen::Index width() const noexcept { return data_.cols(); }
  const Plane<std::uint8_t>& data() const noexcept { return data_; }
  bool operator()(Eigen::Index y, Eigen::Index x) const { return data_(y, x) != 0; }
  Eigen::Index count() const { return data_.cast<Eigen::Index>().sum(); }

  bool operator==(const BinaryMask& o) const {
    return height() == o.height() && width() == o.width() && (data_ == o.data_).all();
  }

 private:
  Plane<std::uint8_t> data_;
};

/// Labeled instances: 0 = background, 1..n = objects. Labels are always
/// compact; construction maps the sorted distinct labels to 1..n.
class InstanceMask {
 public:
  InstanceMask() = default;
  InstanceMask(Eigen::Index height, Eigen::Index width);
  /// Negative labels are rejected; gaps are compacted.
  explicit InstanceMask(const Plane<std::int32_t>& labels);

  Eigen::Index height() const noexcept { return labels_.rows(); }
  Eigen::Index width() const noexcept { return labels_.cols(); }
  const Plane<std::int32_t>& labels() const noexcept { return labels_; }
  std::int32_t operator()(Eigen::Index y, Eigen::Index x) const { return labels_(y, x); }
  std::int32_t count() const noexcept { return count_; }

  /// Pixel count per label; index 0 is background.
  std::vector<Eigen::Index> areas() const;
  BinaryMask binarize() const;
  /// Foreground mask of a single instance.
  BinaryMask object(std::int32_t label) const;

  bool operator==(const InstanceMask& o) const {
    return height() == o.height() && width() == o.width() && (labels_ == o.labels_).all();
  }

 private:
  Plane<std::int32_t> labels_;
  std::int32_t count_ = 0;
};

/// Compacts labels to 1..n preserving their relative order; 0 stays 0.
Plane<std::int32_t> compact_labels(const Plane<std::int32_t>& labels);

GrayImage load_gray(const std::filesystem::path& path);
void save_gray(const GrayImage& img, const std::filesystem::path& path, int bit_depth = 8);
InstanceMask load_instance_mask(const std::filesystem::path& path);
void save_instance_mask(const InstanceMask& mask, const std::filesystem::path& path);

/// Mask files are instance PNGs; any label > 0 is foreground.
BinaryMask load_binary_mask(const std::filesystem::path& path);
void save_binary_mask(const BinaryMask& mask, const std::filesystem::path& path);

/// 8-bit RGB PNG writer for overlays; rgb is height x (3 * width).
void save_rgb(const Plane<std::uint8_t>& rgb, const std::filesystem::path& path);

}  // namespace tseg
