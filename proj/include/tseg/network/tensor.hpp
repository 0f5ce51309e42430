#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tseg/error.hpp"

namespace tseg::nn {

using Index = Eigen::Index;

struct Shape4 {
  Index n = 0, c = 0, h = 0, w = 0;

  Index size() const noexcept { return n * c * h * w; }
  bool operator==(const Shape4&) const = default;
  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
  }
};

/// Dense batch x channels x height x width array, row-major.
template <typename Scalar>
class Tensor4 {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using PlaneMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstPlaneMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor4() = default;
  explicit Tensor4(Shape4 s) : shape_(s), data_(Vector::Zero(s.size())) {}
  Tensor4(Index n, Index c, Index h, Index w) : Tensor4(Shape4{n, c, h, w}) {}
  Tensor4(Shape4 s, Vector data) : shape_(s), data_(std::move(data)) {
    if (data_.size() != s.size()) throw Error(ErrorCode::ShapeMismatch, "Tensor4: data length != n*c*h*w");
  }

  const Shape4& shape() const noexcept { return shape_; }
  Index n() const noexcept { return shape_.n; }
  Index c() const noexcept { return shape_.c; }
  Index h() const noexcept { return shape_.h; }
  Index w() const noexcept { return shape_.w; }
  Index size() const noexcept { return data_.size(); }

  Vector& vec() noexcept { return data_; }
  const Vector& vec() const noexcept { return data_; }
  Scalar* data() noexcept { return data_.data(); }
  const Scalar* data() const noexcept { return data_.data(); }

  Scalar& operator()(Index n, Index c, Index y, Index x) { return data_[offset(n, c, y, x)]; }
  Scalar operator()(Index n, Index c, Index y, Index x) const { return data_[offset(n, c, y, x)]; }

  /// One (n, c) image as an h x w matrix.
  PlaneMap plane(Index n, Index c) { return PlaneMap(data_.data() + offset(n, c, 0, 0), shape_.h, shape_.w); }
  ConstPlaneMap plane(Index n, Index c) const {
    return ConstPlaneMap(data_.data() + offset(n, c, 0, 0), shape_.h, shape_.w);
  }

  template <typename To>
  Tensor4<To> cast() const {
    return Tensor4<To>(shape_, data_.template cast<To>());
  }

 private:
  Index offset(Index n, Index c, Index y, Index x) const noexcept {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  Shape4 shape_;
  Vector data_;
};

/// Argmax offsets (0..3, row-major within the 2x2 window) of a max-pool, one
/// per pooled element.
struct PoolIndices {
  Shape4 pooled;
  std::vector<std::uint8_t> offsets;
};

}  // namespace tseg::nn
