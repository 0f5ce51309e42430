#include "tseg/augmentation.hpp"

#include <array>
#include <cmath>

namespace tseg {

namespace {

void require_same_shape(Eigen::Index h, Eigen::Index w, const DeformationField& f) {
  if (h != f.height() || w != f.width()) throw Error(ErrorCode::ShapeMismatch, "warp: field and image shapes differ");
}

// Uniform cubic B-spline basis at fractional position u in [0, 1).
std::array<double, 4> bspline_weights(double u) {
  const double u2 = u * u, u3 = u2 * u;
  return {(1.0 - u) * (1.0 - u) * (1.0 - u) / 6.0, (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
          (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0, u3 / 6.0};
}

// Keys cubic convolution kernel, a = -0.5. Weights are exactly (0, 1, 0, 0)
// at integer positions.
std::array<double, 4> cubic_weights(double t) {
  constexpr double a = -0.5;
  auto near = [](double x) { return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0; };
  auto far = [](double x) { return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a; };
  return {far(1.0 + t), near(t), near(1.0 - t), far(2.0 - t)};
}

template <typename T>
Plane<T> rotate_plane(const Plane<T>& p, int quarter_turns) {
  const int q = ((quarter_turns % 4) + 4) % 4;
  if (q % 2 == 1 && p.rows() != p.cols()) {
    throw Error(ErrorCode::NotSquare, "rotate90: odd quarter turns need a square input");
  }
  const Eigen::Index h = p.rows(), w = p.cols();
  Plane<T> out(q % 2 ? w : h, q % 2 ? h : w);
  for (Eigen::Index y = 0; y < out.rows(); ++y) {
    for (Eigen::Index x = 0; x < out.cols(); ++x) {
      switch (q) {
        case 0: out(y, x) = p(y, x); break;
        case 1: out(y, x) = p(x, w - 1 - y); break;  // counter-clockwise
        case 2: out(y, x) = p(h - 1 - y, w - 1 - x); break;
        default: out(y, x) = p(h - 1 - x, y); break;
      }
    }
  }
  return out;
}

}  // namespace

Eigen::Index grid_nodes(Eigen::Index extent, int spacing) {
  // Nodes at 0, s, ..., ceil(extent / s) * s plus one ring node each side.
  return (extent + spacing - 1) / spacing + 3;
}

ControlGrid sample_control_grid(Eigen::Index height, Eigen::Index width, int spacing, double max_disp, Rng& rng) {
  if (spacing <= 0) throw Error(ErrorCode::InvalidArgument, "control grid spacing must be > 0");
  if (!(max_disp >= 0.0)) throw Error(ErrorCode::InvalidArgument, "max displacement must be >= 0");
  ControlGrid g;
  g.spacing = spacing;
  g.max_disp = max_disp;
  const auto rows = grid_nodes(height, spacing), cols = grid_nodes(width, spacing);
  g.dx.resize(rows, cols);
  g.dy.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      g.dx(i, j) = uniform(rng, -max_disp, max_disp);
      g.dy(i, j) = uniform(rng, -max_disp, max_disp);
    }
  }
  return g;
}

DeformationField grid_to_field(const ControlGrid& grid, Eigen::Index height, Eigen::Index width) {
  if (grid.rows() < grid_nodes(height, grid.spacing) || grid.cols() < grid_nodes(width, grid.spacing)) {
    throw Error(ErrorCode::ShapeMismatch, "control grid does not cover the image");
  }
  DeformationField f{Plane<double>(height, width), Plane<double>(height, width)};
  const double s = grid.spacing;
  for (Eigen::Index y = 0; y < height; ++y) {
    const auto iy = static_cast<Eigen::Index>(std::floor(y / s));
    const auto wy = bspline_weights(y / s - iy);
    for (Eigen::Index x = 0; x < width; ++x) {
      const auto ix = static_cast<Eigen::Index>(std::floor(x / s));
      const auto wx = bspline_weights(x / s - ix);
      double dx = 0.0, dy = 0.0;
      // Storage index of lattice node k is k + 1; taps are nodes k-1..k+2.
      for (int m = 0; m < 4; ++m) {
        for (int n = 0; n < 4; ++n) {
          const double w = wy[m] * wx[n];
          dx += w * grid.dx(iy + m, ix + n);
          dy += w * grid.dy(iy + m, ix + n);
        }
      }
      f.dx(y, x) = dx;
      f.dy(y, x) = dy;
    }
  }
  return f;
}

GrayImage warp_image(const GrayImage& img, const DeformationField& field) {
  require_same_shape(img.height(), img.width(), field);
  const Eigen::Index h = img.height(), w = img.width();
  const auto& src = img.data();
  Plane<float> out(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      const double sx = x + field.dx(y, x), sy = y + field.dy(y, x);
      const double fx = std::floor(sx), fy = std::floor(sy);
      const auto wx = cubic_weights(sx - fx), wy = cubic_weights(sy - fy);
      double acc = 0.0;
      for (int m = 0; m < 4; ++m) {
        const auto yy = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(fy) - 1 + m, 0, h - 1);
        double row = 0.0;
        for (int n = 0; n < 4; ++n) {
          const auto xx = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(fx) - 1 + n, 0, w - 1);
          row += wx[n] * src(yy, xx);
        }
        acc += wy[m] * row;
      }
      out(y, x) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
    }
  }
  return GrayImage(std::move(out));
}

InstanceMask warp_mask(const InstanceMask& mask, const DeformationField& field) {
  require_same_shape(mask.height(), mask.width(), field);
  const Eigen::Index h = mask.height(), w = mask.width();
  Plane<std::int32_t> out(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      const auto sx = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(x + field.dx(y, x) + 0.5)), 0, w - 1);
      const auto sy = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(y + field.dy(y, x) + 0.5)), 0, h - 1);
      out(y, x) = mask(sy, sx);
    }
  }
  return InstanceMask(out);
}

GrayImage rotate90(const GrayImage& img, int quarter_turns) { return GrayImage(rotate_plane(img.data(), quarter_turns)); }

InstanceMask rotate90(const InstanceMask& mask, int quarter_turns) {
  return InstanceMask(rotate_plane(mask.labels(), quarter_turns));
}

GrayImage flip_horizontal(const GrayImage& img) { return GrayImage(img.data().rowwise().reverse().eval()); }

InstanceMask flip_horizontal(const InstanceMask& mask) {
  return InstanceMask(mask.labels().rowwise().reverse().eval());
}

std::vector<AugmentedPair> augment_pair(const GrayImage& img, const InstanceMask& gt, const AugmentationConfig& cfg,
                                        std::uint64_t pair_index) {
  if (img.height() != gt.height() || img.width() != gt.width()) {
    throw Error(ErrorCode::ShapeMismatch, "augment: image and mask shapes differ");
  }
  if (cfg.n_deformations < 0) throw Error(ErrorCode::InvalidArgument, "augment: n_deformations must be >= 0");
  if (img.height() != img.width()) throw Error(ErrorCode::NotSquare, "augment: rotations need square images");

  std::vector<AugmentedPair> out;
  out.reserve(static_cast<std::size_t>(cfg.n_deformations) * 8);
  const std::uint64_t pair_seed = split_seed(cfg.rng_seed, pair_index);
  for (int d = 0; d < cfg.n_deformations; ++d) {
    Rng rng(split_seed(pair_seed, static_cast<std::uint64_t>(d)));
    const auto grid = sample_control_grid(img.height(), img.width(), cfg.spacing, cfg.max_disp, rng);
    const auto field = grid_to_field(grid, img.height(), img.width());
    const GrayImage wimg = warp_image(img, field);
    const InstanceMask wmask = warp_mask(gt, field);
    for (int r = 0; r < 4; ++r) {
      GrayImage rimg = rotate90(wimg, r);
      InstanceMask rmask = rotate90(wmask, r);
      out.push_back({rimg, rmask, d, 90 * r, false});
      out.push_back({flip_horizontal(rimg), flip_horizontal(rmask), d, 90 * r, true});
    }
  }
  return out;
}

std::vector<AugmentedPair> augment_dataset(const std::vector<std::pair<GrayImage, InstanceMask>>& pairs,
                                           const AugmentationConfig& cfg) {
  std::vector<AugmentedPair> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto part = augment_pair(pairs[i].first, pairs[i].second, cfg, i);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

}  // namespace tseg
