#include "tseg/postprocess.hpp"

#include <array>
#include <vector>

namespace tseg {

namespace {

constexpr std::array<std::array<int, 2>, 4> kNeighbours{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

}  // namespace

void PostprocessConfig::validate() const {
  if (gamma < 0) throw Error(ErrorCode::InvalidArgument, "postprocess: gamma must be >= 0");
}

InstanceMask connected_components(const BinaryMask& mask) {
  const Eigen::Index h = mask.height(), w = mask.width();
  Plane<std::int32_t> labels = Plane<std::int32_t>::Zero(h, w);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> stack;
  std::int32_t next = 0;
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      if (!mask(y, x) || labels(y, x)) continue;
      labels(y, x) = ++next;
      stack.emplace_back(y, x);
      while (!stack.empty()) {
        const auto [cy, cx] = stack.back();
        stack.pop_back();
        for (const auto& [dy, dx] : kNeighbours) {
          const Eigen::Index ny = cy + dy, nx = cx + dx;
          if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
          if (mask(ny, nx) && !labels(ny, nx)) {
            labels(ny, nx) = next;
            stack.emplace_back(ny, nx);
          }
        }
      }
    }
  }
  return InstanceMask(labels);
}

InstanceMask remove_small(const InstanceMask& inst, int gamma) {
  if (gamma < 0) throw Error(ErrorCode::InvalidArgument, "remove_small: gamma must be >= 0");
  const auto areas = inst.areas();
  Plane<std::int32_t> out = inst.labels().unaryExpr([&](std::int32_t l) {
    return l > 0 && areas[static_cast<std::size_t>(l)] < gamma ? 0 : l;
  });
  return InstanceMask(out);
}

BinaryMask fill_holes(const BinaryMask& mask) {
  const Eigen::Index h = mask.height(), w = mask.width();
  Plane<std::uint8_t> cur = mask.data();
  bool changed = h > 2 && w > 2;
  while (changed) {
    changed = false;
    Plane<std::uint8_t> next = cur;
    for (Eigen::Index y = 1; y + 1 < h; ++y) {
      for (Eigen::Index x = 1; x + 1 < w; ++x) {
        if (!cur(y, x) && cur(y - 1, x) && cur(y + 1, x) && cur(y, x - 1) && cur(y, x + 1)) {
          next(y, x) = 1;
          changed = true;
        }
      }
    }
    cur = std::move(next);
  }
  return BinaryMask(std::move(cur));
}

BinaryMask fill_holes_flood(const BinaryMask& mask) {
  const Eigen::Index h = mask.height(), w = mask.width();
  // Background reachable from the border stays background.
  Plane<std::uint8_t> outside = Plane<std::uint8_t>::Zero(h, w);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> stack;
  auto seed = [&](Eigen::Index y, Eigen::Index x) {
    if (!mask(y, x) && !outside(y, x)) {
      outside(y, x) = 1;
      stack.emplace_back(y, x);
    }
  };
  for (Eigen::Index x = 0; x < w; ++x) {
    seed(0, x);
    seed(h - 1, x);
  }
  for (Eigen::Index y = 0; y < h; ++y) {
    seed(y, 0);
    seed(y, w - 1);
  }
  while (!stack.empty()) {
    const auto [cy, cx] = stack.back();
    stack.pop_back();
    for (const auto& [dy, dx] : kNeighbours) {
      const Eigen::Index ny = cy + dy, nx = cx + dx;
      if (ny >= 0 && nx >= 0 && ny < h && nx < w) seed(ny, nx);
    }
  }
  return BinaryMask((1 - outside).eval());
}

InstanceMask postprocess(const BinaryMask& mask, const PostprocessConfig& cfg) {
  cfg.validate();
  const BinaryMask kept = remove_small(connected_components(mask), cfg.gamma).binarize();
  return connected_components(cfg.flood_fill ? fill_holes_flood(kept) : fill_holes(kept));
}

InstanceMask postprocess(const GrayImage& probability, const PostprocessConfig& cfg) {
  return postprocess(BinaryMask((probability.data() > 0.5f).cast<std::uint8_t>()), cfg);
}

}  // namespace tseg
