#include "tseg/phantom.hpp"

#include <algorithm>
#include <cmath>

namespace tseg {

void PhantomConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::InvalidArgument, std::string("phantom: ") + what);
  };
  require(size > 0 && size % 16 == 0, "size must be a positive multiple of 16");
  require(min_tubules >= 0 && max_tubules >= min_tubules, "invalid tubule count range");
  require(min_thickness >= 1 && max_thickness >= min_thickness, "invalid thickness range");
  require(min_axis >= 2.0 * (min_thickness + 1) && max_axis >= min_axis, "invalid axis range");
  require(noise_sigma >= 0.0 && bias_amplitude >= 0.0 && bias_amplitude < 1.0, "invalid noise/bias");
  require(bias_max_step > 0.0, "bias_max_step must be > 0");
  require(jitter >= 0.0 && min_gap >= 0 && max_attempts > 0, "invalid jitter/gap/attempts");
}

BiasField radial_bias_field(Eigen::Index height, Eigen::Index width, double amplitude, double max_step) {
  const double cy = 0.5 * static_cast<double>(height - 1);
  const double cx = 0.5 * static_cast<double>(width - 1);
  const double r2max = std::max(cx * cx + cy * cy, 1.0);
  Plane<double> w(height, width);
  for (Eigen::Index y = 0; y < height; ++y) {
    for (Eigen::Index x = 0; x < width; ++x) {
      const double r2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / r2max;
      w(y, x) = 1.0 + amplitude * (1.0 - 2.0 * r2);
    }
  }
  w /= w.mean();
  BiasField f = BiasField::normalized({w});
  const double step = f.max_step();
  const double limit = 0.98 * max_step;
  if (step > limit) {
    // Field is affine in (W - 1), so scaling the deviation scales every step.
    Plane<double> scaled = 1.0 + (f.plane(0) - 1.0) * (limit / step);
    f = BiasField::normalized({scaled});
  }
  return f;
}

int scaled_gamma(int size, int gamma_at_512) {
  const double s = static_cast<double>(size) / 512.0;
  return static_cast<int>(std::lround(gamma_at_512 * s * s));
}

Phantom generate_phantom(const PhantomConfig& cfg, Rng& rng) {
  cfg.validate();
  const int n = cfg.size;
  const auto n_tubules = static_cast<int>(uniform_int(rng, cfg.min_tubules, cfg.max_tubules));
  auto jittered = [&](double level) { return std::clamp(level + uniform(rng, -cfg.jitter, cfg.jitter), 0.0, 1.0); };
  const double bg = jittered(cfg.background);
  double mem = jittered(cfg.membrane);
  double lum = jittered(cfg.lumen);

  Plane<double> clean = Plane<double>::Constant(n, n, bg);
  Plane<std::int32_t> labels = Plane<std::int32_t>::Zero(n, n);
  // Pixels within min_gap (Chebyshev) of an existing tubule.
  Plane<std::uint8_t> forbidden = Plane<std::uint8_t>::Zero(n, n);

  for (int t = 1; t <= n_tubules; ++t) {
    if (cfg.jitter_per_tubule && t > 1) {
      mem = jittered(cfg.membrane);
      lum = jittered(cfg.lumen);
    }
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
      // Later attempts draw smaller ellipses so crowded frames still fill up.
      const double shrink = static_cast<double>(attempt) / cfg.max_attempts;
      const double hi = cfg.max_axis - shrink * (cfg.max_axis - cfg.min_axis);
      const double a = 0.5 * uniform(rng, cfg.min_axis, hi);
      const double b = 0.5 * uniform(rng, cfg.min_axis, hi);
      const int max_thick = std::min<int>(cfg.max_thickness, static_cast<int>(std::floor(std::min(a, b))) - 1);
      const auto thick = static_cast<double>(uniform_int(rng, cfg.min_thickness, std::max(cfg.min_thickness, max_thick)));
      const double theta = uniform(rng, 0.0, 3.141592653589793);
      const double r = std::max(a, b);
      const double cx = uniform(rng, r + 1.0, n - 2.0 - r);
      const double cy = uniform(rng, r + 1.0, n - 2.0 - r);
      if (!(cx > 0.0 && cy > 0.0)) continue;
      const double c = std::cos(theta), s = std::sin(theta);

      // 0 = outside, 1 = lumen, 2 = membrane
      const int x0 = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
      const int x1 = std::min(n - 1, static_cast<int>(std::ceil(cx + r + 1)));
      const int y0 = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
      const int y1 = std::min(n - 1, static_cast<int>(std::ceil(cy + r + 1)));
      Plane<std::uint8_t> shape = Plane<std::uint8_t>::Zero(y1 - y0 + 1, x1 - x0 + 1);
      bool clash = false;
      for (int y = y0; y <= y1 && !clash; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const double u = c * (x - cx) + s * (y - cy);
          const double v = -s * (x - cx) + c * (y - cy);
          if ((u * u) / (a * a) + (v * v) / (b * b) > 1.0) continue;
          if (forbidden(y, x)) {
            clash = true;
            break;
          }
          const double ai = a - thick, bi = b - thick;
          const bool inner = (u * u) / (ai * ai) + (v * v) / (bi * bi) <= 1.0;
          shape(y - y0, x - x0) = inner ? 1 : 2;
        }
      }
      if (clash) continue;

      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const auto k = shape(y - y0, x - x0);
          if (!k) continue;
          labels(y, x) = t;
          clean(y, x) = k == 2 ? mem : lum;
          for (int yy = std::max(0, y - cfg.min_gap); yy <= std::min(n - 1, y + cfg.min_gap); ++yy) {
            for (int xx = std::max(0, x - cfg.min_gap); xx <= std::min(n - 1, x + cfg.min_gap); ++xx) {
              forbidden(yy, xx) = 1;
            }
          }
        }
      }
      placed = true;
    }
    if (!placed && t > cfg.min_tubules) break;
    if (!placed) {
      throw Error(ErrorCode::RejectionSampling,
                  "phantom: could not place tubule " + std::to_string(t) + " of " + std::to_string(n_tubules));
    }
  }

  BiasField field = radial_bias_field(n, n, cfg.bias_amplitude, cfg.bias_max_step);
  Plane<double> observed = field.plane(0) * clean;
  if (cfg.noise_sigma > 0.0) {
    for (Eigen::Index i = 0; i < observed.size(); ++i) observed.data()[i] += cfg.noise_sigma * normal01(rng);
  }
  observed = observed.max(0.0).min(1.0);

  return Phantom{GrayImage(observed.cast<float>().eval()), GrayImage(clean.cast<float>().eval()),
                 InstanceMask(labels), std::move(field)};
}

std::vector<std::pair<GrayImage, InstanceMask>> generate_dataset(int n, const PhantomConfig& cfg,
                                                                 std::uint64_t seed) {
  std::vector<std::pair<GrayImage, InstanceMask>> out;
  out.reserve(static_cast<std::size_t>(std::max(n, 0)));
  for (int i = 0; i < n; ++i) {
    Rng rng(split_seed(seed, static_cast<std::uint64_t>(i)));
    Phantom p = generate_phantom(cfg, rng);
    out.emplace_back(std::move(p.image), std::move(p.mask));
  }
  return out;
}

}  // namespace tseg
