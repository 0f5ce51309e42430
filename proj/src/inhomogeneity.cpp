#include "tseg/inhomogeneity.hpp"

#include <algorithm>
#include <cmath>

namespace tseg {

namespace {

using Volume = std::vector<Plane<double>>;

// Reference class: voxels within this relative distance of the median level.
constexpr double kReferenceBand = 0.5;
// Light denoising applied before voxels are classified.
constexpr double kClassSigma = 1.0;

Volume ones_like(const Volume& v) {
  Volume out;
  for (const auto& p : v) out.push_back(Plane<double>::Ones(p.rows(), p.cols()));
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// out[i] = sum_j k[j] * in[i + j - r] over in-range taps only.
template <typename Get, typename Set>
void convolve_line(Eigen::Index n, const std::vector<double>& k, Get get, Set set) {
  const auto r = static_cast<Eigen::Index>(k.size() / 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    const Eigen::Index lo = std::max<Eigen::Index>(0, i - r);
    const Eigen::Index hi = std::min<Eigen::Index>(n - 1, i + r);
    for (Eigen::Index j = lo; j <= hi; ++j) acc += k[static_cast<std::size_t>(j - i + r)] * get(j);
    set(i, acc);
  }
}

Volume to_volume(const ImageStack& stack) {
  Volume v;
  v.reserve(stack.depth());
  for (const auto& p : stack.planes()) v.push_back(p.data().cast<double>());
  return v;
}

double volume_mean(const Volume& v) {
  double sum = 0.0;
  Eigen::Index n = 0;
  for (const auto& p : v) {
    sum += p.sum();
    n += p.size();
  }
  return sum / static_cast<double>(n);
}

}  // namespace

std::vector<Plane<double>> gaussian_smooth(const std::vector<Plane<double>>& volume, double sigma,
                                           double sigma_z) {
  Volume out = volume;
  if (sigma > 0.0) {
    const auto k = gaussian_kernel(sigma);
    for (auto& p : out) {
      Plane<double> tmp(p.rows(), p.cols());
      for (Eigen::Index y = 0; y < p.rows(); ++y) {
        convolve_line(p.cols(), k, [&](Eigen::Index x) { return p(y, x); },
                      [&](Eigen::Index x, double v) { tmp(y, x) = v; });
      }
      for (Eigen::Index x = 0; x < p.cols(); ++x) {
        convolve_line(p.rows(), k, [&](Eigen::Index y) { return tmp(y, x); },
                      [&](Eigen::Index y, double v) { p(y, x) = v; });
      }
    }
  }
  if (sigma_z > 0.0 && out.size() > 1) {
    const auto k = gaussian_kernel(sigma_z);
    const Volume src = out;
    const auto depth = static_cast<Eigen::Index>(out.size());
    for (Eigen::Index y = 0; y < out.front().rows(); ++y) {
      for (Eigen::Index x = 0; x < out.front().cols(); ++x) {
        convolve_line(depth, k, [&](Eigen::Index z) { return src[z](y, x); },
                      [&](Eigen::Index z, double v) { out[z](y, x) = v; });
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

BiasField BiasField::normalized(std::vector<Plane<double>> planes) {
  if (planes.empty()) throw Error(ErrorCode::InvalidArgument, "BiasField: empty");
  for (const auto& p : planes) {
    if (p.rows() != planes.front().rows() || p.cols() != planes.front().cols()) {
      throw Error(ErrorCode::ShapeMismatch, "BiasField: planes differ in size");
    }
    if (!(p > 0.0).all() || !p.isFinite().all()) {
      throw Error(ErrorCode::InvalidArgument, "BiasField: values must be positive and finite");
    }
  }
  const double m = volume_mean(planes);
  for (auto& p : planes) p /= m;
  return BiasField(std::move(planes));
}

double BiasField::mean() const { return volume_mean(planes_); }

double BiasField::min() const {
  double m = planes_.front().minCoeff();
  for (const auto& p : planes_) m = std::min(m, p.minCoeff());
  return m;
}

double BiasField::max_step() const {
  double step = 0.0;
  for (const auto& p : planes_) {
    if (p.cols() > 1) step = std::max(step, (p.rightCols(p.cols() - 1) - p.leftCols(p.cols() - 1)).abs().maxCoeff());
    if (p.rows() > 1) step = std::max(step, (p.bottomRows(p.rows() - 1) - p.topRows(p.rows() - 1)).abs().maxCoeff());
  }
  for (std::size_t z = 1; z < planes_.size(); ++z) {
    step = std::max(step, (planes_[z] - planes_[z - 1]).abs().maxCoeff());
  }
  return step;
}

bool BiasField::satisfies_invariants(double max_step_bound) const {
  return min() > 0.0 && std::abs(mean() - 1.0) <= 1e-6 && max_step() <= max_step_bound;
}

double CorrectionConfig::sigma_for(Eigen::Index height, Eigen::Index width) const {
  return smoothing_sigma > 0.0 ? smoothing_sigma : static_cast<double>(std::min(height, width)) / 8.0;
}

void CorrectionConfig::validate() const {
  if (!std::isfinite(smoothing_sigma) || smoothing_sigma < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "correction: sigma must be > 0");
  }
  if (iterations < 1) throw Error(ErrorCode::InvalidArgument, "correction: iterations must be >= 1");
  if (!(epsilon > 0.0 && epsilon <= 0.1)) {
    throw Error(ErrorCode::InvalidArgument, "correction: epsilon must be in (0, 0.1]");
  }
  if (!(max_step > 0.0) || !std::isfinite(max_step)) {
    throw Error(ErrorCode::InvalidArgument, "correction: max_step must be > 0");
  }
}

BiasField estimate_field(const ImageStack& stack, const CorrectionConfig& cfg) {
  cfg.validate();
  const Volume observed = to_volume(stack);
  bool any_positive = false;
  for (const auto& p : observed) any_positive = any_positive || (p > 0.0).any();
  if (!any_positive) throw Error(ErrorCode::UndefinedField, "bias field undefined for an all-zero stack");

  const double sigma = cfg.sigma_for(stack.height(), stack.width());
  const double sigma_z = stack.depth() > 1 ? sigma / 4.0 : 0.0;
  const double eps = cfg.epsilon;

  Volume corrected = observed;
  Volume field;
  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<double> positive;
    for (const auto& p : corrected) {
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p.data()[i] > 0.0) positive.push_back(p.data()[i]);
      }
    }
    const auto mid = positive.begin() + static_cast<std::ptrdiff_t>((positive.size() - 1) / 2);
    std::nth_element(positive.begin(), mid, positive.end());
    const double level = *mid;
    const Volume denoised = gaussian_smooth(corrected, kClassSigma, 0.0);
    const Volume ones_smoothed = gaussian_smooth(ones_like(corrected), kClassSigma, 0.0);

    Volume indicator, weighted;
    double ref_sum = 0.0;
    Eigen::Index ref_count = 0;
    for (std::size_t z = 0; z < corrected.size(); ++z) {
      // Symmetric window around the median so zero-mean noise does not bias the class.
      const Plane<double> c = denoised[z] / ones_smoothed[z];
      Plane<double> m = ((c - level).abs() <= kReferenceBand * level).cast<double>();
      ref_sum += (m * corrected[z]).sum();
      ref_count += static_cast<Eigen::Index>(m.sum());
      indicator.push_back(std::move(m));
    }
    const double ref = std::max(ref_sum / static_cast<double>(ref_count), eps);
    for (std::size_t z = 0; z < observed.size(); ++z) weighted.push_back(indicator[z] * observed[z] / ref);

    const Volume num = gaussian_smooth(weighted, sigma, sigma_z);
    const Volume den = gaussian_smooth(indicator, sigma, sigma_z);
    field.clear();
    for (std::size_t z = 0; z < observed.size(); ++z) {
      Plane<double> w = (den[z] > 1e-12).select(num[z] / den[z].max(1e-12), 1.0);
      field.push_back(w.max(eps));
    }
    const double m = volume_mean(field);
    for (std::size_t z = 0; z < observed.size(); ++z) {
      field[z] /= m;
      corrected[z] = observed[z] / field[z].max(eps);
    }
  }
  BiasField estimate = BiasField::normalized(std::move(field));
  const double step = estimate.max_step();
  if (step > cfg.max_step) {
    // Mean stays 1 because the deviation from 1 has zero mean.
    const double s = cfg.max_step / step;
    Volume scaled;
    for (std::size_t z = 0; z < estimate.depth(); ++z) scaled.push_back(1.0 + (estimate.plane(z) - 1.0) * s);
    estimate = BiasField::normalized(std::move(scaled));
  }
  return estimate;
}

ImageStack correct(const ImageStack& stack, const BiasField& field, double epsilon) {
  if (stack.depth() != field.depth() || stack.height() != field.height() || stack.width() != field.width()) {
    throw Error(ErrorCode::ShapeMismatch, "correct: stack and field shapes differ");
  }
  std::vector<GrayImage> planes;
  planes.reserve(stack.depth());
  for (std::size_t z = 0; z < stack.depth(); ++z) {
    const Plane<double> out = (stack.plane(z).data().cast<double>() / field.plane(z).max(epsilon)).min(1.0).max(0.0);
    planes.emplace_back(out.cast<float>().eval());
  }
  return ImageStack(std::move(planes));
}

ImageStack correct_volume(const ImageStack& stack, const CorrectionConfig& cfg) {
  return correct(stack, estimate_field(stack, cfg), cfg.epsilon);
}

}  // namespace tseg
