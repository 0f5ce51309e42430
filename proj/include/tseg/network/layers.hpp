#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include "tseg/imagedata.hpp"
#include "tseg/network/tensor.hpp"

namespace tseg::nn {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Mode { Train, Infer };

/// 3x3 convolution, stride 1, zero padding 1. weight is laid out
/// [c_out][c_in][ky][kx].
template <typename Scalar>
struct ConvLayer {
  Index c_in = 0;
  Index c_out = 0;
  Vec<Scalar> weight;
  Vec<Scalar> bias;

  ConvLayer() = default;
  ConvLayer(Index in, Index out)
      : c_in(in), c_out(out), weight(Vec<Scalar>::Zero(out * in * 9)), bias(Vec<Scalar>::Zero(out)) {}

  Eigen::Map<const RowMat<Scalar>> matrix() const { return {weight.data(), c_out, c_in * 9}; }
};

template <typename Scalar>
struct ConvGrads {
  Tensor4<Scalar> x;
  Vec<Scalar> weight;
  Vec<Scalar> bias;
};

template <typename Scalar>
struct BatchNormLayer {
  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.1;

  Vec<Scalar> gamma;
  Vec<Scalar> beta;
  Vec<Scalar> running_mean;
  Vec<Scalar> running_var;
  /// False until the first train-mode pass has populated running statistics.
  bool tracked = false;

  BatchNormLayer() = default;
  explicit BatchNormLayer(Index channels)
      : gamma(Vec<Scalar>::Ones(channels)),
        beta(Vec<Scalar>::Zero(channels)),
        running_mean(Vec<Scalar>::Zero(channels)),
        running_var(Vec<Scalar>::Ones(channels)) {}

  Index channels() const noexcept { return gamma.size(); }
};

template <typename Scalar>
struct BatchNormCache {
  Tensor4<Scalar> xhat;
  Vec<Scalar> inv_std;
};

template <typename Scalar>
struct BatchNormGrads {
  Tensor4<Scalar> x;
  Vec<Scalar> gamma;
  Vec<Scalar> beta;
};

template <typename Scalar>
struct LossResult {
  Scalar loss = 0;
  Tensor4<Scalar> grad;
};

namespace detail {

// cols is (c_in * 9) x (h * w) for one batch item.
template <typename Scalar>
RowMat<Scalar> im2col(const Tensor4<Scalar>& x, Index n) {
  const Index C = x.c(), H = x.h(), W = x.w();
  RowMat<Scalar> cols = RowMat<Scalar>::Zero(C * 9, H * W);
  for (Index c = 0; c < C; ++c) {
    const auto src = x.plane(n, c);
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        Scalar* row = cols.row(c * 9 + ky * 3 + kx).data();
        const Index y0 = std::max<Index>(0, 1 - ky), y1 = std::min<Index>(H, H + 1 - ky);
        const Index x0 = std::max<Index>(0, 1 - kx), x1 = std::min<Index>(W, W + 1 - kx);
        for (Index y = y0; y < y1; ++y) {
          const Scalar* s = src.data() + (y + ky - 1) * W;
          for (Index xx = x0; xx < x1; ++xx) row[y * W + xx] = s[xx + kx - 1];
        }
      }
    }
  }
  return cols;
}

template <typename Scalar>
void col2im(const RowMat<Scalar>& cols, Tensor4<Scalar>& x, Index n) {
  const Index C = x.c(), H = x.h(), W = x.w();
  for (Index c = 0; c < C; ++c) {
    auto dst = x.plane(n, c);
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const Scalar* row = cols.row(c * 9 + ky * 3 + kx).data();
        const Index y0 = std::max<Index>(0, 1 - ky), y1 = std::min<Index>(H, H + 1 - ky);
        const Index x0 = std::max<Index>(0, 1 - kx), x1 = std::min<Index>(W, W + 1 - kx);
        for (Index y = y0; y < y1; ++y) {
          Scalar* d = &dst(y + ky - 1, 0);
          for (Index xx = x0; xx < x1; ++xx) d[xx + kx - 1] += row[y * W + xx];
        }
      }
    }
  }
}

}  // namespace detail

template <typename Scalar>
Tensor4<Scalar> conv2d_forward(const Tensor4<Scalar>& x, const ConvLayer<Scalar>& p) {
  if (x.c() != p.c_in) throw Error(ErrorCode::ChannelMismatch, "conv2d: input channels != layer c_in");
  Tensor4<Scalar> y(x.n(), p.c_out, x.h(), x.w());
  const Index hw = x.h() * x.w();
  for (Index n = 0; n < x.n(); ++n) {
    const RowMat<Scalar> cols = detail::im2col(x, n);
    Eigen::Map<RowMat<Scalar>> out(y.data() + n * p.c_out * hw, p.c_out, hw);
    out.noalias() = p.matrix() * cols;
    out.colwise() += p.bias;
  }
  return y;
}

/// Needs the forward input; im2col is recomputed rather than cached.
template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor4<Scalar>& x, const ConvLayer<Scalar>& p,
                                  const Tensor4<Scalar>& grad_out) {
  if (x.c() != p.c_in || grad_out.c() != p.c_out) {
    throw Error(ErrorCode::ChannelMismatch, "conv2d_backward: channel mismatch");
  }
  ConvGrads<Scalar> g{Tensor4<Scalar>(x.shape()), Vec<Scalar>::Zero(p.weight.size()), Vec<Scalar>::Zero(p.c_out)};
  Eigen::Map<RowMat<Scalar>> gw(g.weight.data(), p.c_out, p.c_in * 9);
  const Index hw = x.h() * x.w();
  for (Index n = 0; n < x.n(); ++n) {
    const RowMat<Scalar> cols = detail::im2col(x, n);
    Eigen::Map<const RowMat<Scalar>> go(grad_out.data() + n * p.c_out * hw, p.c_out, hw);
    gw.noalias() += go * cols.transpose();
    g.bias += go.rowwise().sum();
    const RowMat<Scalar> gcols = p.matrix().transpose() * go;
    detail::col2im(gcols, g.x, n);
  }
  return g;
}

template <typename Scalar>
Tensor4<Scalar> batchnorm_infer(const Tensor4<Scalar>& x, const BatchNormLayer<Scalar>& p) {
  if (x.c() != p.channels()) throw Error(ErrorCode::ChannelMismatch, "batchnorm: channel mismatch");
  if (!p.tracked) throw Error(ErrorCode::RunningStatsUnset, "batchnorm: running statistics unset");
  Tensor4<Scalar> y(x.shape());
  for (Index c = 0; c < x.c(); ++c) {
    const Scalar inv = Scalar(1) / std::sqrt(p.running_var[c] + Scalar(BatchNormLayer<Scalar>::kEpsilon));
    for (Index n = 0; n < x.n(); ++n) {
      y.plane(n, c) = ((x.plane(n, c).array() - p.running_mean[c]) * (inv * p.gamma[c]) + p.beta[c]).matrix();
    }
  }
  return y;
}

/// Train mode normalizes with per-channel batch statistics over (n, y, x),
/// updates the running statistics and fills `cache`; infer mode uses the
/// running statistics.
template <typename Scalar>
Tensor4<Scalar> batchnorm_forward(const Tensor4<Scalar>& x, BatchNormLayer<Scalar>& p, Mode mode,
                                  BatchNormCache<Scalar>* cache = nullptr) {
  if (x.c() != p.channels()) throw Error(ErrorCode::ChannelMismatch, "batchnorm: channel mismatch");
  const Index C = x.c(), N = x.n();
  const auto count = static_cast<double>(N * x.h() * x.w());
  if (mode == Mode::Infer) return batchnorm_infer(x, p);

  Tensor4<Scalar> y(x.shape());
  Tensor4<Scalar> xhat(x.shape());
  Vec<Scalar> inv_std(C);
  for (Index c = 0; c < C; ++c) {
    double sum = 0.0;
    for (Index n = 0; n < N; ++n) sum += static_cast<double>(x.plane(n, c).sum());
    const double mean = sum / count;
    double sq = 0.0;
    for (Index n = 0; n < N; ++n) {
      sq += static_cast<double>((x.plane(n, c).array() - static_cast<Scalar>(mean)).square().sum());
    }
    const double var = sq / count;
    const double inv = 1.0 / std::sqrt(var + BatchNormLayer<Scalar>::kEpsilon);
    inv_std[c] = static_cast<Scalar>(inv);
    for (Index n = 0; n < N; ++n) {
      xhat.plane(n, c) = ((x.plane(n, c).array() - static_cast<Scalar>(mean)) * static_cast<Scalar>(inv)).matrix();
      y.plane(n, c) = (xhat.plane(n, c).array() * p.gamma[c] + p.beta[c]).matrix();
    }
    constexpr double m = BatchNormLayer<Scalar>::kMomentum;
    p.running_mean[c] = static_cast<Scalar>((1.0 - m) * p.running_mean[c] + m * mean);
    p.running_var[c] = static_cast<Scalar>((1.0 - m) * p.running_var[c] + m * var);
  }
  p.tracked = true;
  if (cache) *cache = {std::move(xhat), std::move(inv_std)};
  return y;
}

template <typename Scalar>
BatchNormGrads<Scalar> batchnorm_backward(const BatchNormCache<Scalar>& cache, const BatchNormLayer<Scalar>& p,
                                          const Tensor4<Scalar>& grad_out) {
  const Index C = grad_out.c(), N = grad_out.n();
  const auto count = static_cast<Scalar>(N * grad_out.h() * grad_out.w());
  BatchNormGrads<Scalar> g{Tensor4<Scalar>(grad_out.shape()), Vec<Scalar>::Zero(C), Vec<Scalar>::Zero(C)};
  for (Index c = 0; c < C; ++c) {
    Scalar sum_dy = 0, sum_dy_xhat = 0;
    for (Index n = 0; n < N; ++n) {
      sum_dy += grad_out.plane(n, c).sum();
      sum_dy_xhat += (grad_out.plane(n, c).array() * cache.xhat.plane(n, c).array()).sum();
    }
    g.gamma[c] = sum_dy_xhat;
    g.beta[c] = sum_dy;
    const Scalar k = p.gamma[c] * cache.inv_std[c] / count;
    for (Index n = 0; n < N; ++n) {
      g.x.plane(n, c) =
          (k * (count * grad_out.plane(n, c).array() - sum_dy - cache.xhat.plane(n, c).array() * sum_dy_xhat))
              .matrix();
    }
  }
  return g;
}

template <typename Scalar>
Tensor4<Scalar> relu_forward(const Tensor4<Scalar>& x) {
  return Tensor4<Scalar>(x.shape(), x.vec().cwiseMax(Scalar(0)));
}

/// Gradient passes where the forward input was strictly positive.
template <typename Scalar>
Tensor4<Scalar> relu_backward(const Tensor4<Scalar>& x, const Tensor4<Scalar>& grad_out) {
  return Tensor4<Scalar>(x.shape(), (x.vec().array() > Scalar(0)).select(grad_out.vec(), Scalar(0)));
}

/// 2x2 max-pool, stride 2. Ties resolve to the smallest window offset.
template <typename Scalar>
std::pair<Tensor4<Scalar>, PoolIndices> maxpool2x2_forward(const Tensor4<Scalar>& x) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0) throw Error(ErrorCode::OddSpatialDims, "maxpool: odd spatial dimensions");
  const Shape4 ps{x.n(), x.c(), x.h() / 2, x.w() / 2};
  Tensor4<Scalar> y(ps);
  PoolIndices idx{ps, std::vector<std::uint8_t>(static_cast<std::size_t>(ps.size()))};
  std::size_t k = 0;
  for (Index n = 0; n < ps.n; ++n) {
    for (Index c = 0; c < ps.c; ++c) {
      for (Index i = 0; i < ps.h; ++i) {
        for (Index j = 0; j < ps.w; ++j, ++k) {
          Scalar best = x(n, c, 2 * i, 2 * j);
          std::uint8_t arg = 0;
          for (std::uint8_t o = 1; o < 4; ++o) {
            const Scalar v = x(n, c, 2 * i + o / 2, 2 * j + o % 2);
            if (v > best) {
              best = v;
              arg = o;
            }
          }
          y(n, c, i, j) = best;
          idx.offsets[k] = arg;
        }
      }
    }
  }
  return {std::move(y), std::move(idx)};
}

/// Scatters each value to its recorded window offset; zeros elsewhere.
template <typename Scalar>
Tensor4<Scalar> maxunpool2x2(const Tensor4<Scalar>& x, const PoolIndices& idx) {
  if (!(x.shape() == idx.pooled)) {
    throw Error(ErrorCode::ShapeMismatch, "maxunpool: input " + x.shape().str() + " vs indices " + idx.pooled.str());
  }
  Tensor4<Scalar> y(x.n(), x.c(), 2 * x.h(), 2 * x.w());
  std::size_t k = 0;
  for (Index n = 0; n < x.n(); ++n) {
    for (Index c = 0; c < x.c(); ++c) {
      for (Index i = 0; i < x.h(); ++i) {
        for (Index j = 0; j < x.w(); ++j, ++k) {
          const auto o = idx.offsets[k];
          y(n, c, 2 * i + o / 2, 2 * j + o % 2) = x(n, c, i, j);
        }
      }
    }
  }
  return y;
}

/// Gathers from the recorded positions (adjoint of maxunpool2x2).
template <typename Scalar>
Tensor4<Scalar> maxunpool2x2_backward(const PoolIndices& idx, const Tensor4<Scalar>& grad_out) {
  const Shape4 ps = idx.pooled;
  if (grad_out.shape() != Shape4{ps.n, ps.c, 2 * ps.h, 2 * ps.w}) {
    throw Error(ErrorCode::ShapeMismatch, "maxunpool_backward: gradient shape mismatch");
  }
  Tensor4<Scalar> g(ps);
  std::size_t k = 0;
  for (Index n = 0; n < ps.n; ++n) {
    for (Index c = 0; c < ps.c; ++c) {
      for (Index i = 0; i < ps.h; ++i) {
        for (Index j = 0; j < ps.w; ++j, ++k) {
          const auto o = idx.offsets[k];
          g(n, c, i, j) = grad_out(n, c, 2 * i + o / 2, 2 * j + o % 2);
        }
      }
    }
  }
  return g;
}

/// Routes each pooled gradient to its argmax position.
template <typename Scalar>
Tensor4<Scalar> maxpool2x2_backward(const PoolIndices& idx, const Tensor4<Scalar>& grad_out) {
  return maxunpool2x2(grad_out, idx);
}

/// Per-pixel softmax over channels.
template <typename Scalar>
Tensor4<Scalar> softmax(const Tensor4<Scalar>& logits) {
  Tensor4<Scalar> p(logits.shape());
  for (Index n = 0; n < logits.n(); ++n) {
    for (Index y = 0; y < logits.h(); ++y) {
      for (Index x = 0; x < logits.w(); ++x) {
        Scalar mx = logits(n, 0, y, x);
        for (Index c = 1; c < logits.c(); ++c) mx = std::max(mx, logits(n, c, y, x));
        Scalar sum = 0;
        for (Index c = 0; c < logits.c(); ++c) sum += (p(n, c, y, x) = std::exp(logits(n, c, y, x) - mx));
        for (Index c = 0; c < logits.c(); ++c) p(n, c, y, x) /= sum;
      }
    }
  }
  return p;
}

/// Mean over pixels of -log p(target); channel 1 is the foreground class.
/// grad = (p - onehot) / pixel count. One mask per batch item.
template <typename Scalar>
LossResult<Scalar> softmax_cross_entropy(const Tensor4<Scalar>& logits, std::span<const BinaryMask> targets) {
  if (logits.c() != 2) throw Error(ErrorCode::ChannelMismatch, "softmax_cross_entropy: expects 2 channels");
  if (static_cast<Index>(targets.size()) != logits.n()) {
    throw Error(ErrorCode::ShapeMismatch, "softmax_cross_entropy: one target per batch item required");
  }
  for (const auto& t : targets) {
    if (t.height() != logits.h() || t.width() != logits.w()) {
      throw Error(ErrorCode::ShapeMismatch, "softmax_cross_entropy: target shape mismatch");
    }
  }
  LossResult<Scalar> r{Scalar(0), softmax(logits)};
  const auto count = static_cast<Scalar>(logits.n() * logits.h() * logits.w());
  double total = 0.0;
  for (Index n = 0; n < logits.n(); ++n) {
    for (Index y = 0; y < logits.h(); ++y) {
      for (Index x = 0; x < logits.w(); ++x) {
        const Index t = targets[static_cast<std::size_t>(n)](y, x) ? 1 : 0;
        const Scalar a = logits(n, t, y, x), b = logits(n, 1 - t, y, x);
        // -log softmax_t = log(1 + exp(b - a)), evaluated stably.
        const Scalar d = b - a;
        total += static_cast<double>(d > 0 ? d + std::log1p(std::exp(-d)) : std::log1p(std::exp(d)));
        r.grad(n, t, y, x) -= Scalar(1);
      }
    }
  }
  r.grad.vec() /= count;
  r.loss = static_cast<Scalar>(total / static_cast<double>(count));
  return r;
}

}  // namespace tseg::nn
