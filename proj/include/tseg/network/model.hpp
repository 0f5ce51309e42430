#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tseg/network/layers.hpp"
#include "tseg/rng.hpp"

namespace tseg::nn {

/// Encoder-decoder channel plan. Every encoder block is two conv-BN-ReLU
/// units; E1..E4 end in a 2x2 max-pool whose indices drive the unpooling of
/// D5..D2. D1 starts at the bottleneck resolution without unpooling, and D5
/// ends in a 2-channel classifier conv followed by softmax.
struct Architecture {
  int base_channels = 16;

  static Architecture full() { return {16}; }
  static Architecture desk() { return {8}; }

  std::array<Index, 5> encoder_channels() const {
    const Index b = base_channels;
    return {b, 2 * b, 4 * b, 8 * b, 16 * b};
  }
  std::string plan() const;
  std::uint64_t hash() const { return fnv1a64(plan()); }
  bool operator==(const Architecture&) const = default;
};

/// Number of 2x2 pooling stages; inputs must be divisible by 2^kPoolStages.
inline constexpr int kPoolStages = 4;
inline constexpr Index kSpatialDivisor = 16;

template <typename Scalar>
struct ConvUnit {
  std::string name;  // "E1.1", ..., "D5.1"
  ConvLayer<Scalar> conv;
  BatchNormLayer<Scalar> bn;
};

template <typename Scalar>
struct ParamRef {
  std::string name;
  std::vector<Index> dims;
  Vec<Scalar>* value;
};

template <typename Scalar>
using ModelGrads = std::vector<Vec<Scalar>>;

template <typename Scalar>
class Model {
 public:
  Model() = default;
  /// Zero biases, conv weights ~ N(0, 2 / (9 * c_in)), gamma 1, beta 0.
  Model(Architecture arch, std::uint64_t seed);

  const Architecture& architecture() const noexcept { return arch_; }
  std::vector<ConvUnit<Scalar>>& units() noexcept { return units_; }
  const std::vector<ConvUnit<Scalar>>& units() const noexcept { return units_; }
  ConvLayer<Scalar>& classifier() noexcept { return classifier_; }
  const ConvLayer<Scalar>& classifier() const noexcept { return classifier_; }

  /// Learnable tensors in a fixed order; gradients follow the same order.
  std::vector<ParamRef<Scalar>> parameters();
  /// Learnable tensors plus batch-norm running statistics (checkpoint order).
  std::vector<ParamRef<Scalar>> state();

  /// True once every batch-norm layer has running statistics.
  bool trained() const;
  void set_tracked(bool tracked);

  /// Bumped by every parameter update; forward caches remember it.
  std::uint64_t version() const noexcept { return version_; }
  void bump_version() noexcept { ++version_; }

  template <typename To>
  Model<To> cast() const;

 private:
  template <typename>
  friend class Model;

  Architecture arch_;
  std::vector<ConvUnit<Scalar>> units_;
  ConvLayer<Scalar> classifier_;
  std::uint64_t version_ = 0;
};

template <typename Scalar>
struct UnitCache {
  Tensor4<Scalar> input;
  BatchNormCache<Scalar> bn;
  Tensor4<Scalar> pre_activation;
};

using ShapeTrace = std::vector<std::pair<std::string, Shape4>>;

template <typename Scalar>
struct ForwardCache {
  std::vector<UnitCache<Scalar>> units;
  std::array<PoolIndices, kPoolStages> pools;
  Tensor4<Scalar> classifier_input;
  Tensor4<Scalar> logits;
  std::uint64_t version = 0;
};

template <typename Scalar>
struct ForwardResult {
  Tensor4<Scalar> probabilities;  // n x 2 x H x W
  ForwardCache<Scalar> cache;     // populated in train mode only
  ShapeTrace trace;               // "E1.in" ... "E5.in", "D1.in" ... "D5.in", "softmax.out"
};

void check_spatial(Index h, Index w);

namespace detail {

template <typename Scalar>
Tensor4<Scalar> unit_forward(ConvUnit<Scalar>& u, const Tensor4<Scalar>& x, Mode mode, UnitCache<Scalar>* cache) {
  Tensor4<Scalar> z = conv2d_forward(x, u.conv);
  Tensor4<Scalar> a = mode == Mode::Train ? batchnorm_forward(z, u.bn, mode, cache ? &cache->bn : nullptr)
                                          : batchnorm_infer(z, u.bn);
  Tensor4<Scalar> out = relu_forward(a);
  if (cache) {
    cache->input = x;
    cache->pre_activation = std::move(a);
  }
  return out;
}

template <typename Scalar>
Tensor4<Scalar> unit_backward(const ConvUnit<Scalar>& u, const UnitCache<Scalar>& cache, const Tensor4<Scalar>& grad,
                              Vec<Scalar>* gw, Vec<Scalar>* gb, Vec<Scalar>* ggamma, Vec<Scalar>* gbeta) {
  const Tensor4<Scalar> g_act = relu_backward(cache.pre_activation, grad);
  BatchNormGrads<Scalar> gbn = batchnorm_backward(cache.bn, u.bn, g_act);
  *ggamma = std::move(gbn.gamma);
  *gbeta = std::move(gbn.beta);
  ConvGrads<Scalar> gc = conv2d_backward(cache.input, u.conv, gbn.x);
  *gw = std::move(gc.weight);
  *gb = std::move(gc.bias);
  return std::move(gc.x);
}

// Unit index ranges per block: E1..E5 own units [0,10), D1..D4 [10,18), D5 [18,19).
inline constexpr int kEncoderUnits = 10;
inline constexpr int kUnitCount = 19;

template <typename Scalar>
ForwardResult<Scalar> run_forward(Model<Scalar>& model, const Tensor4<Scalar>& x, Mode mode) {
  if (x.c() != 1) throw Error(ErrorCode::ChannelMismatch, "forward: expects single-channel input");
  check_spatial(x.h(), x.w());
  const bool train = mode == Mode::Train;
  ForwardResult<Scalar> r;
  auto& cache = r.cache;
  if (train) cache.units.resize(kUnitCount);
  auto& units = model.units();
  auto unit = [&](int i, const Tensor4<Scalar>& in) {
    return unit_forward(units[static_cast<std::size_t>(i)], in, mode, train ? &cache.units[static_cast<std::size_t>(i)] : nullptr);
  };
  std::array<PoolIndices, kPoolStages> pools;

  Tensor4<Scalar> h = x;
  for (int e = 0; e < 5; ++e) {
    r.trace.emplace_back("E" + std::to_string(e + 1) + ".in", h.shape());
    h = unit(2 * e, h);
    h = unit(2 * e + 1, h);
    if (e < kPoolStages) {
      auto [pooled, idx] = maxpool2x2_forward(h);
      h = std::move(pooled);
      pools[static_cast<std::size_t>(e)] = std::move(idx);
    }
  }
  for (int d = 0; d < 5; ++d) {
    r.trace.emplace_back("D" + std::to_string(d + 1) + ".in", h.shape());
    if (d > 0) h = maxunpool2x2(h, pools[static_cast<std::size_t>(kPoolStages - d)]);
    h = unit(kEncoderUnits + 2 * d, h);
    if (d < 4) h = unit(kEncoderUnits + 2 * d + 1, h);
  }
  Tensor4<Scalar> logits = conv2d_forward(h, model.classifier());
  r.probabilities = softmax(logits);
  r.trace.emplace_back("softmax.out", r.probabilities.shape());
  if (train) {
    cache.pools = std::move(pools);
    cache.classifier_input = std::move(h);
    cache.logits = std::move(logits);
    cache.version = model.version();
  }
  return r;
}

}  // namespace detail

/// Train-mode pass: batch statistics, running-stat update, cache for backward.
template <typename Scalar>
ForwardResult<Scalar> forward(Model<Scalar>& model, const Tensor4<Scalar>& x) {
  return detail::run_forward(model, x, Mode::Train);
}

/// Inference pass with running statistics; the model is not modified.
template <typename Scalar>
ForwardResult<Scalar> forward_infer(const Model<Scalar>& model, const Tensor4<Scalar>& x) {
  // Infer mode only reads parameters.
  return detail::run_forward(const_cast<Model<Scalar>&>(model), x, Mode::Infer);
}

template <typename Scalar>
struct BackwardResult {
  Scalar loss = 0;
  ModelGrads<Scalar> grads;  // parameters() order
};

/// Loss and full-model gradient for the targets of a train-mode forward.
template <typename Scalar>
BackwardResult<Scalar> backward(const Model<Scalar>& model, const ForwardCache<Scalar>& cache,
                                std::span<const BinaryMask> targets) {
  if (cache.units.empty()) throw Error(ErrorCode::StaleCache, "backward: cache is not from a train-mode forward");
  if (cache.version != model.version()) {
    throw Error(ErrorCode::StaleCache, "backward: parameters changed since the forward pass");
  }
  LossResult<Scalar> loss = softmax_cross_entropy(cache.logits, targets);
  BackwardResult<Scalar> r{loss.loss, ModelGrads<Scalar>(detail::kUnitCount * 4 + 2)};
  const auto& units = model.units();
  auto unit_back = [&](int i, const Tensor4<Scalar>& g) {
    const auto k = static_cast<std::size_t>(i);
    return detail::unit_backward(units[k], cache.units[k], g, &r.grads[4 * k], &r.grads[4 * k + 1],
                                 &r.grads[4 * k + 2], &r.grads[4 * k + 3]);
  };

  ConvGrads<Scalar> gc = conv2d_backward(cache.classifier_input, model.classifier(), loss.grad);
  r.grads[4 * detail::kUnitCount] = std::move(gc.weight);
  r.grads[4 * detail::kUnitCount + 1] = std::move(gc.bias);
  Tensor4<Scalar> g = std::move(gc.x);
  for (int d = 4; d >= 0; --d) {
    if (d < 4) g = unit_back(detail::kEncoderUnits + 2 * d + 1, g);
    g = unit_back(detail::kEncoderUnits + 2 * d, g);
    if (d > 0) g = maxunpool2x2_backward(cache.pools[static_cast<std::size_t>(kPoolStages - d)], g);
  }
  for (int e = 4; e >= 0; --e) {
    if (e < kPoolStages) g = maxpool2x2_backward(cache.pools[static_cast<std::size_t>(e)], g);
    g = unit_back(2 * e + 1, g);
    g = unit_back(2 * e, g);
  }
  return r;
}

/// Classical momentum: v <- momentum * v - lr * g; p <- p + v.
template <typename Scalar>
void sgd_step(std::vector<ParamRef<Scalar>> params, const ModelGrads<Scalar>& grads, ModelGrads<Scalar>& velocity,
              Scalar lr, Scalar momentum) {
  if (grads.size() != params.size()) throw Error(ErrorCode::ShapeMismatch, "sgd_step: gradient count mismatch");
  if (velocity.empty()) {
    for (const auto& p : params) velocity.push_back(Vec<Scalar>::Zero(p.value->size()));
  }
  if (velocity.size() != params.size()) throw Error(ErrorCode::ShapeMismatch, "sgd_step: velocity count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].value->size() || velocity[i].size() != grads[i].size()) {
      throw Error(ErrorCode::ShapeMismatch, "sgd_step: shape mismatch for " + params[i].name);
    }
    velocity[i] = momentum * velocity[i] - lr * grads[i];
    *params[i].value += velocity[i];
  }
}

template <typename Scalar>
void sgd_step(Model<Scalar>& model, const ModelGrads<Scalar>& grads, ModelGrads<Scalar>& velocity, Scalar lr,
              Scalar momentum) {
  sgd_step(model.parameters(), grads, velocity, lr, momentum);
  model.bump_version();
}

/// Single-image tensor 1 x 1 x H x W.
template <typename Scalar>
Tensor4<Scalar> image_tensor(const GrayImage& img) {
  Tensor4<Scalar> t(1, 1, img.height(), img.width());
  t.plane(0, 0) = img.data().template cast<Scalar>().matrix();
  return t;
}

/// Foreground where p(tubule) > 0.5 (strict).
template <typename Scalar>
BinaryMask threshold_probabilities(const Tensor4<Scalar>& probs, Index n = 0) {
  return BinaryMask((probs.plane(n, 1).array() > Scalar(0.5)).template cast<std::uint8_t>());
}

template <typename Scalar>
BinaryMask predict(const Model<Scalar>& model, const GrayImage& img) {
  if (!model.trained()) throw Error(ErrorCode::UntrainedModel, "predict: model has no batch-norm statistics");
  return threshold_probabilities(forward_infer(model, image_tensor<Scalar>(img)).probabilities);
}

// ---------------------------------------------------------------------------

template <typename Scalar>
Model<Scalar>::Model(Architecture arch, std::uint64_t seed) : arch_(arch) {
  if (arch.base_channels < 1) throw Error(ErrorCode::InvalidArgument, "architecture: base channels must be >= 1");
  const auto ch = arch.encoder_channels();
  Rng rng(seed);
  auto make = [&](std::string name, Index in, Index out) {
    ConvUnit<Scalar> u{std::move(name), ConvLayer<Scalar>(in, out), BatchNormLayer<Scalar>(out)};
    const double sd = std::sqrt(2.0 / (9.0 * static_cast<double>(in)));
    for (Index i = 0; i < u.conv.weight.size(); ++i) u.conv.weight[i] = static_cast<Scalar>(sd * normal01(rng));
    units_.push_back(std::move(u));
  };
  Index in = 1;
  for (int e = 0; e < 5; ++e) {
    const std::string blk = "E" + std::to_string(e + 1);
    make(blk + ".1", in, ch[static_cast<std::size_t>(e)]);
    make(blk + ".2", ch[static_cast<std::size_t>(e)], ch[static_cast<std::size_t>(e)]);
    in = ch[static_cast<std::size_t>(e)];
  }
  // Decoder d (0-based) maps encoder width ch[4-d] down to ch[3-d]; D5 keeps ch[0].
  for (int d = 0; d < 5; ++d) {
    const std::string blk = "D" + std::to_string(d + 1);
    const Index out = d < 4 ? ch[static_cast<std::size_t>(3 - d)] : ch[0];
    make(blk + ".1", in, out);
    if (d < 4) make(blk + ".2", out, out);
    in = out;
  }
  classifier_ = ConvLayer<Scalar>(in, 2);
  const double sd = std::sqrt(2.0 / (9.0 * static_cast<double>(in)));
  for (Index i = 0; i < classifier_.weight.size(); ++i) classifier_.weight[i] = static_cast<Scalar>(sd * normal01(rng));
}

template <typename Scalar>
std::vector<ParamRef<Scalar>> Model<Scalar>::parameters() {
  std::vector<ParamRef<Scalar>> out;
  for (auto& u : units_) {
    out.push_back({u.name + ".conv.weight", {u.conv.c_out, u.conv.c_in, 3, 3}, &u.conv.weight});
    out.push_back({u.name + ".conv.bias", {u.conv.c_out}, &u.conv.bias});
    out.push_back({u.name + ".bn.gamma", {u.bn.channels()}, &u.bn.gamma});
    out.push_back({u.name + ".bn.beta", {u.bn.channels()}, &u.bn.beta});
  }
  out.push_back({"D5.out.weight", {classifier_.c_out, classifier_.c_in, 3, 3}, &classifier_.weight});
  out.push_back({"D5.out.bias", {classifier_.c_out}, &classifier_.bias});
  return out;
}

template <typename Scalar>
std::vector<ParamRef<Scalar>> Model<Scalar>::state() {
  std::vector<ParamRef<Scalar>> out;
  for (auto& u : units_) {
    out.push_back({u.name + ".conv.weight", {u.conv.c_out, u.conv.c_in, 3, 3}, &u.conv.weight});
    out.push_back({u.name + ".conv.bias", {u.conv.c_out}, &u.conv.bias});
    out.push_back({u.name + ".bn.gamma", {u.bn.channels()}, &u.bn.gamma});
    out.push_back({u.name + ".bn.beta", {u.bn.channels()}, &u.bn.beta});
    out.push_back({u.name + ".bn.running_mean", {u.bn.channels()}, &u.bn.running_mean});
    out.push_back({u.name + ".bn.running_var", {u.bn.channels()}, &u.bn.running_var});
  }
  out.push_back({"D5.out.weight", {classifier_.c_out, classifier_.c_in, 3, 3}, &classifier_.weight});
  out.push_back({"D5.out.bias", {classifier_.c_out}, &classifier_.bias});
  return out;
}

template <typename Scalar>
bool Model<Scalar>::trained() const {
  if (units_.empty()) return false;
  for (const auto& u : units_) {
    if (!u.bn.tracked) return false;
  }
  return true;
}

template <typename Scalar>
void Model<Scalar>::set_tracked(bool tracked) {
  for (auto& u : units_) u.bn.tracked = tracked;
}

template <typename Scalar>
template <typename To>
Model<To> Model<Scalar>::cast() const {
  Model<To> m;
  m.arch_ = arch_;
  m.version_ = version_;
  for (const auto& u : units_) {
    ConvUnit<To> v;
    v.name = u.name;
    v.conv.c_in = u.conv.c_in;
    v.conv.c_out = u.conv.c_out;
    v.conv.weight = u.conv.weight.template cast<To>();
    v.conv.bias = u.conv.bias.template cast<To>();
    v.bn.gamma = u.bn.gamma.template cast<To>();
    v.bn.beta = u.bn.beta.template cast<To>();
    v.bn.running_mean = u.bn.running_mean.template cast<To>();
    v.bn.running_var = u.bn.running_var.template cast<To>();
    v.bn.tracked = u.bn.tracked;
    m.units_.push_back(std::move(v));
  }
  m.classifier_.c_in = classifier_.c_in;
  m.classifier_.c_out = classifier_.c_out;
  m.classifier_.weight = classifier_.weight.template cast<To>();
  m.classifier_.bias = classifier_.bias.template cast<To>();
  return m;
}

extern template class Model<float>;
extern template class Model<double>;

}  // namespace tseg::nn
