#include "tseg/network/model.hpp"

namespace tseg::nn {

std::string Architecture::plan() const {
  const auto ch = encoder_channels();
  std::string s = "tseg-encdec-v1";
  Index in = 1;
  for (int e = 0; e < 5; ++e) {
    const auto c = ch[static_cast<std::size_t>(e)];
    s += ";E" + std::to_string(e + 1) + ":" + std::to_string(in) + "-" + std::to_string(c) + "-" + std::to_string(c);
    if (e < kPoolStages) s += "/pool";
    in = c;
  }
  for (int d = 0; d < 5; ++d) {
    const Index out = d < 4 ? ch[static_cast<std::size_t>(3 - d)] : ch[0];
    s += ";D" + std::to_string(d + 1) + ":";
    if (d > 0) s += "unpool(E" + std::to_string(kPoolStages + 1 - d) + ")/";
    s += std::to_string(in) + "-" + std::to_string(out);
    if (d < 4) s += "-" + std::to_string(out);
    in = out;
  }
  s += ";out:" + std::to_string(in) + "-2;softmax";
  return s;
}

void check_spatial(Index h, Index w) {
  if (h <= 0 || w <= 0 || h % kSpatialDivisor != 0 || w % kSpatialDivisor != 0) {
    throw Error(ErrorCode::IndivisibleDims, "input " + std::to_string(h) + "x" + std::to_string(w) +
                                                " is not divisible by " + std::to_string(kSpatialDivisor));
  }
}

template class Model<float>;
template class Model<double>;

}  // namespace tseg::nn
