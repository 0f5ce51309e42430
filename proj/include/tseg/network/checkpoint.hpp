#pragma once

#include <filesystem>
#include <optional>

#include "tseg/network/model.hpp"

namespace tseg::nn {

/// Binary checkpoint, all integers little-endian:
///   "TSEG" | u16 version | u64 architecture hash |
///   records until EOF: u32 name length, name bytes, u32 rank, u32 dims[rank],
///                      f32 values[prod(dims)]
/// Records cover Model::state() in order, then "meta.tracked" (1 value).
inline constexpr char kCheckpointMagic[4] = {'T', 'S', 'E', 'G'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path);

/// Reads the architecture from the first conv record and checks it against
/// the stored hash. When `expected` is given, a different architecture is an
/// ArchitectureMismatch error.
Model<float> load_checkpoint(const std::filesystem::path& path,
                             std::optional<Architecture> expected = std::nullopt);

}  // namespace tseg::nn
