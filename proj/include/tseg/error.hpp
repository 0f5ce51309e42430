#pragma once

#include <stdexcept>
#include <string>

namespace tseg {

enum class ErrorCode {
  MissingFile,
  MultiChannel,
  CorruptHeader,
  UnsupportedFormat,
  Unwritable,
  LabelOverflow,
  ShapeMismatch,
  InvalidArgument,
  UndefinedField,
  NotSquare,
  ChannelMismatch,
  OddSpatialDims,
  IndivisibleDims,
  RunningStatsUnset,
  StaleCache,
  UntrainedModel,
  BadMagic,
  BadVersion,
  Truncated,
  ArchitectureMismatch,
  EmptyDataset,
  EmptySet,
  RejectionSampling,
  NonFinite,
  Config,
};

const char* to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries a machine-readable code so
/// callers (and tests) can tell error kinds apart without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tseg
