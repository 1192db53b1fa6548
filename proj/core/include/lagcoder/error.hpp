#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lagcoder {

enum class ErrorCode {
  InvalidArgument,
  MissingFile,
  IoFailure,
  ShapeMismatch,
  NonMonotonicOnsets,
  NonFiniteValue,
  MissingRank,
  AllSpikes,
  TooFewElectrodes,
  NyquistViolation,
  EmptyBand,
  InvalidStageOrder,
  RankDeficient,
  ZeroNormMaxEmbedding,
  PoolTooSmall,
  EmptyRoi,
  NoPositivePeak,
  AllNaNRow,
  OutOfRange,
  TooFewPairs,
  DegenerateGroup,
  NonConvergence,
  GridOverflow,
  DimensionMismatch,
  MissingSet,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception carrying a machine-checkable error code. The pipeline prefixes
/// the stage name so CLI diagnostics read "[encode] ShapeMismatch: ...".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace lagcoder
