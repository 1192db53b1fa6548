#include "lagcoder/error.hpp"

namespace lagcoder {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonMonotonicOnsets: return "NonMonotonicOnsets";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::MissingRank: return "MissingRank";
    case ErrorCode::AllSpikes: return "AllSpikes";
    case ErrorCode::TooFewElectrodes: return "TooFewElectrodes";
    case ErrorCode::NyquistViolation: return "NyquistViolation";
    case ErrorCode::EmptyBand: return "EmptyBand";
    case ErrorCode::InvalidStageOrder: return "InvalidStageOrder";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::ZeroNormMaxEmbedding: return "ZeroNormMaxEmbedding";
    case ErrorCode::PoolTooSmall: return "PoolTooSmall";
    case ErrorCode::EmptyRoi: return "EmptyRoi";
    case ErrorCode::NoPositivePeak: return "NoPositivePeak";
    case ErrorCode::AllNaNRow: return "AllNaNRow";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::TooFewPairs: return "TooFewPairs";
    case ErrorCode::DegenerateGroup: return "DegenerateGroup";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::GridOverflow: return "GridOverflow";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MissingSet: return "MissingSet";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace lagcoder
