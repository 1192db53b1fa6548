#include "lagcoder/types.hpp"

#include "lagcoder/error.hpp"

#include <cmath>

namespace lagcoder {

std::string_view to_string(Roi roi) noexcept {
  switch (roi) {
    case Roi::mSTG: return "mSTG";
    case Roi::aSTG: return "aSTG";
    case Roi::IFG: return "IFG";
    case Roi::TP: return "TP";
    case Roi::other: return "other";
  }
  return "other";
}

Roi parse_roi(std::string_view text) {
  for (Roi r : {Roi::mSTG, Roi::aSTG, Roi::IFG, Roi::TP, Roi::other}) {
    if (to_string(r) == text) return r;
  }
  fail(ErrorCode::InvalidArgument, "unknown ROI '" + std::string(text) + "'");
}

std::string_view to_string(Predictability p) noexcept {
  switch (p) {
    case Predictability::Top1Predictable: return "top1_predictable";
    case Predictability::Top5Unpredictable: return "top5_unpredictable";
    case Predictability::Neither: return "neither";
  }
  return "neither";
}

std::string_view to_string(EmbeddingKind kind) noexcept {
  switch (kind) {
    case EmbeddingKind::Contextual: return "contextual";
    case EmbeddingKind::Static: return "static";
    case EmbeddingKind::Reduced: return "reduced";
    case EmbeddingKind::Pseudo: return "pseudo";
  }
  return "contextual";
}

EmbeddingKind parse_embedding_kind(std::string_view text) {
  for (auto k : {EmbeddingKind::Contextual, EmbeddingKind::Static, EmbeddingKind::Reduced,
                 EmbeddingKind::Pseudo}) {
    if (to_string(k) == text) return k;
  }
  fail(ErrorCode::InvalidArgument, "unknown embedding kind '" + std::string(text) + "'");
}

std::string_view to_string(WordCondition c) noexcept {
  switch (c) {
    case WordCondition::Predictable: return "predictable";
    case WordCondition::Unpredictable: return "unpredictable";
    case WordCondition::All: return "all";
  }
  return "all";
}

WordCondition parse_condition(std::string_view text) {
  for (auto c : {WordCondition::Predictable, WordCondition::Unpredictable, WordCondition::All}) {
    if (to_string(c) == text) return c;
  }
  fail(ErrorCode::InvalidArgument, "unknown word condition '" + std::string(text) + "'");
}

void SignalRecording::validate() const {
  require(samples.rows() >= 1, ErrorCode::InvalidArgument, "recording has no electrodes");
  require(sample_rate > 0.0 && std::isfinite(sample_rate), ErrorCode::InvalidArgument,
          "sample_rate must be positive");
  require(samples.allFinite(), ErrorCode::NonFiniteValue, "recording contains non-finite samples");
}

void EmbeddingSet::validate(Eigen::Index expected_words) const {
  require(!layers.empty(), ErrorCode::InvalidArgument, "embedding set '" + name + "' has no layers");
  const auto d = layers.front().cols();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& m = layers[k];
    require(m.rows() == expected_words && m.cols() == d, ErrorCode::ShapeMismatch,
            "embedding set '" + name + "' layer " + std::to_string(k + 1) + " has shape " +
                std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ", expected " +
                std::to_string(expected_words) + "x" + std::to_string(d));
    require(m.allFinite(), ErrorCode::NonFiniteValue,
            "embedding set '" + name + "' layer " + std::to_string(k + 1) + " is not finite");
  }
}

std::vector<int> LagGrid::lags() const {
  std::vector<int> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = lag(i);
  return out;
}

void LagGrid::validate() const {
  require(step_ms > 0, ErrorCode::InvalidArgument, "lag step must be positive");
  require(max_ms >= min_ms, ErrorCode::InvalidArgument, "lag_max must be >= lag_min");
  require((max_ms - min_ms) % step_ms == 0, ErrorCode::InvalidArgument,
          "lag range must be divisible by the lag step");
}

void EncodingMatrix::validate() const {
  require(static_cast<Eigen::Index>(lags_ms.size()) == values.cols(), ErrorCode::ShapeMismatch,
          "lag axis length does not match matrix columns");
  require(layers.empty() || static_cast<Eigen::Index>(layers.size()) == values.rows(),
          ErrorCode::ShapeMismatch, "layer axis length does not match matrix rows");
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double v = values.data()[i];
    if (std::isnan(v)) continue;
    require(v >= -1.0 && v <= 1.0, ErrorCode::OutOfRange, "encoding value outside [-1, 1]");
  }
}

}  // namespace lagcoder
