#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lagcoder {

/// Row-major float storage, matching the on-disk payload layout.
using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixD = Eigen::MatrixXd;
using VectorD = Eigen::VectorXd;

enum class Roi { mSTG, aSTG, IFG, TP, other };

std::string_view to_string(Roi roi) noexcept;
Roi parse_roi(std::string_view text);

struct SignalRecording {
  MatrixF samples;  // [n_electrodes x n_samples]
  double sample_rate = 0.0;
  double t0 = 0.0;

  Eigen::Index n_electrodes() const { return samples.rows(); }
  Eigen::Index n_samples() const { return samples.cols(); }

  /// Throws InvalidArgument / NonFiniteValue when the invariants do not hold.
  void validate() const;
};

struct ElectrodeMeta {
  std::string id;
  Roi roi = Roi::other;
  std::optional<std::array<double, 3>> coords;
  bool selected = false;
};

enum class Predictability { Top1Predictable, Top5Unpredictable, Neither };

std::string_view to_string(Predictability p) noexcept;

struct WordEvent {
  std::size_t index = 0;
  std::string text;
  double onset = 0.0;  // seconds relative to the recording's t0
  std::optional<int> top_rank;
  Predictability predictability = Predictability::Neither;
};

enum class EmbeddingKind { Contextual, Static, Reduced, Pseudo };

std::string_view to_string(EmbeddingKind kind) noexcept;
EmbeddingKind parse_embedding_kind(std::string_view text);

struct EmbeddingSet {
  std::string name;
  EmbeddingKind kind = EmbeddingKind::Contextual;
  std::vector<MatrixF> layers;  // each [n_words x dim]

  int layer_count() const { return static_cast<int>(layers.size()); }
  Eigen::Index dim() const { return layers.empty() ? 0 : layers.front().cols(); }
  Eigen::Index n_words() const { return layers.empty() ? 0 : layers.front().rows(); }

  void validate(Eigen::Index expected_words) const;
};

enum class WordCondition { Predictable, Unpredictable, All };

std::string_view to_string(WordCondition c) noexcept;
WordCondition parse_condition(std::string_view text);

/// Lag axis in integer milliseconds, inclusive at both ends.
struct LagGrid {
  int min_ms = -2000;
  int max_ms = 2000;
  int step_ms = 25;

  std::size_t size() const { return static_cast<std::size_t>((max_ms - min_ms) / step_ms + 1); }
  int lag(std::size_t i) const { return min_ms + static_cast<int>(i) * step_ms; }
  std::vector<int> lags() const;
  void validate() const;
};

/// Cross-validated correlations on the (layer x lag) grid for one electrode or ROI.
struct EncodingMatrix {
  MatrixD values;                // [n_layers x n_lags], NaN where undefined
  std::vector<int> lags_ms;
  std::vector<int> layers;       // 1-based layer numbers, one per row
  std::string tag;               // electrode id or ROI name
  WordCondition condition = WordCondition::All;
  Eigen::MatrixXi contributors;  // per-cell electrode counts (ROI averages only)

  Eigen::Index n_layers() const { return values.rows(); }
  Eigen::Index n_lags() const { return values.cols(); }

  /// Range invariant: every non-NaN value lies in [-1, 1] and shapes agree.
  void validate() const;
};

}  // namespace lagcoder
