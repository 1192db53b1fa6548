#pragma once

#include "lagcoder/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace lagcoder {

/// In-memory dataset: signals, electrode metadata, word events and embedding
/// sets. Numeric payloads are float32 so that write/load is bit-exact.
struct DatasetBundle {
  SignalRecording signals;
  std::vector<ElectrodeMeta> electrodes;
  std::vector<WordEvent> words;
  std::vector<EmbeddingSet> embeddings;
  std::vector<std::string> provenance;  // e.g. "preprocess:despike,car,highgamma,smooth"

  bool preprocessed() const;
  const EmbeddingSet* find_set(std::string_view name) const;
  /// Throws MissingSet naming the set when it is absent.
  const EmbeddingSet& set(std::string_view name) const;
  std::vector<double> onsets() const;
  std::vector<std::size_t> electrodes_in(Roi roi, bool selected_only) const;

  /// Checks every cross-reference: electrode count, word count, dims, onsets.
  void validate() const;
};

struct EmbeddingSetEntry {
  std::string name;
  EmbeddingKind kind = EmbeddingKind::Contextual;
  int layer_count = 0;
  Eigen::Index dim = 0;
};

struct BundleManifest {
  int version = 1;
  Eigen::Index n_electrodes = 0;
  Eigen::Index n_samples = 0;
  double sample_rate = 0.0;
  double t0 = 0.0;
  Eigen::Index n_words = 0;
  std::vector<EmbeddingSetEntry> sets;
  std::vector<std::string> provenance;
};

struct BundleLoadOptions {
  bool load_embeddings = true;
  bool verify_checksums = true;
};

BundleManifest read_manifest(const std::filesystem::path& dir);
DatasetBundle load_bundle(const std::filesystem::path& dir, const BundleLoadOptions& opts = {});
void write_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir);

/// Reads a single layer (1-based) without touching the rest of the bundle.
MatrixF load_embedding_layer(const std::filesystem::path& dir, const std::string& set, int layer);

std::string layer_file_name(int layer, int layer_count);

struct PredictabilityCounts {
  std::size_t top1_predictable = 0;
  std::size_t top5_unpredictable = 0;
  std::size_t neither = 0;
};

Predictability predictability_of_rank(int rank);
/// Sets the predictability field from top_rank; throws MissingRank.
std::vector<WordEvent> classify_predictability(std::vector<WordEvent> words,
                                               PredictabilityCounts* counts = nullptr);
bool matches(const WordEvent& w, WordCondition condition);
std::vector<std::size_t> words_in(const std::vector<WordEvent>& words, WordCondition condition);

// Encoding outputs: <stem>.f32 ([n_layers x n_lags] float32) + <stem>.json sidecar.
void write_encoding(const EncodingMatrix& m, const std::filesystem::path& dir, const std::string& stem);
EncodingMatrix read_encoding(const std::filesystem::path& f32_path);

// Raw little-endian float32 payload helpers.
void write_f32(const std::filesystem::path& path, const float* data, std::size_t count);
std::vector<float> read_f32(const std::filesystem::path& path, std::size_t expected_count);
std::uint32_t crc32_of_file(const std::filesystem::path& path);

}  // namespace lagcoder
