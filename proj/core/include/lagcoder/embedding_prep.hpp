#pragma once

#include "lagcoder/config.hpp"
#include "lagcoder/rng.hpp"
#include "lagcoder/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace lagcoder {

/// Mean-centred PCA. Component rows are orthonormal; each row's
/// largest-magnitude loading is positive (first such index on ties).
struct PcaModel {
  VectorD mean;
  MatrixD components;         // [n_components x dim]
  VectorD explained_variance; // nonincreasing, zero beyond `rank`
  int rank = 0;

  int n_components() const { return static_cast<int>(components.rows()); }
  bool rank_deficient() const { return rank < n_components(); }
  MatrixD transform(const MatrixD& x) const;
  MatrixD inverse_transform(const MatrixD& scores) const;
};

/// Fits on the rows of `data` ([n x dim]); requires n > n_components. When the
/// data has fewer than n_components nonzero singular values the trailing
/// components are zero rows and rank_deficient() reports it.
PcaModel pca_fit(const MatrixD& data, int n_components);

struct FoldAssignment {
  std::vector<int> fold_of_word;
  int n_folds = 0;

  std::size_t n_words() const { return fold_of_word.size(); }
  std::vector<std::size_t> members(int fold) const;
  std::vector<std::size_t> complement(int fold) const;
  void validate() const;
};

/// Contiguous blocks (sizes differ by at most one) or a seeded random
/// balanced assignment.
FoldAssignment make_folds(std::size_t n_words, int n_folds, FoldScheme scheme, std::uint64_t seed);

/// One layer after reduction: a single matrix in full mode, or one matrix per
/// test fold in train-only mode (rows of every word, projected with the PCA
/// fitted on that fold's training rows).
struct ReducedLayer {
  std::vector<MatrixD> per_fold;

  const MatrixD& for_fold(int fold) const {
    return per_fold.size() == 1 ? per_fold.front() : per_fold[static_cast<std::size_t>(fold)];
  }
  bool fold_specific() const { return per_fold.size() > 1; }
};

struct ReducedSet {
  std::string source;
  PcaMode mode = PcaMode::Full;
  std::vector<ReducedLayer> layers;

  /// The reduced matrices seen by one test fold, as an EmbeddingSet (kind reduced).
  EmbeddingSet as_embedding_set(int fold) const;
};

MatrixD gather_rows(const MatrixF& m, std::span<const std::size_t> rows);
MatrixD to_double(const MatrixF& m);

PcaModel fit_fold_pca(const MatrixD& layer, const FoldAssignment& folds, int test_fold, int n_components);
ReducedLayer reduce_layer(const MatrixD& layer, const FoldAssignment& folds, PcaMode mode, int n_components);

/// Per-layer PCA (never across layers). `rows` selects the words (e.g. one
/// predictability condition); folds are defined over those rows.
ReducedSet reduce_layers(const EmbeddingSet& set, std::span<const std::size_t> rows,
                         const FoldAssignment& folds, PcaMode mode, int n_components, int threads = 0);

/// e - (e . u) u with u the unit vector of `direction`; e unchanged if direction is zero.
VectorD project_out_row(const VectorD& e, const VectorD& direction);

struct ProjectionResult {
  EmbeddingSet set;
  std::vector<std::size_t> zero_norm_words;  // left unchanged, flagged
};

/// Word-wise removal of the max layer's direction from every layer (1-based
/// max_layer). The max layer itself becomes exactly zero.
ProjectionResult project_out_layer(const EmbeddingSet& set, int max_layer);

/// Lazily evaluated pool e_a = (1 - a) first + a last, a = (j + 1) / (size + 1).
class PseudoLayerPool {
 public:
  PseudoLayerPool(MatrixF first, MatrixF last, std::size_t size);

  std::size_t size() const { return alphas_.size(); }
  const std::vector<double>& alphas() const { return alphas_; }
  double alpha(std::size_t j) const { return alphas_[j]; }
  MatrixF layer(std::size_t j) const;
  const MatrixF& first() const { return first_; }
  const MatrixF& last() const { return last_; }

 private:
  MatrixF first_, last_;
  std::vector<double> alphas_;
};

PseudoLayerPool interpolate_pseudo_layers(const MatrixF& first, const MatrixF& last, std::size_t grid_size = 1000);

/// k pool indices sampled without replacement, sorted ascending.
std::vector<std::size_t> sample_pool_indices(std::size_t pool_size, std::size_t k, Rng& rng);

struct PseudoSet {
  EmbeddingSet set;                    // kind pseudo, k + 2 layers
  std::vector<double> alphas;          // 0, sampled..., 1
  std::vector<std::size_t> pool_indices;
};

PseudoSet sample_pseudo_set(const PseudoLayerPool& pool, std::size_t k, Rng& rng);

}  // namespace lagcoder
