#include "lagcoder/embedding_prep.hpp"

#include "lagcoder/error.hpp"
#include "lagcoder/parallel.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <numeric>

namespace lagcoder {

MatrixD PcaModel::transform(const MatrixD& x) const {
  require(x.cols() == mean.size(), ErrorCode::ShapeMismatch, "PCA transform dimension mismatch");
  return (x.rowwise() - mean.transpose()) * components.transpose();
}

MatrixD PcaModel::inverse_transform(const MatrixD& scores) const {
  require(scores.cols() == components.rows(), ErrorCode::ShapeMismatch, "PCA scores dimension mismatch");
  return (scores * components).rowwise() + mean.transpose();
}

PcaModel pca_fit(const MatrixD& data, int n_components) {
  require(n_components >= 1, ErrorCode::InvalidArgument, "n_components must be >= 1");
  require(data.rows() > n_components, ErrorCode::InvalidArgument,
          "PCA needs more rows (" + std::to_string(data.rows()) + ") than components (" +
              std::to_string(n_components) + ")");
  require(data.allFinite(), ErrorCode::NonFiniteValue, "PCA input is not finite");

  PcaModel model;
  model.mean = data.colwise().mean().transpose();
  const MatrixD centered = data.rowwise() - model.mean.transpose();
  const Eigen::Index dim = data.cols();
  model.components = MatrixD::Zero(n_components, dim);
  model.explained_variance = VectorD::Zero(n_components);

  Eigen::BDCSVD<MatrixD> svd(centered, Eigen::ComputeThinV);
  const VectorD& s = svd.singularValues();
  const double tol = s.size() ? static_cast<double>(std::max(data.rows(), dim)) *
                                    std::numeric_limits<double>::epsilon() * s(0)
                              : 0.0;
  const Eigen::Index keep = std::min<Eigen::Index>(n_components, s.size());
  int rank = 0;
  for (Eigen::Index i = 0; i < keep; ++i) {
    if (!(s(i) > tol)) break;
    VectorD v = svd.matrixV().col(i);
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < v.size(); ++j) {
      if (std::abs(v(j)) > std::abs(v(arg))) arg = j;
    }
    if (v(arg) < 0) v = -v;
    model.components.row(i) = v.transpose();
    model.explained_variance(i) = s(i) * s(i) / static_cast<double>(data.rows() - 1);
    ++rank;
  }
  model.rank = rank;
  return model;
}

// ---------------------------------------------------------------- folds

std::vector<std::size_t> FoldAssignment::members(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of_word.size(); ++i) {
    if (fold_of_word[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::complement(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of_word.size(); ++i) {
    if (fold_of_word[i] != fold) out.push_back(i);
  }
  return out;
}

void FoldAssignment::validate() const {
  require(n_folds >= 2, ErrorCode::InvalidArgument, "need at least two folds");
  std::vector<std::size_t> sizes(static_cast<std::size_t>(n_folds), 0);
  for (int f : fold_of_word) {
    require(f >= 0 && f < n_folds, ErrorCode::OutOfRange, "fold id out of range");
    ++sizes[static_cast<std::size_t>(f)];
  }
  const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
  require(*hi - *lo <= 1, ErrorCode::InvalidArgument, "fold sizes differ by more than one");
}

FoldAssignment make_folds(std::size_t n_words, int n_folds, FoldScheme scheme, std::uint64_t seed) {
  require(n_folds >= 2, ErrorCode::InvalidArgument, "need at least two folds");
  require(n_words >= static_cast<std::size_t>(n_folds), ErrorCode::InvalidArgument,
          "fewer words (" + std::to_string(n_words) + ") than folds");
  FoldAssignment fa;
  fa.n_folds = n_folds;
  fa.fold_of_word.resize(n_words);
  const auto k = static_cast<std::size_t>(n_folds);
  // Block sizes: the first n % k folds get one extra word.
  std::vector<int> blocks(n_words);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n_words / k + (f < n_words % k ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) blocks[pos++] = static_cast<int>(f);
  }
  if (scheme == FoldScheme::Random) {
    auto rng = make_rng(seed, Stream::Folds);
    for (std::size_t i = n_words; i-- > 1;) std::swap(blocks[i], blocks[uniform_index(rng, i + 1)]);
  }
  fa.fold_of_word = std::move(blocks);
  return fa;
}

// ---------------------------------------------------------------- reduction

MatrixD gather_rows(const MatrixF& m, std::span<const std::size_t> rows) {
  MatrixD out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i])).cast<double>();
  }
  return out;
}

MatrixD to_double(const MatrixF& m) { return m.cast<double>(); }

PcaModel fit_fold_pca(const MatrixD& layer, const FoldAssignment& folds, int test_fold, int n_components) {
  require(static_cast<std::size_t>(layer.rows()) == folds.n_words(), ErrorCode::ShapeMismatch,
          "layer rows do not match the fold assignment");
  const auto train = folds.complement(test_fold);
  MatrixD rows(static_cast<Eigen::Index>(train.size()), layer.cols());
  for (std::size_t i = 0; i < train.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) = layer.row(static_cast<Eigen::Index>(train[i]));
  }
  return pca_fit(rows, n_components);
}

ReducedLayer reduce_layer(const MatrixD& layer, const FoldAssignment& folds, PcaMode mode, int n_components) {
  ReducedLayer out;
  if (mode == PcaMode::Full) {
    out.per_fold.push_back(pca_fit(layer, n_components).transform(layer));
  } else {
    for (int f = 0; f < folds.n_folds; ++f) {
      out.per_fold.push_back(fit_fold_pca(layer, folds, f, n_components).transform(layer));
    }
  }
  return out;
}

ReducedSet reduce_layers(const EmbeddingSet& set, std::span<const std::size_t> rows,
                         const FoldAssignment& folds, PcaMode mode, int n_components, int threads) {
  require(rows.size() == folds.n_words(), ErrorCode::ShapeMismatch,
          "row selection does not match the fold assignment");
  ReducedSet out;
  out.source = set.name;
  out.mode = mode;
  out.layers.resize(set.layers.size());
  parallel_for(set.layers.size(), threads, [&](std::size_t k) {
    out.layers[k] = reduce_layer(gather_rows(set.layers[k], rows), folds, mode, n_components);
  });
  return out;
}

EmbeddingSet ReducedSet::as_embedding_set(int fold) const {
  EmbeddingSet s;
  s.name = source + "_reduced";
  s.kind = EmbeddingKind::Reduced;
  for (const auto& l : layers) s.layers.push_back(l.for_fold(fold).cast<float>());
  return s;
}

// ---------------------------------------------------------------- projection

VectorD project_out_row(const VectorD& e, const VectorD& direction) {
  require(e.size() == direction.size(), ErrorCode::ShapeMismatch, "projection dimension mismatch");
  const double norm = direction.norm();
  if (norm == 0.0) return e;
  const VectorD u = direction / norm;
  return e - e.dot(u) * u;
}

ProjectionResult project_out_layer(const EmbeddingSet& set, int max_layer) {
  require(max_layer >= 1 && max_layer <= set.layer_count(), ErrorCode::OutOfRange,
          "max layer " + std::to_string(max_layer) + " outside 1.." + std::to_string(set.layer_count()));
  ProjectionResult out;
  out.set.name = set.name + "_minus_L" + std::to_string(max_layer);
  out.set.kind = set.kind;
  out.set.layers = set.layers;
  const auto& ref = set.layers[static_cast<std::size_t>(max_layer - 1)];
  for (Eigen::Index w = 0; w < ref.rows(); ++w) {
    const VectorD u = ref.row(w).cast<double>().transpose();
    if (u.norm() == 0.0) {
      out.zero_norm_words.push_back(static_cast<std::size_t>(w));
      continue;
    }
    for (int l = 0; l < set.layer_count(); ++l) {
      auto& layer = out.set.layers[static_cast<std::size_t>(l)];
      if (l == max_layer - 1) {
        layer.row(w).setZero();
      } else {
        const VectorD e = set.layers[static_cast<std::size_t>(l)].row(w).cast<double>().transpose();
        layer.row(w) = project_out_row(e, u).transpose().cast<float>();
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- pseudo layers

PseudoLayerPool::PseudoLayerPool(MatrixF first, MatrixF last, std::size_t size)
    : first_(std::move(first)), last_(std::move(last)) {
  require(first_.rows() == last_.rows() && first_.cols() == last_.cols(), ErrorCode::ShapeMismatch,
          "first and last layers differ in shape");
  require(size >= 1, ErrorCode::InvalidArgument, "pool size must be >= 1");
  alphas_.resize(size);
  for (std::size_t j = 0; j < size; ++j) {
    alphas_[j] = static_cast<double>(j + 1) / static_cast<double>(size + 1);
  }
}

MatrixF PseudoLayerPool::layer(std::size_t j) const {
  const double a = alphas_.at(j);
  return ((1.0 - a) * first_.cast<double>() + a * last_.cast<double>()).cast<float>();
}

PseudoLayerPool interpolate_pseudo_layers(const MatrixF& first, const MatrixF& last, std::size_t grid_size) {
  return PseudoLayerPool(first, last, grid_size);
}

std::vector<std::size_t> sample_pool_indices(std::size_t pool_size, std::size_t k, Rng& rng) {
  require(pool_size >= k, ErrorCode::PoolTooSmall,
          "pool of " + std::to_string(pool_size) + " cannot supply " + std::to_string(k) + " layers");
  std::vector<std::size_t> all(pool_size);
  std::iota(all.begin(), all.end(), std::size_t{0});
  // Partial Fisher-Yates: the first k entries form the sample.
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(all[i], all[i + uniform_index(rng, pool_size - i)]);
  }
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

PseudoSet sample_pseudo_set(const PseudoLayerPool& pool, std::size_t k, Rng& rng) {
  PseudoSet out;
  out.pool_indices = sample_pool_indices(pool.size(), k, rng);
  out.set.name = "pseudo";
  out.set.kind = EmbeddingKind::Pseudo;
  out.set.layers.push_back(pool.first());
  out.alphas.push_back(0.0);
  for (auto j : out.pool_indices) {
    out.set.layers.push_back(pool.layer(j));
    out.alphas.push_back(pool.alpha(j));
  }
  out.set.layers.push_back(pool.last());
  out.alphas.push_back(1.0);
  return out;
}

}  // namespace lagcoder
