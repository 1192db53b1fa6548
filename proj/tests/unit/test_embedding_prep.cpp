#include "lagcoder/embedding_prep.hpp"
#include "lagcoder/encoding.hpp"
#include "lagcoder/error.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

using namespace lagcoder;
using lagcoder::testing::gaussian_matrix;

namespace {

EmbeddingSet set_of(const std::vector<MatrixD>& layers) {
  EmbeddingSet s;
  s.name = "t";
  for (const auto& l : layers) s.layers.push_back(l.cast<float>());
  return s;
}

}  // namespace

TEST(Pca, PlaneDataHasTwoNonzeroComponents) {
  const MatrixD coeffs = gaussian_matrix(200, 2, 1);
  const MatrixD basis = gaussian_matrix(2, 10, 2);
  const MatrixD data = coeffs * basis + MatrixD::Constant(200, 10, 3.0);
  const auto m = pca_fit(data, 4);
  EXPECT_EQ(m.rank, 2);
  EXPECT_TRUE(m.rank_deficient());
  EXPECT_LT(m.explained_variance(2), 1e-9);
  EXPECT_LT(m.explained_variance(3), 1e-9);
  EXPECT_GT(m.explained_variance(1), 1e-3);
}

TEST(Pca, FullRankReconstructionIsIdentity) {
  const MatrixD data = gaussian_matrix(60, 8, 3);
  const auto m = pca_fit(data, 8);
  EXPECT_LT((m.inverse_transform(m.transform(data)) - data).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Pca, RandomMatrixPropertiesAndSignRule) {
  const MatrixD data = gaussian_matrix(500, 80, 4);
  const auto m = pca_fit(data, 50);
  const MatrixD gram = m.components * m.components.transpose();
  EXPECT_LT((gram - MatrixD::Identity(50, 50)).cwiseAbs().maxCoeff(), 1e-6);
  for (int i = 1; i < 50; ++i) EXPECT_LE(m.explained_variance(i), m.explained_variance(i - 1));
  EXPECT_GE(m.explained_variance.minCoeff(), 0.0);
  for (int i = 0; i < 50; ++i) {
    Eigen::Index arg = 0;
    m.components.row(i).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(m.components(i, arg), 0.0);
  }
  // Projections of the fitted rows are centred.
  EXPECT_LT(m.transform(data).colwise().mean().cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Pca, SignRuleMakesFitInvariantToInputSign) {
  const MatrixD data = gaussian_matrix(100, 6, 5);
  const auto a = pca_fit(data, 3);
  const auto b = pca_fit(-data, 3);
  EXPECT_LT((a.components - b.components).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Folds, ContiguousBlocksBalanced) {
  const auto f = make_folds(103, 10, FoldScheme::Contiguous, 0);
  f.validate();
  std::vector<int> sizes(10, 0);
  for (int id : f.fold_of_word) ++sizes[static_cast<std::size_t>(id)];
  EXPECT_LE(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()), 1);
  for (std::size_t i = 1; i < f.fold_of_word.size(); ++i) EXPECT_LE(f.fold_of_word[i - 1], f.fold_of_word[i]);
}

TEST(Folds, RandomSchemeBalancedAndSeeded) {
  const auto a = make_folds(97, 10, FoldScheme::Random, 5);
  const auto b = make_folds(97, 10, FoldScheme::Random, 5);
  const auto c = make_folds(97, 10, FoldScheme::Random, 6);
  EXPECT_EQ(a.fold_of_word, b.fold_of_word);
  EXPECT_NE(a.fold_of_word, c.fold_of_word);
  std::vector<int> sizes(10, 0);
  for (int id : a.fold_of_word) ++sizes[static_cast<std::size_t>(id)];
  EXPECT_LE(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()), 1);
  std::size_t total = 0;
  for (int k = 0; k < 10; ++k) {
    const auto m = a.members(k);
    const auto comp = a.complement(k);
    EXPECT_EQ(m.size() + comp.size(), 97u);
    total += m.size();
  }
  EXPECT_EQ(total, 97u);
}

TEST(Reduce, IdenticalLayersGiveIdenticalOutputs) {
  const MatrixD l = gaussian_matrix(120, 16, 6);
  const auto set = set_of({l, l});
  std::vector<std::size_t> rows(120);
  std::iota(rows.begin(), rows.end(), 0);
  const auto folds = make_folds(120, 10, FoldScheme::Contiguous, 0);
  const auto r = reduce_layers(set, rows, folds, PcaMode::Full, 5, 2);
  ASSERT_EQ(r.layers.size(), 2u);
  EXPECT_TRUE(r.layers[0].for_fold(0) == r.layers[1].for_fold(0));
  EXPECT_EQ(r.layers[0].for_fold(0).cols(), 5);
  EXPECT_FALSE(r.layers[0].fold_specific());
  const auto t = reduce_layers(set, rows, folds, PcaMode::TrainOnly, 5, 1);
  EXPECT_TRUE(t.layers[0].fold_specific());
  EXPECT_EQ(t.layers[0].per_fold.size(), 10u);
}

TEST(Reduce, TrainOnlyNeverSeesTestRows) {
  MatrixD l = gaussian_matrix(100, 8, 7);
  const auto folds = make_folds(100, 10, FoldScheme::Contiguous, 0);
  const auto clean = fit_fold_pca(l, folds, 3, 4);
  for (const auto i : folds.members(3)) l.row(static_cast<Eigen::Index>(i)).setConstant(std::nan(""));
  const auto poisoned = fit_fold_pca(l, folds, 3, 4);
  EXPECT_TRUE(clean.components == poisoned.components);
  EXPECT_TRUE(clean.mean == poisoned.mean);
}

TEST(Reduce, TrainOnlyAndFullEncodingsAgreeOnPlantedData) {
  SynthSpec spec;  // the 48-layer planted dataset
  spec.seed = 21;
  const auto synth = synth_generate(spec);
  const auto& b = synth.bundle;
  EncodeOptions o;
  std::vector<std::size_t> elec{0, 1, 2, 3, 4, 5, 6, 7};
  const auto full = encode_condition(b, b.set("contextual"), WordCondition::All, elec, o);
  o.pca_mode = PcaMode::TrainOnly;
  const auto train = encode_condition(b, b.set("contextual"), WordCondition::All, elec, o);
  const auto a = average_roi(full.electrodes, "IFG");
  const auto c = average_roi(train.electrodes, "IFG");
  double worst = 0;
  for (Eigen::Index i = 0; i < a.values.size(); ++i) {
    if (!std::isnan(a.values.data()[i])) worst = std::max(worst, std::abs(a.values.data()[i] - c.values.data()[i]));
  }
  EXPECT_LT(worst, 0.05);
}

TEST(ProjectOut, SelfProjectionVanishes) {
  const auto set = set_of({gaussian_matrix(40, 6, 8), gaussian_matrix(40, 6, 9), gaussian_matrix(40, 6, 10)});
  const auto r = project_out_layer(set, 2);
  EXPECT_LT(r.set.layers[1].cast<double>().rowwise().norm().maxCoeff(), 1e-6);
  EXPECT_TRUE(r.zero_norm_words.empty());
  // Residuals are orthogonal to the max layer word by word.
  const MatrixD u = set.layers[1].cast<double>().rowwise().normalized();
  const MatrixD res = r.set.layers[0].cast<double>();
  EXPECT_LT((res.cwiseProduct(u)).rowwise().sum().cwiseAbs().maxCoeff(), 1e-5);
}

TEST(ProjectOut, RowLevelCases) {
  VectorD u(3);
  u << 0, 0, 2;
  VectorD orth(3);
  orth << 1, -2, 0;
  EXPECT_TRUE(project_out_row(orth, u) == orth);
  EXPECT_LT(project_out_row(u * 3.5, u).norm(), 1e-12);
  const VectorD e = lagcoder::testing::gaussian_vector(3, 4);
  const VectorD d = lagcoder::testing::gaussian_vector(3, 5);
  EXPECT_LT(std::abs(project_out_row(e, d).dot(d.normalized())), 1e-9);
  EXPECT_TRUE(project_out_row(e, VectorD::Zero(3)) == e);
}

TEST(ProjectOut, ZeroNormWordsFlagged) {
  MatrixD maxl = gaussian_matrix(10, 4, 11);
  maxl.row(6).setZero();
  const auto set = set_of({gaussian_matrix(10, 4, 12), maxl});
  const auto r = project_out_layer(set, 2);
  ASSERT_EQ(r.zero_norm_words.size(), 1u);
  EXPECT_EQ(r.zero_norm_words[0], 6u);
  EXPECT_TRUE(r.set.layers[0].row(6) == set.layers[0].row(6));
}

TEST(PseudoPool, MidpointAndEndpoints) {
  const MatrixF a = gaussian_matrix(5, 3, 13).cast<float>();
  const MatrixF b = gaussian_matrix(5, 3, 14).cast<float>();
  const auto pool = interpolate_pseudo_layers(a, b, 999);
  EXPECT_EQ(pool.size(), 999u);
  EXPECT_DOUBLE_EQ(pool.alpha(499), 0.5);
  const MatrixF mid = pool.layer(499);
  EXPECT_LT((mid - (0.5f * (a + b))).cwiseAbs().maxCoeff(), 1e-6f);
  EXPECT_GT(pool.alpha(0), 0.0);
  EXPECT_LT(pool.alpha(998), 1.0);
}

TEST(PseudoPool, EqualEndpointsAndMonotoneCoordinates) {
  const MatrixF a = gaussian_matrix(4, 3, 15).cast<float>();
  const auto flat = interpolate_pseudo_layers(a, a, 50);
  for (std::size_t j = 0; j < flat.size(); j += 7) EXPECT_LT((flat.layer(j) - a).cwiseAbs().maxCoeff(), 1e-6f);
  const MatrixF b = gaussian_matrix(4, 3, 16).cast<float>();
  const auto pool = interpolate_pseudo_layers(a, b, 100);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double dir = b.data()[i] - a.data()[i];
    for (std::size_t j = 1; j < pool.size(); ++j) {
      const double step = pool.layer(j).data()[i] - pool.layer(j - 1).data()[i];
      EXPECT_GE(step * dir, -1e-6);
    }
  }
  EXPECT_THROW(interpolate_pseudo_layers(a, MatrixF::Zero(3, 3), 10), Error);
}

TEST(PseudoSet, SampledSetsAreSortedAndSeeded) {
  const auto pool = interpolate_pseudo_layers(gaussian_matrix(6, 2, 17).cast<float>(),
                                              gaussian_matrix(6, 2, 18).cast<float>(), 1000);
  Rng r1(3), r2(3);
  const auto s1 = sample_pseudo_set(pool, 46, r1);
  const auto s2 = sample_pseudo_set(pool, 46, r2);
  EXPECT_EQ(s1.pool_indices, s2.pool_indices);
  EXPECT_EQ(s1.set.layer_count(), 48);
  EXPECT_EQ(s1.set.kind, EmbeddingKind::Pseudo);
  ASSERT_EQ(s1.alphas.size(), 48u);
  EXPECT_EQ(s1.alphas.front(), 0.0);
  EXPECT_EQ(s1.alphas.back(), 1.0);
  for (std::size_t i = 1; i < s1.alphas.size(); ++i) EXPECT_GT(s1.alphas[i], s1.alphas[i - 1]);
}

TEST(PseudoSet, FullPoolAndTooSmallPool) {
  const auto pool = interpolate_pseudo_layers(MatrixF::Zero(2, 2), MatrixF::Ones(2, 2), 5);
  Rng rng(1);
  const auto all = sample_pseudo_set(pool, 5, rng);
  EXPECT_EQ(all.pool_indices, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  try {
    sample_pseudo_set(pool, 6, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PoolTooSmall);
  }
}
