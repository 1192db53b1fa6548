#pragma once

#include "lagcoder/embedding_prep.hpp"
#include "lagcoder/types.hpp"

#include <cstdint>
#include <vector>

namespace lagcoder {

using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Window-averaged responses for a set of electrodes over the lag grid.
struct ResponseTensor {
  std::vector<MatrixD> values;  // per electrode: [n_words x n_lags]
  MaskMatrix valid;             // [n_words x n_lags]; shared by all electrodes
  std::vector<int> lags_ms;

  std::size_t n_electrodes() const { return values.size(); }
  Eigen::Index n_words() const { return valid.rows(); }
  Eigen::Index n_lags() const { return valid.cols(); }
};

/// Word/fold/mask structure of a cross-validated grid, independent of both the
/// design and the responses. Lags with identical validity columns form a group.
class CvPlan {
 public:
  struct Group {
    std::vector<Eigen::Index> lags;
    std::vector<Eigen::Index> words;                   // valid word rows (plan numbering)
    std::vector<std::vector<Eigen::Index>> test_rows;  // per fold, indices into `words`
  };

  CvPlan(const FoldAssignment& folds, const MaskMatrix& valid);

  const std::vector<Group>& groups() const { return groups_; }
  int n_folds() const { return n_folds_; }
  Eigen::Index n_words() const { return n_words_; }
  Eigen::Index n_lags() const { return n_lags_; }

 private:
  std::vector<Group> groups_;
  int n_folds_ = 0;
  Eigen::Index n_words_ = 0;
  Eigen::Index n_lags_ = 0;
};

/// Design-side precomputation for one layer: for every (group, fold) the
/// pseudo-inverse of the training Gram matrix of [1, X]. Responses are then
/// folded in through sufficient statistics, so many response sets (lags,
/// electrodes, surrogates) share one factorisation.
class CvDesign {
 public:
  CvDesign(const CvPlan& plan, const ReducedLayer& layer);

  /// Pearson r between concatenated held-out predictions and responses,
  /// [n_electrodes x n_lags]; NaN where undefined.
  MatrixD correlate(const ResponseTensor& y) const;

 private:
  struct FoldPart {
    MatrixD gram_pinv;  // p x p
    MatrixD a_test;     // n_test x p
    MatrixD gram_test;  // a_test' a_test
    Eigen::RowVectorXd a_test_sum;
    bool usable = false;
  };
  struct GroupPart {
    std::vector<MatrixD> a;  // one (shared) or one per fold: n_valid x p
    std::vector<FoldPart> folds;
  };

  const CvPlan* plan_;
  std::vector<GroupPart> parts_;
  bool fold_specific_ = false;
};

}  // namespace lagcoder
