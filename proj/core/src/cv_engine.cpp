#include "lagcoder/cv_engine.hpp"

#include "lagcoder/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

namespace lagcoder {

namespace {

MatrixD gram_pinv(const MatrixD& gram) {
  Eigen::SelfAdjointEigenSolver<MatrixD> eig(gram);
  const VectorD& lambda = eig.eigenvalues();
  const double lmax = lambda.size() ? lambda.maxCoeff() : 0.0;
  const double tol = lmax * static_cast<double>(gram.rows()) * 1e3 * std::numeric_limits<double>::epsilon();
  VectorD inv = VectorD::Zero(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) > tol) inv(i) = 1.0 / lambda(i);
  }
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

MatrixD with_intercept(const MatrixD& x, const std::vector<Eigen::Index>& rows) {
  MatrixD a(static_cast<Eigen::Index>(rows.size()), x.cols() + 1);
  a.col(0).setOnes();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    a.row(static_cast<Eigen::Index>(i)).tail(x.cols()) = x.row(rows[i]);
  }
  return a;
}

MatrixD take_rows(const MatrixD& m, const std::vector<Eigen::Index>& rows) {
  MatrixD out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

}  // namespace

CvPlan::CvPlan(const FoldAssignment& folds, const MaskMatrix& valid)
    : n_folds_(folds.n_folds), n_words_(valid.rows()), n_lags_(valid.cols()) {
  require(static_cast<Eigen::Index>(folds.n_words()) == valid.rows(), ErrorCode::ShapeMismatch,
          "fold assignment and validity mask disagree on the word count");
  std::map<std::string, std::size_t> index_of;
  for (Eigen::Index l = 0; l < valid.cols(); ++l) {
    std::string key(static_cast<std::size_t>(valid.rows()), '\0');
    for (Eigen::Index w = 0; w < valid.rows(); ++w) key[static_cast<std::size_t>(w)] = valid(w, l) ? '1' : '0';
    auto [it, inserted] = index_of.try_emplace(key, groups_.size());
    if (inserted) {
      Group g;
      for (Eigen::Index w = 0; w < valid.rows(); ++w) {
        if (valid(w, l)) g.words.push_back(w);
      }
      g.test_rows.resize(static_cast<std::size_t>(n_folds_));
      for (std::size_t i = 0; i < g.words.size(); ++i) {
        const int f = folds.fold_of_word[static_cast<std::size_t>(g.words[i])];
        g.test_rows[static_cast<std::size_t>(f)].push_back(static_cast<Eigen::Index>(i));
      }
      groups_.push_back(std::move(g));
    }
    groups_[it->second].lags.push_back(l);
  }
}

CvDesign::CvDesign(const CvPlan& plan, const ReducedLayer& layer)
    : plan_(&plan), fold_specific_(layer.fold_specific()) {
  require(!layer.per_fold.empty(), ErrorCode::InvalidArgument, "empty reduced layer");
  for (const auto& m : layer.per_fold) {
    require(m.rows() == plan.n_words(), ErrorCode::ShapeMismatch, "design rows do not match the plan");
  }
  require(!fold_specific_ || static_cast<int>(layer.per_fold.size()) == plan.n_folds(), ErrorCode::ShapeMismatch,
          "fold-specific design needs one matrix per fold");

  parts_.resize(plan.groups().size());
  for (std::size_t g = 0; g < plan.groups().size(); ++g) {
    const auto& group = plan.groups()[g];
    auto& part = parts_[g];
    for (const auto& m : layer.per_fold) part.a.push_back(with_intercept(m, group.words));

    part.folds.resize(static_cast<std::size_t>(plan.n_folds()));
    const auto n_valid = static_cast<Eigen::Index>(group.words.size());
    for (int f = 0; f < plan.n_folds(); ++f) {
      const auto& test = group.test_rows[static_cast<std::size_t>(f)];
      auto& fp = part.folds[static_cast<std::size_t>(f)];
      const Eigen::Index n_train = n_valid - static_cast<Eigen::Index>(test.size());
      fp.usable = !test.empty() && n_train >= 2;
      const MatrixD& a = part.a[fold_specific_ ? static_cast<std::size_t>(f) : 0];
      fp.a_test = take_rows(a, test);
      if (!fp.usable) continue;
      std::vector<Eigen::Index> train;
      train.reserve(static_cast<std::size_t>(n_train));
      std::size_t t = 0;
      for (Eigen::Index i = 0; i < n_valid; ++i) {
        if (t < test.size() && test[t] == i) {
          ++t;
        } else {
          train.push_back(i);
        }
      }
      const MatrixD a_train = take_rows(a, train);
      fp.gram_pinv = gram_pinv(a_train.transpose() * a_train);
      fp.gram_test = fp.a_test.transpose() * fp.a_test;
      fp.a_test_sum = fp.a_test.colwise().sum();
    }
  }
}

MatrixD CvDesign::correlate(const ResponseTensor& y) const {
  const auto n_elec = static_cast<Eigen::Index>(y.n_electrodes());
  require(y.n_words() == plan_->n_words() && y.n_lags() == plan_->n_lags(), ErrorCode::ShapeMismatch,
          "responses do not match the CV plan");
  MatrixD out = MatrixD::Constant(n_elec, y.n_lags(), std::numeric_limits<double>::quiet_NaN());

  for (std::size_t g = 0; g < plan_->groups().size(); ++g) {
    const auto& group = plan_->groups()[g];
    const auto& part = parts_[g];
    const auto n_valid = static_cast<Eigen::Index>(group.words.size());
    const auto n_group_lags = static_cast<Eigen::Index>(group.lags.size());
    const Eigen::Index cols = n_elec * n_group_lags;
    if (n_valid < 3) continue;

    MatrixD yc(n_valid, cols);
    for (Eigen::Index e = 0; e < n_elec; ++e) {
      const MatrixD& ye = y.values[static_cast<std::size_t>(e)];
      for (Eigen::Index j = 0; j < n_group_lags; ++j) {
        const Eigen::Index lag = group.lags[static_cast<std::size_t>(j)];
        auto col = yc.col(e * n_group_lags + j);
        for (Eigen::Index i = 0; i < n_valid; ++i) col(i) = ye(group.words[static_cast<std::size_t>(i)], lag);
      }
    }
    const VectorD raw_sq = yc.colwise().squaredNorm().transpose();
    const Eigen::RowVectorXd mean = yc.colwise().mean();
    yc.rowwise() -= mean;

    // Test-fold cross products; in the shared case they also sum to A'Yc
    // because the folds partition the group's words.
    std::vector<MatrixD> t(static_cast<std::size_t>(plan_->n_folds()));
    std::vector<MatrixD> y_test(t.size());
    MatrixD shared_rhs;
    if (!fold_specific_) shared_rhs = MatrixD::Zero(part.a.front().cols(), cols);
    for (int f = 0; f < plan_->n_folds(); ++f) {
      const auto fi = static_cast<std::size_t>(f);
      if (group.test_rows[fi].empty()) continue;
      y_test[fi] = take_rows(yc, group.test_rows[fi]);
      t[fi] = part.folds[fi].a_test.transpose() * y_test[fi];
      if (!fold_specific_) shared_rhs += t[fi];
    }

    VectorD sp = VectorD::Zero(cols), spp = VectorD::Zero(cols), spy = VectorD::Zero(cols);
    VectorD sy = VectorD::Zero(cols), syy = VectorD::Zero(cols), ysq = VectorD::Zero(cols);
    double n_eval = 0.0;
    for (int f = 0; f < plan_->n_folds(); ++f) {
      const auto fi = static_cast<std::size_t>(f);
      const auto& fp = part.folds[fi];
      if (!fp.usable) continue;
      const MatrixD rhs = fold_specific_ ? MatrixD(part.a[fi].transpose() * yc - t[fi]) : MatrixD(shared_rhs - t[fi]);
      const MatrixD b = fp.gram_pinv * rhs;
      // Prediction sums without forming A_test B: sum = 1'A B, squares = diag(B'GB), cross = diag(T'B).
      sp += (fp.a_test_sum * b).transpose();
      spp += (fp.gram_test * b).cwiseProduct(b).colwise().sum().transpose();
      spy += t[fi].cwiseProduct(b).colwise().sum().transpose();
      sy += y_test[fi].colwise().sum().transpose();
      syy += y_test[fi].colwise().squaredNorm().transpose();
      n_eval += static_cast<double>(group.test_rows[fi].size());
    }
    if (n_eval < 3) continue;
    ysq = raw_sq;

    for (Eigen::Index e = 0; e < n_elec; ++e) {
      for (Eigen::Index j = 0; j < n_group_lags; ++j) {
        const Eigen::Index c = e * n_group_lags + j;
        const double vy = syy(c) - sy(c) * sy(c) / n_eval;
        const double vp = spp(c) - sp(c) * sp(c) / n_eval;
        const double cov = spy(c) - sp(c) * sy(c) / n_eval;
        double r = std::numeric_limits<double>::quiet_NaN();
        if (vy > 1e-24 * ysq(c) && vy > 0 && vp > 1e-24 * spp(c) && vp > 0) {
          r = std::clamp(cov / std::sqrt(vy * vp), -1.0, 1.0);
        }
        out(e, group.lags[static_cast<std::size_t>(j)]) = r;
      }
    }
  }
  return out;
}

}  // namespace lagcoder
