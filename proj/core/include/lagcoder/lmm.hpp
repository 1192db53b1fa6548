#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

namespace lagcoder {

struct LmmRow {
  std::string group;  // electrode id
  double layer = 0.0;
  double lag = 0.0;
};

/// Fit of lag ~ 1 + layer + (1 + layer | group) by REML.
struct LmmFit {
  double fixed_intercept = 0.0;
  double fixed_slope = 0.0;
  double intercept_std_error = 0.0;
  double slope_std_error = 0.0;
  double slope_z = 0.0;
  double slope_p = 1.0;  // Wald z, two-sided
  double intercept_var = 0.0;
  double slope_var = 0.0;
  double intercept_slope_cov = 0.0;
  double residual_var = 0.0;
  double log_restricted_likelihood = 0.0;
  std::array<double, 3> theta{};  // relative Cholesky factor (l11, l21, l22)
  bool converged = false;
  bool singular = false;  // a variance component at the boundary
  int evaluations = 0;
  std::size_t n_groups = 0;
  std::size_t n_obs = 0;
};

/// Per-group sufficient statistics; the REML criterion needs nothing else.
class LmmData {
 public:
  explicit LmmData(std::span<const LmmRow> rows);

  std::size_t n_groups() const { return groups_.size(); }
  std::size_t n_obs() const { return n_; }

  /// -2 x restricted log-likelihood with sigma^2 profiled out, at relative
  /// factor theta = (l11, l21, l22) (absolute values of l11 and l22 are used).
  double reml_deviance(const std::array<double, 3>& theta) const;

  struct Profile {
    double deviance = 0.0;
    double sigma2 = 0.0;
    std::array<double, 2> beta{};
    std::array<double, 4> beta_cov_scaled{};  // (X' V~^-1 X)^-1, row-major 2x2
  };
  Profile profile(const std::array<double, 3>& theta) const;

  /// Pooled OLS residual sum of squares and coefficients (no random effects).
  double pooled_rss(std::array<double, 2>* beta = nullptr) const;

 private:
  struct Group {
    double n = 0, sx = 0, sxx = 0, sy = 0, sxy = 0, syy = 0;
  };
  std::vector<Group> groups_;
  std::size_t n_ = 0;
};

LmmFit fit_lmm(std::span<const LmmRow> rows);

}  // namespace lagcoder
