#include "lagcoder/lmm.hpp"

#include "lagcoder/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace lagcoder {

namespace {

using Vec3 = std::array<double, 3>;

struct Mat2 {
  double a = 0, b = 0, c = 0, d = 0;  // [[a, b], [c, d]]

  double det() const { return a * d - b * c; }
  Mat2 inverse() const {
    const double k = 1.0 / det();
    return {d * k, -b * k, -c * k, a * k};
  }
  Mat2 operator*(const Mat2& o) const {
    return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d};
  }
  Mat2 transpose() const { return {a, c, b, d}; }
};

struct NelderMeadResult {
  Vec3 x{};
  double f = 0.0;
  int evaluations = 0;
  bool converged = false;
};

template <class F>
NelderMeadResult nelder_mead(F&& f, const Vec3& start, double step, int max_evals) {
  std::array<Vec3, 4> s;
  std::array<double, 4> fs;
  NelderMeadResult res;
  s[0] = start;
  for (int i = 0; i < 3; ++i) {
    s[static_cast<std::size_t>(i) + 1] = start;
    s[static_cast<std::size_t>(i) + 1][static_cast<std::size_t>(i)] += step;
  }
  for (std::size_t i = 0; i < 4; ++i) fs[i] = f(s[i]);
  res.evaluations = 4;

  auto combine = [](const Vec3& a, const Vec3& b, double t) {
    Vec3 out;
    for (std::size_t k = 0; k < 3; ++k) out[k] = a[k] + t * (b[k] - a[k]);
    return out;
  };

  while (res.evaluations < max_evals) {
    std::array<std::size_t, 4> idx{0, 1, 2, 3};
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return fs[i] < fs[j]; });
    std::array<Vec3, 4> s2;
    std::array<double, 4> f2;
    for (std::size_t i = 0; i < 4; ++i) {
      s2[i] = s[idx[i]];
      f2[i] = fs[idx[i]];
    }
    s = s2;
    fs = f2;

    double size = 0;
    for (std::size_t i = 1; i < 4; ++i) {
      for (std::size_t k = 0; k < 3; ++k) size = std::max(size, std::abs(s[i][k] - s[0][k]));
    }
    if (std::abs(fs[3] - fs[0]) <= 1e-11 * (1.0 + std::abs(fs[0])) && size < 1e-7) {
      res.converged = true;
      break;
    }

    Vec3 centroid{};
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t k = 0; k < 3; ++k) centroid[k] += s[i][k] / 3.0;
    }
    const Vec3 xr = combine(centroid, s[3], -1.0);
    const double fr = f(xr);
    ++res.evaluations;
    if (fr < fs[0]) {
      const Vec3 xe = combine(centroid, s[3], -2.0);
      const double fe = f(xe);
      ++res.evaluations;
      if (fe < fr) {
        s[3] = xe;
        fs[3] = fe;
      } else {
        s[3] = xr;
        fs[3] = fr;
      }
      continue;
    }
    if (fr < fs[2]) {
      s[3] = xr;
      fs[3] = fr;
      continue;
    }
    const bool outside = fr < fs[3];
    const Vec3 xc = outside ? combine(centroid, xr, 0.5) : combine(centroid, s[3], 0.5);
    const double fc = f(xc);
    ++res.evaluations;
    if (fc < (outside ? fr : fs[3])) {
      s[3] = xc;
      fs[3] = fc;
      continue;
    }
    for (std::size_t i = 1; i < 4; ++i) {
      s[i] = combine(s[0], s[i], 0.5);
      fs[i] = f(s[i]);
      ++res.evaluations;
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(fs.begin(), fs.end()) - fs.begin());
  res.x = s[best];
  res.f = fs[best];
  return res;
}

}  // namespace

LmmData::LmmData(std::span<const LmmRow> rows) {
  std::map<std::string, std::size_t> index;
  for (const auto& r : rows) {
    require(std::isfinite(r.layer) && std::isfinite(r.lag), ErrorCode::NonFiniteValue, "non-finite LMM input");
    auto [it, inserted] = index.try_emplace(r.group, groups_.size());
    if (inserted) groups_.emplace_back();
    Group& g = groups_[it->second];
    g.n += 1;
    g.sx += r.layer;
    g.sxx += r.layer * r.layer;
    g.sy += r.lag;
    g.sxy += r.layer * r.lag;
    g.syy += r.lag * r.lag;
  }
  n_ = rows.size();
}

LmmData::Profile LmmData::profile(const Vec3& theta) const {
  const Mat2 lambda{std::abs(theta[0]), 0.0, theta[1], std::abs(theta[2])};
  const Mat2 lambda_t = lambda.transpose();
  double logdet = 0;
  Mat2 xtvx;             // X' V~^-1 X
  double xtvy0 = 0, xtvy1 = 0, ytvy = 0;
  for (const auto& g : groups_) {
    const Mat2 ztz{g.n, g.sx, g.sx, g.sxx};
    const double zty0 = g.sy, zty1 = g.sxy;
    Mat2 inner = lambda_t * ztz * lambda;
    inner.a += 1.0;
    inner.d += 1.0;
    logdet += std::log(inner.det());
    // Woodbury: V~^-1 = I - Z M Z' with M = L (I + L' Z'Z L)^-1 L'.
    const Mat2 m = lambda * inner.inverse() * lambda_t;
    const Mat2 mz = m * ztz;
    const Mat2 ztz_m_ztz = ztz * mz;
    xtvx.a += ztz.a - ztz_m_ztz.a;
    xtvx.b += ztz.b - ztz_m_ztz.b;
    xtvx.c += ztz.c - ztz_m_ztz.c;
    xtvx.d += ztz.d - ztz_m_ztz.d;
    const double mzy0 = m.a * zty0 + m.b * zty1;
    const double mzy1 = m.c * zty0 + m.d * zty1;
    xtvy0 += zty0 - (ztz.a * mzy0 + ztz.b * mzy1);
    xtvy1 += zty1 - (ztz.c * mzy0 + ztz.d * mzy1);
    ytvy += g.syy - (zty0 * mzy0 + zty1 * mzy1);
  }
  Profile p;
  const Mat2 inv = xtvx.inverse();
  p.beta = {inv.a * xtvy0 + inv.b * xtvy1, inv.c * xtvy0 + inv.d * xtvy1};
  p.beta_cov_scaled = {inv.a, inv.b, inv.c, inv.d};
  const double rss = std::max(ytvy - (p.beta[0] * xtvy0 + p.beta[1] * xtvy1), 0.0);
  const double dof = static_cast<double>(n_) - 2.0;
  p.sigma2 = rss / dof;
  constexpr double two_pi = 6.283185307179586476925286766559;
  p.deviance = logdet + std::log(xtvx.det()) + dof * (1.0 + std::log(two_pi * p.sigma2));
  return p;
}

double LmmData::reml_deviance(const Vec3& theta) const { return profile(theta).deviance; }

double LmmData::pooled_rss(std::array<double, 2>* beta) const {
  double n = 0, sx = 0, sxx = 0, sy = 0, sxy = 0, syy = 0;
  for (const auto& g : groups_) {
    n += g.n;
    sx += g.sx;
    sxx += g.sxx;
    sy += g.sy;
    sxy += g.sxy;
    syy += g.syy;
  }
  const double vx = sxx - sx * sx / n;
  const double cxy = sxy - sx * sy / n;
  const double vy = syy - sy * sy / n;
  const double slope = vx > 0 ? cxy / vx : 0.0;
  if (beta) *beta = {(sy - slope * sx) / n, slope};
  return std::max(vy - slope * cxy, 0.0);
}

LmmFit fit_lmm(std::span<const LmmRow> rows) {
  const LmmData data(rows);
  require(data.n_groups() >= 3, ErrorCode::DegenerateGroup,
          "mixed model needs at least 3 electrodes, got " + std::to_string(data.n_groups()));
  {
    std::map<std::string, std::vector<double>> layers;
    for (const auto& r : rows) layers[r.group].push_back(r.layer);
    for (auto& [g, v] : layers) {
      std::sort(v.begin(), v.end());
      const auto distinct = std::unique(v.begin(), v.end()) - v.begin();
      require(distinct >= 3, ErrorCode::DegenerateGroup, "electrode " + g + " has fewer than 3 distinct layers");
    }
  }

  LmmFit fit;
  fit.n_groups = data.n_groups();
  fit.n_obs = data.n_obs();

  // Exactly linear data: the restricted likelihood is unbounded, the answer is
  // the pooled line with no variance anywhere.
  std::array<double, 2> ols{};
  double syy = 0, sy = 0;
  for (const auto& r : rows) {
    syy += r.lag * r.lag;
    sy += r.lag;
  }
  const double tss = syy - sy * sy / static_cast<double>(rows.size());
  const double rss = data.pooled_rss(&ols);
  if (rss <= 1e-20 * std::max(tss, syy) || tss == 0.0) {
    fit.fixed_intercept = ols[0];
    fit.fixed_slope = ols[1];
    fit.slope_z = fit.fixed_slope == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), ols[1]);
    fit.slope_p = fit.fixed_slope == 0.0 ? 1.0 : 0.0;
    fit.converged = true;
    fit.singular = true;
    fit.log_restricted_likelihood = std::numeric_limits<double>::infinity();
    return fit;
  }

  auto objective = [&](const Vec3& t) {
    const double d = data.reml_deviance(t);
    return std::isfinite(d) ? d : std::numeric_limits<double>::max();
  };
  NelderMeadResult best = nelder_mead(objective, {1.0, 0.0, 1.0}, 0.5, 20000);
  int evals = best.evaluations;
  for (int restart = 0; restart < 3; ++restart) {
    const NelderMeadResult again = nelder_mead(objective, best.x, 0.1, 20000);
    evals += again.evaluations;
    const bool improved = again.f < best.f - 1e-9 * (1.0 + std::abs(best.f));
    if (again.f <= best.f) best = again;
    if (!improved) break;
  }
  // Rescaled starts guard against a local optimum near the boundary.
  for (const double scale : {0.01, 10.0}) {
    const NelderMeadResult alt = nelder_mead(objective, {scale, 0.0, scale}, 0.5 * scale, 20000);
    evals += alt.evaluations;
    if (alt.f < best.f) best = nelder_mead(objective, alt.x, 0.1, 20000);
  }

  const Vec3 theta{std::abs(best.x[0]), best.x[1], std::abs(best.x[2])};
  const auto prof = data.profile(theta);
  fit.theta = theta;
  fit.evaluations = evals;
  fit.converged = best.converged;
  fit.fixed_intercept = prof.beta[0];
  fit.fixed_slope = prof.beta[1];
  fit.residual_var = prof.sigma2;
  fit.intercept_var = prof.sigma2 * theta[0] * theta[0];
  fit.intercept_slope_cov = prof.sigma2 * theta[0] * theta[1];
  fit.slope_var = prof.sigma2 * (theta[1] * theta[1] + theta[2] * theta[2]);
  fit.intercept_std_error = std::sqrt(prof.sigma2 * prof.beta_cov_scaled[0]);
  fit.slope_std_error = std::sqrt(prof.sigma2 * prof.beta_cov_scaled[3]);
  fit.slope_z = fit.fixed_slope / fit.slope_std_error;
  fit.slope_p = std::erfc(std::abs(fit.slope_z) / std::sqrt(2.0));
  fit.log_restricted_likelihood = -0.5 * prof.deviance;
  fit.singular = theta[0] < 1e-4 || theta[2] < 1e-4;
  return fit;
}

}  // namespace lagcoder
