#include "lagcoder/stats.hpp"

#include "fft.hpp"
#include "lagcoder/error.hpp"
#include "lagcoder/parallel.hpp"

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace lagcoder {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kPermBlock = 1024;

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorCode::ShapeMismatch, "pearson inputs differ in length");
  const std::size_t n = x.size();
  if (n < 3) return kNaN;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0) || !(syy > 0)) return kNaN;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> fractional_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorCode::ShapeMismatch, "spearman inputs differ in length");
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  return pearson(rx, ry);
}

double permutation_test_layers(std::span<const double> layers, std::span<const double> lags, int n_perm,
                               std::uint64_t seed, Sidedness sided, int threads) {
  require(layers.size() == lags.size(), ErrorCode::ShapeMismatch, "layer and lag vectors differ in length");
  require(n_perm >= 1, ErrorCode::InvalidArgument, "n_perm must be positive");
  const double r_obs = pearson(layers, lags);
  if (std::isnan(r_obs)) return kNaN;

  const std::size_t n = lags.size();
  const double my = std::accumulate(lags.begin(), lags.end(), 0.0) / static_cast<double>(n);
  std::vector<double> yc(n);
  for (std::size_t i = 0; i < n; ++i) yc[i] = lags[i] - my;
  // Shuffling x keeps its mean and spread, so comparing the cross products is
  // equivalent to comparing r.
  double sxy = 0, scale = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += layers[i] * yc[i];
    scale += std::abs(layers[i] * yc[i]);
  }
  const double eps = 1e-12 * scale;
  const bool two_sided = sided == Sidedness::TwoSided;
  const double observed = two_sided ? std::abs(sxy) : sxy;

  const std::size_t total = static_cast<std::size_t>(n_perm);
  const std::size_t n_blocks = (total + kPermBlock - 1) / kPermBlock;
  std::vector<std::size_t> hits(n_blocks, 0);
  parallel_for(n_blocks, threads, [&](std::size_t b) {
    Rng rng = make_rng(seed, Stream::Permutation, b);
    std::vector<double> x(layers.begin(), layers.end());
    const std::size_t count = std::min(kPermBlock, total - b * kPermBlock);
    std::size_t h = 0;
    for (std::size_t p = 0; p < count; ++p) {
      for (std::size_t i = n - 1; i > 0; --i) std::swap(x[i], x[uniform_index(rng, i + 1)]);
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += x[i] * yc[i];
      if ((two_sided ? std::abs(s) : s) >= observed - eps) ++h;
    }
    hits[b] = h;
  });
  const std::size_t exceed = std::accumulate(hits.begin(), hits.end(), std::size_t{0});
  return (1.0 + static_cast<double>(exceed)) / (1.0 + static_cast<double>(n_perm));
}

LagLayerResult lag_layer_correlation(const PeakLagTable& peaks, int n_perm, std::uint64_t seed, Sidedness sided,
                                     int threads) {
  require(peaks.rows.size() >= 3, ErrorCode::InvalidArgument, "lag-layer correlation needs at least 3 layers");
  LagLayerResult r;
  r.layer_indices = peaks.layer_indices();
  r.peak_lags = peaks.lags();
  r.n_perm = n_perm;
  r.pearson_r = pearson(r.layer_indices, r.peak_lags);
  r.spearman_r = spearman(r.layer_indices, r.peak_lags);
  r.degenerate = std::isnan(r.pearson_r);
  r.permutation_p = r.degenerate ? kNaN
                                 : permutation_test_layers(r.layer_indices, r.peak_lags, n_perm, seed, sided, threads);
  return r;
}

double bootstrap_mean_p(std::span<const double> values, int n_boot, std::uint64_t seed, std::uint64_t stream) {
  require(n_boot >= 1, ErrorCode::InvalidArgument, "n_boot must be positive");
  std::vector<double> v;
  for (const double x : values) {
    if (!std::isnan(x)) v.push_back(x);
  }
  require(v.size() >= 2, ErrorCode::TooFewElectrodes, "bootstrap needs at least two finite values");
  Rng rng = make_rng(seed, Stream::Bootstrap, stream);
  std::size_t le = 0, ge = 0;
  for (int b = 0; b < n_boot; ++b) {
    double s = 0;
    for (std::size_t i = 0; i < v.size(); ++i) s += v[uniform_index(rng, v.size())];
    const double mean = s / static_cast<double>(v.size());
    if (mean <= 0) ++le;
    if (mean >= 0) ++ge;
  }
  const double tail = static_cast<double>(std::min(le, ge));
  return std::min(1.0, 2.0 * (1.0 + tail) / (1.0 + static_cast<double>(n_boot)));
}

VectorD bootstrap_roi_peaks(const MatrixD& per_electrode, int n_boot, std::uint64_t seed, int threads) {
  require(per_electrode.rows() >= 2, ErrorCode::TooFewElectrodes, "bootstrap needs at least two electrodes");
  VectorD p(per_electrode.cols());
  parallel_for(static_cast<std::size_t>(per_electrode.cols()), threads, [&](std::size_t k) {
    const VectorD col = per_electrode.col(static_cast<Eigen::Index>(k));
    p(static_cast<Eigen::Index>(k)) = bootstrap_mean_p({col.data(), static_cast<std::size_t>(col.size())}, n_boot,
                                                       seed, k);
  });
  return p;
}

std::vector<double> phase_randomize(std::span<const double> signal, Rng& rng) {
  if (signal.size() < 3) return {signal.begin(), signal.end()};
  const detail::RealFft fft(signal.size());
  auto spectrum = fft.forward(signal);
  detail::randomize_phases(spectrum, signal.size(), rng);
  return fft.inverse(spectrum);
}

std::vector<double> fdr_bh(std::span<const double> p) {
  const std::size_t k = p.size();
  for (const double v : p) {
    require(v >= 0.0 && v <= 1.0, ErrorCode::OutOfRange, "p-values must lie in [0, 1]");
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> q(k);
  double running = 1.0;
  for (std::size_t i = k; i-- > 0;) {
    const double v = static_cast<double>(k) * p[order[i]] / static_cast<double>(i + 1);
    running = std::min(running, v);
    q[order[i]] = running;
  }
  return q;
}

PairedTTest paired_ttest_layers(const MatrixD& pred, const MatrixD& unpred) {
  require(pred.rows() == unpred.rows() && pred.cols() == unpred.cols(), ErrorCode::ShapeMismatch,
          "paired inputs must share electrodes and layers");
  const Eigen::Index n_layers = pred.cols();
  PairedTTest out;
  out.mean_difference.resize(n_layers);
  out.t.resize(n_layers);
  out.p.resize(n_layers);
  out.n_pairs.resize(n_layers);
  for (Eigen::Index k = 0; k < n_layers; ++k) {
    std::vector<double> d;
    for (Eigen::Index e = 0; e < pred.rows(); ++e) {
      const double v = pred(e, k) - unpred(e, k);
      if (!std::isnan(v)) d.push_back(v);
    }
    require(d.size() >= 3, ErrorCode::TooFewPairs,
            "layer " + std::to_string(k + 1) + " has " + std::to_string(d.size()) + " pairs; need 3");
    const double n = static_cast<double>(d.size());
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
    double ss = 0;
    for (const double v : d) ss += (v - mean) * (v - mean);
    const double se = std::sqrt(ss / (n - 1) / n);
    out.mean_difference(k) = mean;
    out.n_pairs(k) = static_cast<int>(d.size());
    if (se == 0.0 || se <= 1e-15 * std::abs(mean)) {
      out.t(k) = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
      out.p(k) = mean == 0.0 ? 1.0 : 0.0;
      continue;
    }
    out.t(k) = mean / se;
    const boost::math::students_t dist(n - 1);
    out.p(k) = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t(k)))));
  }
  const auto q = fdr_bh({out.p.data(), static_cast<std::size_t>(out.p.size())});
  out.q = Eigen::Map<const VectorD>(q.data(), static_cast<Eigen::Index>(q.size()));
  return out;
}

LeveneResult levene_test(const std::vector<std::vector<double>>& groups) {
  require(groups.size() >= 2, ErrorCode::DegenerateGroup, "Levene's test needs at least two groups");
  std::vector<std::vector<double>> z(groups.size());
  std::vector<double> zbar(groups.size());
  double total = 0;
  std::size_t n = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    require(groups[g].size() >= 2, ErrorCode::DegenerateGroup,
            "group " + std::to_string(g) + " has fewer than two values");
    const double mean =
        std::accumulate(groups[g].begin(), groups[g].end(), 0.0) / static_cast<double>(groups[g].size());
    for (const double v : groups[g]) z[g].push_back(std::abs(v - mean));
    zbar[g] = std::accumulate(z[g].begin(), z[g].end(), 0.0) / static_cast<double>(z[g].size());
    total += std::accumulate(z[g].begin(), z[g].end(), 0.0);
    n += z[g].size();
  }
  const double grand = total / static_cast<double>(n);
  double between = 0, within = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    between += static_cast<double>(z[g].size()) * (zbar[g] - grand) * (zbar[g] - grand);
    for (const double v : z[g]) within += (v - zbar[g]) * (v - zbar[g]);
  }
  LeveneResult r;
  r.df_between = static_cast<int>(groups.size()) - 1;
  r.df_within = static_cast<int>(n - groups.size());
  require(r.df_within > 0, ErrorCode::DegenerateGroup, "no within-group degrees of freedom");
  const double msb = between / r.df_between;
  const double msw = within / r.df_within;
  if (msw <= 1e-300) {
    r.f = msb <= 1e-300 ? 0.0 : std::numeric_limits<double>::infinity();
    r.p = msb <= 1e-300 ? 1.0 : 0.0;
    return r;
  }
  r.f = msb / msw;
  const boost::math::fisher_f dist(r.df_between, r.df_within);
  r.p = boost::math::cdf(boost::math::complement(dist, r.f));
  return r;
}

KsResult ks_uniform(std::span<const double> values) {
  require(!values.empty(), ErrorCode::InvalidArgument, "KS test needs values");
  std::vector<double> u(values.begin(), values.end());
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  KsResult r;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double x = std::clamp(u[i], 0.0, 1.0);
    r.d = std::max({r.d, static_cast<double>(i + 1) / n - x, x - static_cast<double>(i) / n});
  }
  // Asymptotic Kolmogorov tail with Stephens' small-sample adjustment.
  const double sn = std::sqrt(n);
  const double lambda = (sn + 0.12 + 0.11 / sn) * r.d;
  if (lambda < 0.2) {
    r.p = 1.0;
    return r;
  }
  double sum = 0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-16) break;
  }
  r.p = std::clamp(2.0 * sum, 0.0, 1.0);
  return r;
}

}  // namespace lagcoder
