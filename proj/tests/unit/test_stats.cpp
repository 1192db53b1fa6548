#include "lagcoder/error.hpp"
#include "lagcoder/stats.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <complex>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

using namespace lagcoder;
using lagcoder::testing::gaussian_vector;

namespace {

std::vector<double> to_vec(const VectorD& v) { return {v.data(), v.data() + v.size()}; }

std::vector<std::complex<double>> dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      acc += x[t] * std::polar(1.0, -2.0 * M_PI * static_cast<double>(k * t % n) / static_cast<double>(n));
    }
    out[k] = acc;
  }
  return out;
}

std::vector<double> circular_acf(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t lag = 0; lag < n; ++lag) {
    for (std::size_t t = 0; t < n; ++t) out[lag] += x[t] * x[(t + lag) % n];
  }
  return out;
}

std::vector<double> brute_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (const double v : x) {
      less += v < x[i];
      equal += v == x[i];
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Pearson, IdentityAndNegation) {
  const auto x = to_vec(gaussian_vector(50, 1));
  std::vector<double> neg(x.size());
  std::transform(x.begin(), x.end(), neg.begin(), [](double v) { return -v; });
  EXPECT_NEAR(pearson(x, x), 1.0, 1e-14);
  EXPECT_NEAR(pearson(x, neg), -1.0, 1e-14);
}

TEST(Pearson, ClosedForm) {
  // Sxy = 4.1, Sxx = 2, Syy = 57.21 - 12.1^2 / 3 = 25.22 / 3.
  const std::vector<double> x{1, 2, 3}, y{2, 4, 6.1};
  EXPECT_NEAR(pearson(x, y), 4.1 / std::sqrt(2.0 * 25.22 / 3.0), 1e-14);
}

TEST(Pearson, UndefinedCases) {
  EXPECT_TRUE(std::isnan(pearson(std::vector<double>{1, 2}, std::vector<double>{3, 4})));
  EXPECT_TRUE(std::isnan(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{5, 5, 5})));
}

TEST(Spearman, MonotoneReversedAndTies) {
  const auto x = to_vec(gaussian_vector(40, 2));
  std::vector<double> cube(x.size()), rev(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    cube[i] = std::exp(x[i]) + x[i] * x[i] * x[i];
    rev[i] = -x[i];
  }
  EXPECT_NEAR(spearman(x, cube), 1.0, 1e-14);
  EXPECT_NEAR(spearman(x, rev), -1.0, 1e-14);

  const std::vector<double> a{3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5}, b{2, 7, 1, 8, 2, 8, 1, 8, 2, 8, 4};
  EXPECT_EQ(fractional_ranks(a), brute_ranks(a));
  EXPECT_NEAR(spearman(a, b), pearson(brute_ranks(a), brute_ranks(b)), 1e-14);
}

TEST(Permutation, PerfectOrderGivesMinimumP) {
  std::vector<double> layers(48), lags(48);
  for (int k = 0; k < 48; ++k) {
    layers[static_cast<std::size_t>(k)] = k + 1;
    lags[static_cast<std::size_t>(k)] = 100 + 6 * k;
  }
  EXPECT_DOUBLE_EQ(permutation_test_layers(layers, lags, 2000, 3), 1.0 / 2001.0);
}

TEST(Permutation, EqualLagsAreUndefined) {
  std::vector<double> layers(48), lags(48, 150.0);
  std::iota(layers.begin(), layers.end(), 1.0);
  EXPECT_TRUE(std::isnan(permutation_test_layers(layers, lags, 100, 3)));
  PeakLagTable t;
  for (int k = 1; k <= 48; ++k) t.rows.push_back({k, 150, 0.3});
  const auto r = lag_layer_correlation(t, 100, 1);
  EXPECT_TRUE(r.degenerate);
  EXPECT_TRUE(std::isnan(r.permutation_p));
}

TEST(Permutation, ReproducibleAndThreadIndependent) {
  std::vector<double> layers(48), lags(48);
  auto rng = make_rng(9, Stream::Synth);
  for (int k = 0; k < 48; ++k) {
    layers[static_cast<std::size_t>(k)] = k + 1;
    lags[static_cast<std::size_t>(k)] = 2.0 * k + 40.0 * standard_normal(rng);
  }
  const double a = permutation_test_layers(layers, lags, 3000, 17, Sidedness::OneSided, 1);
  const double b = permutation_test_layers(layers, lags, 3000, 17, Sidedness::OneSided, 4);
  EXPECT_EQ(a, b);
  EXPECT_GT(a, 0.0);
  EXPECT_LE(a, 1.0);
  EXPECT_LE(permutation_test_layers(layers, lags, 3000, 17, Sidedness::TwoSided, 1), 1.0);
}

TEST(LagLayer, IncreasingAndPlanted) {
  PeakLagTable t;
  for (int k = 1; k <= 48; ++k) t.rows.push_back({k, 100 + 25 * k, 0.5});
  const auto exact = lag_layer_correlation(t, 500, 1);
  EXPECT_NEAR(exact.pearson_r, 1.0, 1e-12);
  EXPECT_NEAR(exact.spearman_r, 1.0, 1e-12);

  PeakLagTable noisy;
  auto rng = make_rng(4, Stream::Synth);
  for (int k = 1; k <= 48; ++k) noisy.rows.push_back({k, static_cast<int>(std::lround(5.0 * k + 10.0 * standard_normal(rng))), 0.5});
  EXPECT_GE(lag_layer_correlation(noisy, 500, 1).pearson_r, 0.95);
}

TEST(Bootstrap, Cases) {
  const std::vector<double> constant(10, 0.5);
  EXPECT_DOUBLE_EQ(bootstrap_mean_p(constant, 999, 1), 2.0 / 1000.0);

  std::vector<double> symmetric;
  for (int i = 1; i <= 6; ++i) {
    symmetric.push_back(i * 0.1);
    symmetric.push_back(-i * 0.1);
  }
  EXPECT_GT(bootstrap_mean_p(symmetric, 2000, 2), 0.5);

  const VectorD g = (0.1 * gaussian_vector(10, 3)).array() + 0.3;
  EXPECT_LT(bootstrap_mean_p(to_vec(g), 10000, 3), 0.01);
  EXPECT_EQ(code_of([] { bootstrap_mean_p(std::vector<double>{0.2}, 100, 1); }), ErrorCode::TooFewElectrodes);
}

TEST(Bootstrap, PerLayerMatrix) {
  MatrixD m(4, 2);
  m << 0.5, 0.1, 0.5, -0.1, 0.5, 0.2, 0.5, -0.2;
  const VectorD p = bootstrap_roi_peaks(m, 500, 7, 1);
  EXPECT_DOUBLE_EQ(p(0), 2.0 / 501.0);
  EXPECT_GT(p(1), 0.3);
  EXPECT_TRUE(p == bootstrap_roi_peaks(m, 500, 7, 3));
  EXPECT_EQ(code_of([] { bootstrap_roi_peaks(MatrixD::Ones(1, 3), 10, 1); }), ErrorCode::TooFewElectrodes);
}

TEST(PhaseRandomize, SpectrumMeanAndAutocorrelation) {
  for (const std::size_t n : {256u, 255u}) {
    std::vector<double> x = to_vec(gaussian_vector(static_cast<Eigen::Index>(n), 5));
    for (std::size_t i = 0; i < n; ++i) x[i] += 2.0 + std::sin(0.3 * static_cast<double>(i));
    auto rng = make_rng(1, Stream::PhaseRandomization);
    const auto s = phase_randomize(x, rng);
    ASSERT_EQ(s.size(), n);
    const auto fx = dft(x), fs = dft(s);
    for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(std::abs(fs[k]), std::abs(fx[k]), 1e-6 * std::abs(fx[k]) + 1e-9);
    EXPECT_NEAR(std::accumulate(s.begin(), s.end(), 0.0), std::accumulate(x.begin(), x.end(), 0.0), 1e-8);
    const auto ax = circular_acf(x), as = circular_acf(s);
    for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(as[k], ax[k], 1e-6 * ax[0]);
    EXPECT_GT(std::abs(s[3] - x[3]) + std::abs(s[40] - x[40]), 1e-3);
  }
}

TEST(Fdr, HandComputed) {
  EXPECT_EQ(fdr_bh(std::vector<double>{0.04}), std::vector<double>{0.04});
  const auto q3 = fdr_bh(std::vector<double>{0.01, 0.02, 0.03});
  for (const double q : q3) EXPECT_NEAR(q, 0.03, 1e-15);
  for (const double q : fdr_bh(std::vector<double>(7, 1.0))) EXPECT_EQ(q, 1.0);

  // Sorted p: 0.001 0.008 0.039 0.041 0.042 0.06 0.074 0.205 0.212 0.216.
  const std::vector<double> p{0.205, 0.001, 0.042, 0.216, 0.039, 0.074, 0.008, 0.212, 0.041, 0.06};
  const std::vector<double> expect{0.216, 0.01, 0.084, 0.216, 0.084, 0.74 / 7.0, 0.04, 0.216, 0.084, 0.1};
  const auto q = fdr_bh(p);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(q[i], expect[i], 1e-12) << i;
}

TEST(Fdr, MonotoneAndBoundedBelowByP) {
  const auto g = gaussian_vector(60, 8);
  std::vector<double> p(60);
  for (std::size_t i = 0; i < 60; ++i) p[i] = std::pow(0.5 + 0.5 * std::tanh(g(static_cast<Eigen::Index>(i))), 3.0);
  const auto q = fdr_bh(p);
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_GE(q[i], p[i]);
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (p[i] < p[j]) EXPECT_LE(q[i], q[j]);
    }
  }
  EXPECT_EQ(code_of([] { fdr_bh(std::vector<double>{0.2, 1.5}); }), ErrorCode::OutOfRange);
}

TEST(PairedT, IdenticalShiftedAndTooFew) {
  const MatrixD a = lagcoder::testing::gaussian_matrix(10, 48, 9) * 50.0;
  const auto same = paired_ttest_layers(a, a);
  for (Eigen::Index k = 0; k < 48; ++k) EXPECT_EQ(same.p(k), 1.0);
  const MatrixD shifted = (a.array() + 300.0 + 0.5 * lagcoder::testing::gaussian_matrix(10, 48, 10).array()).matrix();
  const auto t = paired_ttest_layers(shifted, a);
  for (Eigen::Index k = 0; k < 48; ++k) {
    EXPECT_LT(t.p(k), 0.001);
    EXPECT_LT(t.q(k), 0.001);
    EXPECT_NEAR(t.mean_difference(k), 300.0, 1.0);
    EXPECT_EQ(t.n_pairs(k), 10);
  }
  EXPECT_EQ(code_of([&] { paired_ttest_layers(a.topRows(2), a.topRows(2)); }), ErrorCode::TooFewPairs);
}

TEST(Levene, EqualSpreadAndUnequalSpread) {
  const auto r = levene_test({{1, 2, 3, 4, 5}, {101, 102, 103, 104, 105}});
  EXPECT_NEAR(r.f, 0.0, 1e-12);
  EXPECT_EQ(r.df_between, 1);
  EXPECT_EQ(r.df_within, 8);

  const auto ga = gaussian_vector(48, 11), gb = gaussian_vector(48, 12);
  std::vector<double> a(48), b(48);
  for (std::size_t i = 0; i < 48; ++i) {
    a[i] = 10.0 * ga(static_cast<Eigen::Index>(i));
    b[i] = 100.0 * gb(static_cast<Eigen::Index>(i));
  }
  EXPECT_LT(levene_test({a, b}).p, 0.01);
  EXPECT_EQ(code_of([] { levene_test({{1, 2, 3}}); }), ErrorCode::DegenerateGroup);
  EXPECT_EQ(code_of([] { levene_test({{1, 2, 3}, {4}}); }), ErrorCode::DegenerateGroup);
}

TEST(Ks, UniformAndSkewed) {
  EXPECT_DOUBLE_EQ(ks_uniform(std::vector<double>{0.5}).d, 0.5);
  auto rng = make_rng(3, Stream::Synth);
  std::vector<double> u(500), sq(500);
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = uniform01(rng);
    sq[i] = u[i] * u[i];
  }
  EXPECT_GT(ks_uniform(u).p, 0.01);
  EXPECT_LT(ks_uniform(sq).p, 1e-6);
}

TEST(Permutation, ShuffledPlantedLagsGiveUniformP) {
  std::vector<double> layers(48);
  std::iota(layers.begin(), layers.end(), 1.0);
  std::vector<double> ps;
  for (int run = 0; run < 200; ++run) {
    auto rng = make_rng(static_cast<std::uint64_t>(run), Stream::Synth);
    std::vector<double> lags(48);
    for (std::size_t k = 0; k < 48; ++k) lags[k] = 5.0 * static_cast<double>(k + 1) + 10.0 * standard_normal(rng);
    for (std::size_t i = lags.size() - 1; i > 0; --i) std::swap(lags[i], lags[uniform_index(rng, i + 1)]);
    ps.push_back(permutation_test_layers(layers, lags, 2000, static_cast<std::uint64_t>(run), Sidedness::OneSided, 1));
  }
  EXPECT_GT(ks_uniform(ps).p, 0.01);
}
