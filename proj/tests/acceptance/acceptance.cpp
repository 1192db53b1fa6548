// Acceptance suite on synthetic data. Prints one PASS/FAIL line per criterion.
// Usage: lagcoder_acceptance [--criterion N]

#include "lagcoder/controls.hpp"
#include "lagcoder/encoding.hpp"
#include "lagcoder/lmm.hpp"
#include "lagcoder/parallel.hpp"
#include "lagcoder/pipeline.hpp"
#include "lagcoder/selection.hpp"
#include "lagcoder/stats.hpp"
#include "lagcoder/synth.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

using namespace lagcoder;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

EncodingMatrix roi_average(const SynthResult& s, const EmbeddingSet& set, Roi roi, const EncodeOptions& o) {
  const auto elec = control_electrodes(s.bundle, roi, false);
  const auto enc = encode_condition(s.bundle, set, WordCondition::All, elec, o);
  return average_roi(enc.electrodes, std::string(to_string(roi)));
}

double fraction_within(const PeakLagTable& peaks, const std::vector<double>& planted, double tol) {
  int hits = 0;
  for (std::size_t k = 0; k < peaks.rows.size(); ++k) {
    const auto layer = static_cast<std::size_t>(peaks.rows[k].layer - 1);
    hits += std::abs(peaks.rows[k].peak_lag_ms - planted[layer]) <= tol;
  }
  return static_cast<double>(hits) / static_cast<double>(planted.size());
}

// 1. End-to-end planted recovery.
Outcome criterion1() {
  SynthSpec spec;  // IFG, 8 electrodes, L_k = 6k + 100, 1000 words, 48 layers
  spec.seed = 1;
  const auto s = synth_generate(spec);
  const lagcoder::testing::TempDir dir;
  write_synth(s, dir / "bundle");
  Config cfg;
  cfg.selection_enabled = false;
  const auto t0 = std::chrono::steady_clock::now();
  const auto report = run_pipeline(cfg, dir / "bundle", dir / "run");
  const double elapsed = seconds_since(t0);
  const RoiResult* ifg = nullptr;
  for (const auto& r : report.rois) {
    if (r.roi == Roi::IFG && r.condition == WordCondition::All) ifg = &r;
  }
  if (!ifg) return {false, "no IFG result in the report"};
  const double r = ifg->lag_layer.pearson_r;
  const double within = fraction_within(ifg->peaks, s.truth.planted_lags_ms[0], 25.0);
  const bool pass = r >= 0.95 && within >= 0.90 && ifg->peaks.rows.size() == 48 && elapsed <= 600.0;
  return {pass, "r=" + fmt("%.4f", r) + " (>=0.95), within 25 ms=" + fmt("%.2f", within) + " (>=0.90), runtime " +
                    fmt("%.1f", elapsed) + " s (<=600, threads=" + std::to_string(default_thread_count()) + ")"};
}

// 2. Null calibration.
Outcome criterion2() {
  const int runs = 50;
  double worst_p95 = 0.0;
  int p_ok = 0, p_defined = 0;
  for (int i = 0; i < runs; ++i) {
    SynthSpec spec;
    spec.seed = 1000 + static_cast<std::uint64_t>(i);
    spec.rois = {SynthRoiSpec{Roi::IFG, 10, SynthDriver::None, 6.0, 100.0, 1.0, 0.0}};
    const auto s = synth_generate(spec);
    EncodeOptions o;
    o.seed = spec.seed;
    const auto elec = control_electrodes(s.bundle, Roi::IFG, false);
    const auto enc = encode_condition(s.bundle, s.bundle.set("contextual"), WordCondition::All, elec, o);
    std::vector<double> abs_r;
    for (const auto& m : enc.electrodes) {
      for (Eigen::Index c = 0; c < m.values.size(); ++c) {
        const double v = m.values.data()[c];
        if (std::isfinite(v)) abs_r.push_back(std::abs(v));
      }
    }
    worst_p95 = std::max(worst_p95, quantile(abs_r, 0.95));
    const auto avg = average_roi(enc.electrodes, "IFG");
    const auto ll = lag_layer_correlation(peak_lags(avg), 10000, spec.seed);
    if (!ll.degenerate) ++p_defined;
    p_ok += !ll.degenerate && ll.permutation_p > 0.05;
  }
  const bool pass = worst_p95 < 0.1 && p_ok >= static_cast<int>(std::ceil(0.9 * runs));
  return {pass, "max per-run p95 |r|=" + fmt("%.4f", worst_p95) + " (<0.1); lag-layer p>0.05 in " +
                    std::to_string(p_ok) + "/" + std::to_string(runs) + " runs (>=45; " + std::to_string(p_defined) +
                    " defined)"};
}

// 3. Interpolation control discriminates.
Outcome criterion3() {
  ControlOptions o;
  o.n_iter = 200;
  o.pool_size = 1000;
  o.lag_layer_n_perm = 1000;
  SynthSpec nonlinear;
  nonlinear.seed = 1;
  SynthSpec interpolated = nonlinear;
  interpolated.layer_model = SynthLayerModel::Interpolated;
  const auto a = synth_generate(nonlinear);
  const auto ra = run_interpolation_control(a.bundle, a.bundle.set("contextual"), o);
  const auto b = synth_generate(interpolated);
  const auto rb = run_interpolation_control(b.bundle, b.bundle.set("contextual"), o);
  const bool pass = ra.p < 0.01 && rb.p > 0.05;
  return {pass, "nonlinear p=" + fmt("%.4f", ra.p) + " (<0.01, r_obs=" + fmt("%.3f", ra.observed_r) +
                    "), interpolated p=" + fmt("%.4f", rb.p) + " (>0.05, r_obs=" + fmt("%.3f", rb.observed_r) + ")"};
}

// 4. Projection-out control.
Outcome criterion4() {
  SynthSpec spec;
  spec.seed = 1;
  const auto s = synth_generate(spec);
  ControlOptions o;
  o.lag_layer_n_perm = 10000;
  const auto r = run_projection_control(s.bundle, s.bundle.set("contextual"), o);
  const bool below = std::isnan(r.max_layer_peak_after) || r.max_layer_peak_after < r.null_ceiling;
  const bool pass = below && r.lag_layer_after.pearson_r >= 0.8;
  return {pass, "max layer " + std::to_string(r.max_layer) + ": peak after=" + fmt("%.4f", r.max_layer_peak_after) +
                    " < ceiling " + fmt("%.4f", r.null_ceiling) + "; lag-layer r after=" +
                    fmt("%.4f", r.lag_layer_after.pearson_r) + " (>=0.8)"};
}

// 5. Electrode selection.
Outcome criterion5() {
  const int runs = 20;
  int exact = 0;
  std::string misses;
  for (int i = 0; i < runs; ++i) {
    SynthSpec spec;
    spec.seed = 500 + static_cast<std::uint64_t>(i);
    spec.n_words = 500;
    spec.n_layers = 2;
    spec.static_dim = 20;
    spec.sample_rate = 100.0;
    spec.rois = {SynthRoiSpec{Roi::IFG, 5, SynthDriver::Static, 6.0, 100.0, 1.0, 0.0},
                 SynthRoiSpec{Roi::mSTG, 15, SynthDriver::None, 6.0, 100.0, 1.0, 0.0}};
    const auto s = synth_generate(spec);
    SelectionOptions o;
    o.n_perm = 1000;
    o.q_threshold = 0.01;
    o.seed = spec.seed;
    const auto rep = select_electrodes(s.bundle, s.bundle.set("glove"), o);
    auto got = rep.selected_indices();
    auto want = s.truth.driven_electrodes();
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    if (got == want) {
      ++exact;
    } else {
      misses += " seed" + std::to_string(spec.seed) + ":" + std::to_string(got.size());
    }
  }
  const bool pass = exact >= 19;
  return {pass, "exact driven set in " + std::to_string(exact) + "/" + std::to_string(runs) +
                    " runs (>=19; 20 electrodes, 500 words, n_perm=1000, q<0.01)" +
                    (misses.empty() ? "" : "; misses" + misses)};
}

// 6. Statistics oracles.
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

double brute_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

Outcome criterion6() {
  std::vector<std::string> failed;
  const auto check = [&](bool ok, const std::string& what) {
    if (!ok) failed.push_back(what);
  };

  const auto q3 = fdr_bh(std::vector<double>{0.01, 0.02, 0.03});
  check(q3 == std::vector<double>(3, 0.03), "fdr3");
  // Sorted p: 0.001 0.008 0.039 0.041 0.042 0.06 0.074 0.205 0.212 0.216.
  const std::vector<double> p10{0.205, 0.001, 0.042, 0.216, 0.039, 0.074, 0.008, 0.212, 0.041, 0.06};
  const std::vector<double> q10{0.216, 0.01, 0.084, 0.216, 0.084, 0.74 / 7.0, 0.04, 0.216, 0.084, 0.1};
  const auto got10 = fdr_bh(p10);
  double fdr_err = 0;
  for (std::size_t i = 0; i < 10; ++i) fdr_err = std::max(fdr_err, std::abs(got10[i] - q10[i]));
  check(fdr_err < 1e-15, "fdr10");

  auto rng = make_rng(6, Stream::Synth);
  double corr_err = 0;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> x(60), y(60);
    for (std::size_t i = 0; i < 60; ++i) {
      x[i] = std::round(4.0 * standard_normal(rng));  // ties
      y[i] = 0.5 * x[i] + standard_normal(rng);
    }
    corr_err = std::max(corr_err, std::abs(pearson(x, y) - brute_pearson(x, y)));
    corr_err = std::max(corr_err, std::abs(spearman(x, y) - brute_pearson(brute_ranks(x), brute_ranks(y))));
  }
  check(corr_err < 1e-12, "pearson/spearman");

  std::vector<double> sig(512);
  for (auto& v : sig) v = standard_normal(rng) + 1.0;
  auto prng = make_rng(6, Stream::PhaseRandomization);
  const auto sur = phase_randomize(sig, prng);
  double fft_err = 0;
  for (std::size_t k = 0; k <= sig.size() / 2; ++k) {
    std::complex<double> a = 0, b = 0;
    for (std::size_t t = 0; t < sig.size(); ++t) {
      const auto w = std::polar(1.0, -2.0 * M_PI * static_cast<double>(k * t % sig.size()) / sig.size());
      a += sig[t] * w;
      b += sur[t] * w;
    }
    fft_err = std::max(fft_err, std::abs(std::abs(b) - std::abs(a)) / std::abs(a));
  }
  check(fft_err < 1e-6, "phase_randomize");

  std::vector<double> ga(48), gb(48);
  for (std::size_t i = 0; i < 48; ++i) {
    ga[i] = 10.0 * standard_normal(rng);
    gb[i] = 100.0 * standard_normal(rng);
  }
  const auto lev = levene_test({ga, gb});
  check(lev.p < 0.01, "levene");

  std::vector<LmmRow> rows;
  auto lrng = make_rng(7, Stream::Synth);
  for (int g = 0; g < 20; ++g) {
    const double b0 = 20.0 * standard_normal(lrng);
    const double b1 = standard_normal(lrng);
    for (int k = 1; k <= 48; ++k) {
      rows.push_back({"e" + std::to_string(g), double(k), 100.0 + b0 + (5.0 + b1) * k + 10.0 * standard_normal(lrng)});
    }
  }
  const auto fit = fit_lmm(rows);
  check(fit.fixed_slope >= 4.0 && fit.fixed_slope <= 6.0 && fit.slope_p < 0.001, "lmm");

  std::string detail = "fdr10 err=" + fmt("%.1e", fdr_err) + ", corr err=" + fmt("%.1e", corr_err) +
                       ", |FFT| rel err=" + fmt("%.1e", fft_err) + ", Levene p=" + fmt("%.2e", lev.p) +
                       ", LMM slope=" + fmt("%.3f", fit.fixed_slope) + " p=" + fmt("%.1e", fit.slope_p);
  for (const auto& f : failed) detail += "; failed " + f;
  return {failed.empty(), detail};
}

// 7. Determinism across thread counts.
std::map<std::string, std::string> numeric_outputs(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "run_manifest.json") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[fs::relative(e.path(), dir).string()] = s.str();
  }
  return out;
}

Outcome criterion7() {
  SynthSpec spec;
  spec.seed = 3;
  spec.rois = {SynthRoiSpec{Roi::IFG, 4, SynthDriver::Contextual, 6.0, 100.0, 1.0, 0.0},
               SynthRoiSpec{Roi::mSTG, 3, SynthDriver::Static, 6.0, 100.0, 1.0, 0.0}};
  const auto s = synth_generate(spec);
  const lagcoder::testing::TempDir dir;
  write_synth(s, dir / "bundle");
  Config cfg;
  // Enough permutations that p can fall below q; selection feeds the encode stage.
  cfg.selection_n_perm = 100;
  cfg.selection_q = 0.05;
  cfg.lag_layer_n_perm = 10000;
  cfg.bootstrap_n = 1000;
  cfg.threads = 1;
  run_pipeline(cfg, dir / "bundle", dir / "t1");
  cfg.threads = 4;
  run_pipeline(cfg, dir / "bundle", dir / "t4");
  const auto a = numeric_outputs(dir / "t1");
  const auto b = numeric_outputs(dir / "t4");
  std::size_t encodings = 0;
  std::string differing;
  for (const auto& [name, bytes] : a) {
    encodings += name.find(".f32") != std::string::npos;
    const auto it = b.find(name);
    if (it == b.end() || it->second != bytes) differing += " " + name;
  }
  const bool pass = a.size() == b.size() && differing.empty() && encodings > 0 && a.count("report.json");
  return {pass, std::to_string(a.size()) + " output files (" + std::to_string(encodings) +
                    " encoding matrices) compared at threads 1 vs 4" +
                    (differing.empty() ? ", all bit-identical" : "; differ:" + differing)};
}

// 8. Window-size robustness.
Outcome criterion8() {
  SynthSpec spec;
  spec.seed = 1;
  const auto s = synth_generate(spec);
  bool pass = true;
  std::string detail;
  for (const double w : {50.0, 100.0, 200.0, 300.0}) {
    EncodeOptions o;
    o.window_ms = w;
    o.seed = spec.seed;
    const auto avg = roi_average(s, s.bundle.set("contextual"), Roi::IFG, o);
    const double r = lag_layer_correlation(peak_lags(avg), 1000, spec.seed).pearson_r;
    pass = pass && r >= 0.9;
    detail += (detail.empty() ? "" : ", ") + std::to_string(static_cast<int>(w)) + " ms r=" + fmt("%.4f", r);
  }
  return {pass, detail + " (each >=0.9)"};
}

const std::vector<std::function<Outcome()>> kCriteria{criterion1, criterion2, criterion3, criterion4,
                                                      criterion5, criterion6, criterion7, criterion8};

bool run(int n) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    o = kCriteria[static_cast<std::size_t>(n - 1)]();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << o.detail << " ["
            << fmt("%.1f", seconds_since(t0)) << " s]" << std::endl;
  return o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) {
      which.push_back(std::atoi(argv[++i]));
    } else {
      std::cerr << "usage: lagcoder_acceptance [--criterion N]...\n";
      return 2;
    }
  }
  if (which.empty()) which = {1, 2, 3, 4, 5, 6, 7, 8};
  bool ok = true;
  for (const int n : which) {
    if (n < 1 || n > 8) {
      std::cerr << "criterion must be 1..8\n";
      return 2;
    }
    ok = run(n) && ok;
  }
  return ok ? 0 : 1;
}
