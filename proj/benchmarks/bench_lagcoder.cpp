#include "lagcoder/cv_engine.hpp"
#include "lagcoder/encoding.hpp"
#include "lagcoder/lmm.hpp"
#include "lagcoder/selection.hpp"
#include "lagcoder/stats.hpp"
#include "lagcoder/synth.hpp"

#include <benchmark/benchmark.h>

#include <numeric>

using namespace lagcoder;

namespace {

const SynthResult& planted() {
  static const SynthResult s = [] {
    SynthSpec spec;
    spec.seed = 1;
    return synth_generate(spec);
  }();
  return s;
}

// Full 48-layer x 161-lag grid for the ROI's electrodes; the argument is the thread count.
void BM_EncodeCondition(benchmark::State& state) {
  const auto& s = planted();
  EncodeOptions o;
  o.threads = static_cast<int>(state.range(0));
  std::vector<std::size_t> elec(s.bundle.electrodes.size());
  std::iota(elec.begin(), elec.end(), 0);
  for (auto _ : state) {
    auto enc = encode_condition(s.bundle, s.bundle.set("contextual"), WordCondition::All, elec, o);
    benchmark::DoNotOptimize(enc.electrodes.data());
  }
  state.counters["cells/s"] = benchmark::Counter(
      static_cast<double>(elec.size() * 48 * 161) * static_cast<double>(state.iterations()), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_EncodeCondition)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

// One layer's design against all lags: the inner kernel of the grid.
void BM_CvDesignCorrelate(benchmark::State& state) {
  const auto& s = planted();
  EncodeOptions o;
  std::vector<std::size_t> elec(s.bundle.electrodes.size());
  std::iota(elec.begin(), elec.end(), 0);
  std::vector<double> onsets;
  for (const auto& w : s.bundle.words) onsets.push_back(w.onset);
  const auto y = build_responses(s.bundle.signals, onsets, elec, o.lags, o.window_ms);
  const auto folds = make_folds(onsets.size(), 10, FoldScheme::Contiguous, 0);
  const auto layer = reduce_layer(to_double(s.bundle.set("contextual").layers[20]), folds, PcaMode::Full, 50);
  const CvPlan plan(folds, y.valid);
  for (auto _ : state) {
    const CvDesign design(plan, layer);
    benchmark::DoNotOptimize(design.correlate(y).data());
  }
}
BENCHMARK(BM_CvDesignCorrelate)->Unit(benchmark::kMillisecond);

// Electrode selection cost per permutation at the acceptance scale.
void BM_SelectionPermutations(benchmark::State& state) {
  static const SynthResult s = [] {
    SynthSpec spec;
    spec.seed = 500;
    spec.n_words = 500;
    spec.n_layers = 2;
    spec.static_dim = 20;
    spec.sample_rate = 100.0;
    spec.rois = {SynthRoiSpec{Roi::IFG, 5, SynthDriver::Static, 6.0, 100.0, 1.0, 0.0},
                 SynthRoiSpec{Roi::mSTG, 15, SynthDriver::None, 6.0, 100.0, 1.0, 0.0}};
    return synth_generate(spec);
  }();
  SelectionOptions o;
  o.n_perm = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(select_electrodes(s.bundle, s.bundle.set("glove"), o).null_max.data());
  state.counters["perm/s"] =
      benchmark::Counter(static_cast<double>(o.n_perm) * static_cast<double>(state.iterations()), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_SelectionPermutations)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_PermutationTest(benchmark::State& state) {
  std::vector<double> layers(48), lags(48);
  auto rng = make_rng(1, Stream::Synth);
  for (std::size_t k = 0; k < 48; ++k) {
    layers[k] = static_cast<double>(k + 1);
    lags[k] = 6.0 * static_cast<double>(k) + 30.0 * standard_normal(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(permutation_test_layers(layers, lags, 100000, 7, Sidedness::OneSided, 1));
}
BENCHMARK(BM_PermutationTest)->Unit(benchmark::kMillisecond);

void BM_FitLmm(benchmark::State& state) {
  std::vector<LmmRow> rows;
  auto rng = make_rng(2, Stream::Synth);
  for (int g = 0; g < 20; ++g) {
    const double b1 = standard_normal(rng);
    for (int k = 1; k <= 48; ++k) rows.push_back({"e" + std::to_string(g), double(k), 100 + (5 + b1) * k + 10 * standard_normal(rng)});
  }
  for (auto _ : state) benchmark::DoNotOptimize(fit_lmm(rows).fixed_slope);
}
BENCHMARK(BM_FitLmm)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
