#pragma once

#include "lagcoder/bundle.hpp"
#include "lagcoder/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lagcoder {

enum class SynthDriver { Contextual, Static, None };
enum class SynthLayerModel { Nonlinear, Interpolated };
enum class SignalDomain { Power, Raw };

struct SynthRoiSpec {
  Roi roi = Roi::IFG;
  int n_electrodes = 8;
  SynthDriver driver = SynthDriver::Contextual;
  double lag_slope_ms = 6.0;       // a in L_k = a k + b
  double lag_intercept_ms = 100.0; // b
  double gain = 1.0;
  double unpredictable_lag_shift_ms = 0.0;  // added to L_k for top-5-unpredictable words
};

/// Generator parameters. Lags follow L_k = a k + b for layers k = 1..n_layers;
/// under the interpolated layer model k is replaced by 1 + (n_layers - 1) alpha_k.
struct SynthSpec {
  std::vector<SynthRoiSpec> rois{SynthRoiSpec{}};
  int n_words = 1000;
  int n_layers = 48;
  int dim = 64;
  int static_dim = 50;
  int vocab_size = 400;
  double word_spacing_s = 0.3;
  double onset_jitter_s = 0.05;
  double padding_s = 3.0;
  double kernel_ms = 40.0;     // Gaussian bump sigma
  double white_sigma = 1.0;
  double pink_amplitude = 0.5;
  double pink_knee_hz = 0.5;   // pink spectrum is flat below this frequency
  double layer_coupling = 0.9;     // weight of the transformed previous layer
  double nonlinearity_gain = 1.5;  // tanh(g R x)
  double static_coupling = 0.5;    // share of layer 1 explained by the static embedding
  SynthLayerModel layer_model = SynthLayerModel::Nonlinear;
  std::size_t interpolation_pool = 1000;
  SignalDomain domain = SignalDomain::Power;
  double sample_rate = 200.0;
  double p_top1 = 0.36;
  double p_top2_5 = 0.26;
  std::string contextual_set = "contextual";
  std::string static_set = "glove";
  std::uint64_t seed = 1;

  void validate() const;
};

SynthSpec parse_synth_spec(const std::string& json_text);
SynthSpec load_synth_spec(const std::filesystem::path& path);
std::string synth_spec_to_json(const SynthSpec& spec);

struct SynthElectrodeTruth {
  std::string id;
  Roi roi = Roi::other;
  SynthDriver driver = SynthDriver::None;
};

struct SynthTruth {
  std::vector<SynthElectrodeTruth> electrodes;
  std::vector<double> alphas;  // per layer; position of each layer between the endpoints
  std::vector<std::vector<double>> planted_lags_ms;  // per ROI spec, per layer
  std::vector<std::size_t> pool_indices;             // interpolated model only
  std::string spec_json;

  std::vector<std::size_t> driven_electrodes() const;
};

struct SynthResult {
  DatasetBundle bundle;
  SynthTruth truth;
};

/// Throws GridOverflow when planted lags (plus kernel support) exceed the
/// padding or the default lag grid.
SynthResult synth_generate(const SynthSpec& spec);

std::string truth_to_json(const SynthTruth& truth);
/// Bundle plus ground_truth.json.
void write_synth(const SynthResult& result, const std::filesystem::path& dir);

}  // namespace lagcoder
