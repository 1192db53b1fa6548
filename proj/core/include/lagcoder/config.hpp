#pragma once

#include "lagcoder/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lagcoder {

enum class PreprocessStage { Despike, Car, HighGamma, Smooth };

std::string_view to_string(PreprocessStage s) noexcept;

struct PreprocessConfig {
  /// Stages to run; must be a subsequence of despike -> car -> highgamma -> smooth.
  std::vector<PreprocessStage> stages{PreprocessStage::Despike, PreprocessStage::Car,
                                      PreprocessStage::HighGamma, PreprocessStage::Smooth};
  double despike_multiplier = 4.0;  // IQR multiples around the median
  double band_lo_hz = 70.0;
  double band_hi_hz = 200.0;
  double n_cycles = 6.0;
  int n_wavelet_freqs = 16;
  std::vector<double> line_noise_hz{60.0, 120.0, 180.0};
  double line_exclusion_halfwidth_hz = 5.0;
  bool normalize_per_frequency = true;
  double smooth_kernel_ms = 50.0;

  bool has(PreprocessStage s) const;
  void validate() const;
};

enum class FoldScheme { Contiguous, Random };
enum class PcaMode { Full, TrainOnly };
enum class Sidedness { OneSided, TwoSided };

std::string_view to_string(FoldScheme s) noexcept;
std::string_view to_string(PcaMode m) noexcept;
FoldScheme parse_fold_scheme(std::string_view text);
PcaMode parse_pca_mode(std::string_view text);

struct Config {
  LagGrid lags;
  double window_ms = 200.0;
  PreprocessConfig preprocess;
  bool run_preprocess = true;  // skipped anyway when the bundle is already preprocessed

  int pca_components = 50;
  PcaMode pca_mode = PcaMode::Full;
  int folds = 10;
  FoldScheme fold_scheme = FoldScheme::Contiguous;
  std::uint64_t master_seed = 20221;

  std::string embedding_set = "contextual";
  std::vector<Roi> rois{Roi::mSTG, Roi::aSTG, Roi::IFG, Roi::TP};
  std::vector<WordCondition> conditions{WordCondition::Predictable, WordCondition::Unpredictable,
                                        WordCondition::All};

  bool selection_enabled = true;
  std::string static_set = "glove";
  int selection_n_perm = 5000;
  double selection_q = 0.01;

  int lag_layer_n_perm = 100000;
  Sidedness lag_layer_sided = Sidedness::OneSided;
  int bootstrap_n = 10000;

  bool plots = true;
  int threads = 0;  // 0: default_thread_count()

  void validate() const;
};

Config parse_config(const std::string& json_text);
Config load_config(const std::filesystem::path& path);
std::string config_to_json(const Config& cfg);

}  // namespace lagcoder
