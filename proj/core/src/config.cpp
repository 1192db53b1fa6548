#include "lagcoder/config.hpp"

#include "lagcoder/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace lagcoder {

using nlohmann::json;

std::string_view to_string(PreprocessStage s) noexcept {
  switch (s) {
    case PreprocessStage::Despike: return "despike";
    case PreprocessStage::Car: return "car";
    case PreprocessStage::HighGamma: return "highgamma";
    case PreprocessStage::Smooth: return "smooth";
  }
  return "despike";
}

static PreprocessStage parse_stage(std::string_view text) {
  for (auto s : {PreprocessStage::Despike, PreprocessStage::Car, PreprocessStage::HighGamma,
                 PreprocessStage::Smooth}) {
    if (to_string(s) == text) return s;
  }
  fail(ErrorCode::InvalidArgument, "unknown preprocessing stage '" + std::string(text) + "'");
}

bool PreprocessConfig::has(PreprocessStage s) const {
  return std::find(stages.begin(), stages.end(), s) != stages.end();
}

void PreprocessConfig::validate() const {
  for (std::size_t i = 1; i < stages.size(); ++i) {
    require(static_cast<int>(stages[i - 1]) < static_cast<int>(stages[i]),
            ErrorCode::InvalidStageOrder,
            "preprocessing stages must follow despike -> car -> highgamma -> smooth");
  }
  require(despike_multiplier > 0, ErrorCode::InvalidArgument, "despike multiplier must be > 0");
  require(band_lo_hz > 0 && band_lo_hz < band_hi_hz, ErrorCode::InvalidArgument,
          "band_lo must be below band_hi");
  require(n_cycles >= 1, ErrorCode::InvalidArgument, "n_cycles must be >= 1");
  require(n_wavelet_freqs >= 1, ErrorCode::InvalidArgument, "need at least one wavelet frequency");
  require(line_exclusion_halfwidth_hz >= 0, ErrorCode::InvalidArgument,
          "line exclusion halfwidth must be >= 0");
  require(smooth_kernel_ms > 0, ErrorCode::InvalidArgument, "smoothing kernel must be > 0 ms");
}

std::string_view to_string(FoldScheme s) noexcept {
  return s == FoldScheme::Contiguous ? "contiguous" : "random";
}

std::string_view to_string(PcaMode m) noexcept { return m == PcaMode::Full ? "full" : "train_only"; }

FoldScheme parse_fold_scheme(std::string_view text) {
  if (text == "contiguous") return FoldScheme::Contiguous;
  if (text == "random") return FoldScheme::Random;
  fail(ErrorCode::InvalidArgument, "unknown fold scheme '" + std::string(text) + "'");
}

PcaMode parse_pca_mode(std::string_view text) {
  if (text == "full") return PcaMode::Full;
  if (text == "train_only") return PcaMode::TrainOnly;
  fail(ErrorCode::InvalidArgument, "unknown PCA mode '" + std::string(text) + "'");
}

void Config::validate() const {
  lags.validate();
  require(window_ms > 0, ErrorCode::InvalidArgument, "window_ms must be > 0");
  require(folds >= 2, ErrorCode::InvalidArgument, "folds must be >= 2");
  require(pca_components >= 1, ErrorCode::InvalidArgument, "pca_components must be >= 1");
  require(selection_n_perm >= 1 && lag_layer_n_perm >= 1 && bootstrap_n >= 1,
          ErrorCode::InvalidArgument, "iteration counts must be >= 1");
  require(selection_q > 0 && selection_q <= 1, ErrorCode::InvalidArgument,
          "selection q threshold must be in (0, 1]");
  require(!rois.empty(), ErrorCode::InvalidArgument, "ROI list is empty");
  preprocess.validate();
}

template <typename T>
static void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

Config parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("config is not valid JSON: ") + e.what());
  }
  Config cfg;
  try {
    if (j.contains("lags")) {
      const auto& l = j.at("lags");
      read_opt(l, "min_ms", cfg.lags.min_ms);
      read_opt(l, "max_ms", cfg.lags.max_ms);
      read_opt(l, "step_ms", cfg.lags.step_ms);
    }
    read_opt(j, "window_ms", cfg.window_ms);
    if (j.contains("preprocess")) {
      const auto& p = j.at("preprocess");
      auto& pc = cfg.preprocess;
      read_opt(p, "enabled", cfg.run_preprocess);
      if (p.contains("stages")) {
        pc.stages.clear();
        for (const auto& s : p.at("stages")) pc.stages.push_back(parse_stage(s.get<std::string>()));
      }
      read_opt(p, "despike_multiplier", pc.despike_multiplier);
      read_opt(p, "band_lo_hz", pc.band_lo_hz);
      read_opt(p, "band_hi_hz", pc.band_hi_hz);
      read_opt(p, "n_cycles", pc.n_cycles);
      read_opt(p, "n_wavelet_freqs", pc.n_wavelet_freqs);
      read_opt(p, "line_noise_hz", pc.line_noise_hz);
      read_opt(p, "line_exclusion_halfwidth_hz", pc.line_exclusion_halfwidth_hz);
      read_opt(p, "normalize_per_frequency", pc.normalize_per_frequency);
      read_opt(p, "smooth_kernel_ms", pc.smooth_kernel_ms);
    }
    if (j.contains("pca")) {
      read_opt(j.at("pca"), "components", cfg.pca_components);
      if (j.at("pca").contains("mode")) cfg.pca_mode = parse_pca_mode(j.at("pca").at("mode").get<std::string>());
    }
    if (j.contains("folds")) {
      read_opt(j.at("folds"), "count", cfg.folds);
      if (j.at("folds").contains("scheme"))
        cfg.fold_scheme = parse_fold_scheme(j.at("folds").at("scheme").get<std::string>());
    }
    read_opt(j, "seed", cfg.master_seed);
    read_opt(j, "embedding_set", cfg.embedding_set);
    if (j.contains("rois")) {
      cfg.rois.clear();
      for (const auto& r : j.at("rois")) cfg.rois.push_back(parse_roi(r.get<std::string>()));
    }
    if (j.contains("conditions")) {
      cfg.conditions.clear();
      for (const auto& c : j.at("conditions")) cfg.conditions.push_back(parse_condition(c.get<std::string>()));
    }
    if (j.contains("selection")) {
      const auto& s = j.at("selection");
      read_opt(s, "enabled", cfg.selection_enabled);
      read_opt(s, "static_set", cfg.static_set);
      read_opt(s, "n_perm", cfg.selection_n_perm);
      read_opt(s, "q_threshold", cfg.selection_q);
    }
    if (j.contains("stats")) {
      const auto& s = j.at("stats");
      read_opt(s, "lag_layer_n_perm", cfg.lag_layer_n_perm);
      read_opt(s, "bootstrap_n", cfg.bootstrap_n);
      if (s.contains("sided")) {
        const auto v = s.at("sided").get<std::string>();
        require(v == "one" || v == "two", ErrorCode::InvalidArgument, "stats.sided must be one|two");
        cfg.lag_layer_sided = v == "one" ? Sidedness::OneSided : Sidedness::TwoSided;
      }
    }
    read_opt(j, "plots", cfg.plots);
    read_opt(j, "threads", cfg.threads);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("config has a malformed field: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::MissingFile, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const Config& cfg) {
  json j;
  j["lags"] = {{"min_ms", cfg.lags.min_ms}, {"max_ms", cfg.lags.max_ms}, {"step_ms", cfg.lags.step_ms}};
  j["window_ms"] = cfg.window_ms;
  json stages = json::array();
  for (auto s : cfg.preprocess.stages) stages.push_back(std::string(to_string(s)));
  const auto& p = cfg.preprocess;
  j["preprocess"] = {{"enabled", cfg.run_preprocess},
                     {"stages", stages},
                     {"despike_multiplier", p.despike_multiplier},
                     {"band_lo_hz", p.band_lo_hz},
                     {"band_hi_hz", p.band_hi_hz},
                     {"n_cycles", p.n_cycles},
                     {"n_wavelet_freqs", p.n_wavelet_freqs},
                     {"line_noise_hz", p.line_noise_hz},
                     {"line_exclusion_halfwidth_hz", p.line_exclusion_halfwidth_hz},
                     {"normalize_per_frequency", p.normalize_per_frequency},
                     {"smooth_kernel_ms", p.smooth_kernel_ms}};
  j["pca"] = {{"components", cfg.pca_components}, {"mode", std::string(to_string(cfg.pca_mode))}};
  j["folds"] = {{"count", cfg.folds}, {"scheme", std::string(to_string(cfg.fold_scheme))}};
  j["seed"] = cfg.master_seed;
  j["embedding_set"] = cfg.embedding_set;
  json rois = json::array();
  for (auto r : cfg.rois) rois.push_back(std::string(to_string(r)));
  j["rois"] = rois;
  json conds = json::array();
  for (auto c : cfg.conditions) conds.push_back(std::string(to_string(c)));
  j["conditions"] = conds;
  j["selection"] = {{"enabled", cfg.selection_enabled},
                    {"static_set", cfg.static_set},
                    {"n_perm", cfg.selection_n_perm},
                    {"q_threshold", cfg.selection_q}};
  j["stats"] = {{"lag_layer_n_perm", cfg.lag_layer_n_perm},
                {"bootstrap_n", cfg.bootstrap_n},
                {"sided", cfg.lag_layer_sided == Sidedness::OneSided ? "one" : "two"}};
  j["plots"] = cfg.plots;
  j["threads"] = cfg.threads;
  return j.dump(2);
}

}  // namespace lagcoder
