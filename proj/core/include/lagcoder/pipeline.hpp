#pragma once

#include "lagcoder/bundle.hpp"
#include "lagcoder/config.hpp"
#include "lagcoder/encoding.hpp"
#include "lagcoder/error.hpp"
#include "lagcoder/lmm.hpp"
#include "lagcoder/selection.hpp"
#include "lagcoder/stats.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lagcoder {

/// An Error raised inside a named pipeline stage; what() reads "Code: [stage] message".
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause);
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct RoiResult {
  Roi roi = Roi::other;
  WordCondition condition = WordCondition::All;
  std::vector<std::string> electrodes;
  EncodingMatrix average;
  PeakLagTable peaks;
  LagLayerResult lag_layer;
  std::vector<int> dropped_layers;   // no positive peak, excluded from scaling
  VectorD bootstrap_p;               // per layer; empty below two electrodes
  std::optional<LmmFit> lmm;         // needs three electrodes
};

struct PipelineReport {
  std::filesystem::path out_dir;
  std::optional<SelectionReport> selection;
  std::vector<RoiResult> rois;
  std::vector<std::string> warnings;
};

/// preprocess -> select -> reduce/encode (per condition) -> stats -> plots,
/// writing everything under out_dir plus run_manifest.json. Report numerics
/// (report.json, encodings/, peaks) are separate from timings so reruns can
/// be compared byte for byte.
PipelineReport run_pipeline(const Config& cfg, const std::filesystem::path& bundle_dir,
                            const std::filesystem::path& out_dir);

/// Same, on an in-memory bundle (the manifest then records no input checksums).
PipelineReport run_pipeline(const Config& cfg, const DatasetBundle& bundle, const std::filesystem::path& out_dir);

std::string_view lagcoder_version() noexcept;

}  // namespace lagcoder
