#include "lagcoder/pipeline.hpp"

#include "lagcoder/csv.hpp"
#include "lagcoder/parallel.hpp"
#include "lagcoder/plot.hpp"
#include "lagcoder/rng.hpp"
#include "lagcoder/signal_prep.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#ifndef LAGCODER_VERSION
#define LAGCODER_VERSION "0.0.0"
#endif

namespace lagcoder {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

StageError::StageError(std::string stage, const Error& cause)
    : Error(cause.code(), "[" + stage + "] " + std::string(cause.what()).substr(to_string(cause.code()).size() + 2)),
      stage_(std::move(stage)) {}

std::string_view lagcoder_version() noexcept { return LAGCODER_VERSION; }

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json num_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot write " + path.string());
  out << text;
}

std::string peaks_csv(const PeakLagTable& t) {
  std::string s = "layer,peak_lag_ms,peak_r\n";
  for (const auto& e : t.rows) s += std::to_string(e.layer) + ',' + std::to_string(e.peak_lag_ms) + ',' + num(e.peak_r) + '\n';
  return s;
}

class Stages {
 public:
  template <class F>
  auto run(const std::string& name, F&& f) {
    const auto start = Clock::now();
    try {
      if constexpr (std::is_void_v<decltype(f())>) {
        f();
        record(name, start);
      } else {
        auto out = f();
        record(name, start);
        return out;
      }
    } catch (const StageError&) {
      throw;
    } catch (const Error& e) {
      throw StageError(name, e);
    } catch (const std::exception& e) {
      throw StageError(name, Error(ErrorCode::IoFailure, e.what()));
    }
  }
  const json& timings() const { return timings_; }

 private:
  void record(const std::string& name, Clock::time_point start) {
    timings_.push_back({{"stage", name},
                        {"seconds", std::chrono::duration<double>(Clock::now() - start).count()}});
  }
  json timings_ = json::array();
};

json lag_layer_json(const LagLayerResult& r) {
  return {{"pearson_r", num_json(r.pearson_r)},
          {"spearman_r", num_json(r.spearman_r)},
          {"permutation_p", num_json(r.permutation_p)},
          {"n_perm", r.n_perm},
          {"degenerate", r.degenerate}};
}

json lmm_json(const LmmFit& f) {
  return {{"fixed_intercept", num_json(f.fixed_intercept)},
          {"fixed_slope", num_json(f.fixed_slope)},
          {"slope_std_error", num_json(f.slope_std_error)},
          {"slope_p", num_json(f.slope_p)},
          {"intercept_var", num_json(f.intercept_var)},
          {"slope_var", num_json(f.slope_var)},
          {"intercept_slope_cov", num_json(f.intercept_slope_cov)},
          {"residual_var", num_json(f.residual_var)},
          {"log_restricted_likelihood", num_json(f.log_restricted_likelihood)},
          {"converged", f.converged},
          {"singular", f.singular}};
}

PipelineReport run_stages(const Config& cfg, DatasetBundle bundle, const fs::path& out_dir, json inputs,
                          Stages& stages) {
  cfg.validate();
  PipelineReport report;
  report.out_dir = out_dir;
  const int threads = cfg.threads > 0 ? cfg.threads : default_thread_count();

  stages.run("preprocess", [&] {
    if (cfg.run_preprocess && !bundle.preprocessed()) {
      bundle = preprocess_bundle(bundle, cfg.preprocess, threads);
    }
  });

  bool selected_only = false;
  if (cfg.selection_enabled) {
    stages.run("select", [&] {
      const EmbeddingSet& static_set = bundle.set(cfg.static_set);
      SelectionOptions so = selection_options(cfg);
      so.threads = threads;
      so.seed = derive_seed(cfg.master_seed, Stream::PhaseRandomization);
      auto sel = select_electrodes(bundle, static_set, so);
      bundle = apply_selection(bundle, sel);
      std::string csv = "electrode,observed_max_r,p,q,selected\n";
      for (const auto& e : sel.electrodes) {
        csv += csv::escape(e.id) + ',' + num(e.observed_max_r) + ',' + num(e.p) + ',' + num(e.q) + ',' +
               (e.selected ? "1" : "0") + '\n';
      }
      write_file(out_dir / "selection.csv", csv);
      for (const auto& w : sel.warnings) report.warnings.push_back("select: " + w);
      report.selection = std::move(sel);
    });
    selected_only = true;
  }

  const EmbeddingSet& set = stages.run("reduce", [&]() -> const EmbeddingSet& {
    const EmbeddingSet& s = bundle.set(cfg.embedding_set);
    s.validate(static_cast<Eigen::Index>(bundle.words.size()));
    return s;
  });

  std::vector<std::pair<Roi, std::vector<std::size_t>>> roi_electrodes;
  std::set<std::size_t> union_set;
  for (const Roi roi : cfg.rois) {
    auto e = bundle.electrodes_in(roi, selected_only);
    if (e.empty()) {
      report.warnings.push_back("encode: no " + std::string(selected_only ? "selected " : "") + "electrodes in " +
                                std::string(to_string(roi)));
      continue;
    }
    union_set.insert(e.begin(), e.end());
    roi_electrodes.emplace_back(roi, std::move(e));
  }
  const std::vector<std::size_t> all_electrodes(union_set.begin(), union_set.end());

  EncodeOptions eo = encode_options(cfg);
  eo.threads = threads;
  eo.seed = derive_seed(cfg.master_seed, Stream::Folds);

  // condition -> electrode row -> per-electrode encoding
  std::vector<std::pair<WordCondition, ConditionEncoding>> encodings;
  stages.run("encode", [&] {
    require(!roi_electrodes.empty(), ErrorCode::EmptyRoi, "no electrodes in any configured ROI");
    for (const WordCondition c : cfg.conditions) {
      ConditionEncoding enc = encode_condition(bundle, set, c, all_electrodes, eo);
      const fs::path dir = out_dir / "encodings" / std::string(to_string(c));
      for (const auto& m : enc.electrodes) write_encoding(m, dir, m.tag);
      encodings.emplace_back(c, std::move(enc));
    }
  });

  auto electrode_matrices = [&](const ConditionEncoding& enc, const std::vector<std::size_t>& rows) {
    std::vector<EncodingMatrix> out;
    for (const std::size_t r : rows) {
      const auto it = std::find(enc.electrode_indices.begin(), enc.electrode_indices.end(), r);
      out.push_back(enc.electrodes[static_cast<std::size_t>(it - enc.electrode_indices.begin())]);
    }
    return out;
  };
  auto electrode_peaks = [](const std::vector<EncodingMatrix>& ms) {
    MatrixD peaks = MatrixD::Constant(static_cast<Eigen::Index>(ms.size()), ms.front().n_layers(),
                                      std::numeric_limits<double>::quiet_NaN());
    MatrixD maxima = peaks;
    for (std::size_t e = 0; e < ms.size(); ++e) {
      for (Eigen::Index k = 0; k < ms[e].n_layers(); ++k) {
        Eigen::Index best = -1;
        for (Eigen::Index j = 0; j < ms[e].n_lags(); ++j) {
          const double v = ms[e].values(k, j);
          if (!std::isnan(v) && (best < 0 || v > ms[e].values(k, best))) best = j;
        }
        if (best < 0) continue;
        peaks(static_cast<Eigen::Index>(e), k) = ms[e].lags_ms[static_cast<std::size_t>(best)];
        maxima(static_cast<Eigen::Index>(e), k) = ms[e].values(k, best);
      }
    }
    return std::make_pair(peaks, maxima);
  };

  json stats_json = json::array();
  json ttests = json::array();
  json levene = json::array();
  stages.run("stats", [&] {
    for (std::size_t ci = 0; ci < encodings.size(); ++ci) {
      const auto& [cond, enc] = encodings[ci];
      for (std::size_t ri = 0; ri < roi_electrodes.size(); ++ri) {
        const auto& [roi, rows] = roi_electrodes[ri];
        RoiResult rr;
        rr.roi = roi;
        rr.condition = cond;
        const auto ms = electrode_matrices(enc, rows);
        for (const auto& m : ms) rr.electrodes.push_back(m.tag);
        rr.average = average_roi(ms, std::string(to_string(roi)));
        const ScaledEncoding scaled = scale_encodings(rr.average);
        rr.dropped_layers = scaled.dropped_layers;
        rr.peaks = peak_lags(scaled.matrix);
        // Peak r is reported on the unscaled average.
        for (auto& e : rr.peaks.rows) {
          const auto col = std::find(rr.average.lags_ms.begin(), rr.average.lags_ms.end(), e.peak_lag_ms) -
                           rr.average.lags_ms.begin();
          e.peak_r = rr.average.values(e.layer - 1, col);
        }
        rr.lag_layer = lag_layer_correlation(rr.peaks, cfg.lag_layer_n_perm,
                                             derive_seed(cfg.master_seed, Stream::Permutation, ci, ri),
                                             cfg.lag_layer_sided, threads);
        const auto [peaks, maxima] = electrode_peaks(ms);
        if (ms.size() >= 2) {
          rr.bootstrap_p = bootstrap_roi_peaks(maxima, cfg.bootstrap_n,
                                               derive_seed(cfg.master_seed, Stream::Bootstrap, ci, ri), threads);
        }
        if (ms.size() >= 3) {
          std::vector<LmmRow> lmm_rows;
          for (Eigen::Index e = 0; e < peaks.rows(); ++e) {
            for (Eigen::Index k = 0; k < peaks.cols(); ++k) {
              if (!std::isnan(peaks(e, k))) {
                lmm_rows.push_back({ms[static_cast<std::size_t>(e)].tag, static_cast<double>(k + 1), peaks(e, k)});
              }
            }
          }
          try {
            rr.lmm = fit_lmm(lmm_rows);
          } catch (const Error& err) {
            report.warnings.push_back("stats: mixed model skipped for " + std::string(to_string(roi)) + "/" +
                                      std::string(to_string(cond)) + ": " + err.what());
          }
        }
        const std::string stem = std::string(to_string(cond)) + "_" + std::string(to_string(roi));
        write_encoding(rr.average, out_dir / "roi", stem);
        write_file(out_dir / "peaks" / (stem + ".csv"), peaks_csv(rr.peaks));

        json bp = json::array();
        for (Eigen::Index k = 0; k < rr.bootstrap_p.size(); ++k) bp.push_back(num_json(rr.bootstrap_p(k)));
        json entry = {{"roi", std::string(to_string(roi))},
                      {"condition", std::string(to_string(cond))},
                      {"electrodes", rr.electrodes},
                      {"lag_layer", lag_layer_json(rr.lag_layer)},
                      {"peak_lags_ms", rr.peaks.lags()},
                      {"layers", rr.peaks.layer_indices()},
                      {"dropped_layers", rr.dropped_layers},
                      {"max_layer", max_layer(rr.average)},
                      {"bootstrap_p", bp}};
        if (rr.lmm) entry["lmm"] = lmm_json(*rr.lmm);
        stats_json.push_back(entry);
        report.rois.push_back(std::move(rr));
      }
    }

    // Predictable vs unpredictable per ROI.
    const auto find = [&](WordCondition c) -> const ConditionEncoding* {
      for (const auto& [cc, enc] : encodings) {
        if (cc == c) return &enc;
      }
      return nullptr;
    };
    const auto* pred = find(WordCondition::Predictable);
    const auto* unpred = find(WordCondition::Unpredictable);
    if (pred && unpred) {
      for (const auto& [roi, rows] : roi_electrodes) {
        if (rows.size() < 3) continue;
        const auto a = electrode_peaks(electrode_matrices(*pred, rows)).first;
        const auto b = electrode_peaks(electrode_matrices(*unpred, rows)).first;
        try {
          const PairedTTest t = paired_ttest_layers(a, b);
          json p = json::array(), q = json::array(), d = json::array();
          for (Eigen::Index k = 0; k < t.p.size(); ++k) {
            p.push_back(num_json(t.p(k)));
            q.push_back(num_json(t.q(k)));
            d.push_back(num_json(t.mean_difference(k)));
          }
          ttests.push_back({{"roi", std::string(to_string(roi))}, {"mean_difference_ms", d}, {"p", p}, {"q", q}});
        } catch (const Error& err) {
          report.warnings.push_back("stats: t-test skipped for " + std::string(to_string(roi)) + ": " + err.what());
        }
      }
    }

    // Spread of peak lags across ROIs, per condition.
    for (const WordCondition c : cfg.conditions) {
      std::vector<std::vector<double>> groups;
      std::vector<std::string> names;
      for (const auto& rr : report.rois) {
        if (rr.condition != c || rr.peaks.rows.size() < 2) continue;
        groups.push_back(rr.peaks.lags());
        names.emplace_back(to_string(rr.roi));
      }
      if (groups.size() < 2) continue;
      const LeveneResult lv = levene_test(groups);
      levene.push_back({{"condition", std::string(to_string(c))},
                        {"rois", names},
                        {"f", num_json(lv.f)},
                        {"p", num_json(lv.p)},
                        {"df_between", lv.df_between},
                        {"df_within", lv.df_within}});
    }
  });

  if (cfg.plots) {
    stages.run("plots", [&] {
      const fs::path dir = out_dir / "plots";
      for (const WordCondition c : cfg.conditions) {
        PlotData panel_data;
        for (const auto& rr : report.rois) {
          if (rr.condition != c) continue;
          const std::string stem = std::string(to_string(c)) + "_" + std::string(to_string(rr.roi));
          PlotSpec spec;
          PlotData data;
          data.encoding = rr.average;
          spec.kind = PlotKind::EncodingLines;
          spec.title = stem;
          spec.output = dir / (stem + "_lines.svg");
          write_plot(spec, data);

          data.encoding = scale_encodings(rr.average).matrix;
          spec.kind = PlotKind::ScaledEncoding;
          spec.output = dir / (stem + "_scaled.svg");
          write_plot(spec, data);

          PlotData scatter;
          scatter.panels.push_back({std::string(to_string(rr.roi)), rr.peaks, rr.lag_layer.pearson_r});
          spec.kind = PlotKind::LagLayerScatter;
          spec.output = dir / (stem + "_scatter.svg");
          write_plot(spec, scatter);
          panel_data.panels.push_back(scatter.panels.front());

          PlotData bars;
          for (Eigen::Index k = 0; k < rr.average.n_layers(); ++k) {
            double best = std::numeric_limits<double>::quiet_NaN();
            for (Eigen::Index j = 0; j < rr.average.n_lags(); ++j) {
              const double v = rr.average.values(k, j);
              if (!std::isnan(v) && (std::isnan(best) || v > best)) best = v;
            }
            bars.bars.push_back(best);
            bars.marks.push_back(rr.bootstrap_p.size() > k && rr.bootstrap_p(k) < 0.01);
          }
          spec.kind = PlotKind::LayerBar;
          spec.output = dir / (stem + "_bar.svg");
          write_plot(spec, bars);
        }
        if (!panel_data.panels.empty()) {
          PlotSpec spec;
          spec.kind = PlotKind::RoiPanel;
          spec.title = std::string(to_string(c));
          spec.width = std::max(720, 320 * static_cast<int>(panel_data.panels.size()));
          spec.output = dir / (std::string(to_string(c)) + "_roi_panel.svg");
          write_plot(spec, panel_data);
        }
      }
    });
  }

  stages.run("manifest", [&] {
    json rep = {{"version", std::string(lagcoder_version())},
                {"seed", cfg.master_seed},
                {"rois", stats_json},
                {"ttests", ttests},
                {"levene", levene},
                {"warnings", report.warnings}};
    if (report.selection) {
      json sel = json::array();
      for (const auto& e : report.selection->electrodes) {
        sel.push_back({{"id", e.id},
                       {"observed_max_r", num_json(e.observed_max_r)},
                       {"p", e.p},
                       {"q", e.q},
                       {"selected", e.selected}});
      }
      rep["selection"] = {{"electrodes", sel},
                          {"null_mean", num_json(report.selection->null_mean)},
                          {"null_p95", num_json(report.selection->null_p95)},
                          {"n_perm", report.selection->n_perm}};
    }
    write_file(out_dir / "report.json", rep.dump(2) + "\n");

    json manifest = {{"tool", "lagcoder"},
                     {"version", std::string(lagcoder_version())},
                     {"config", json::parse(config_to_json(cfg))},
                     {"seed", cfg.master_seed},
                     {"threads", threads},
                     {"inputs", inputs},
                     {"timings", stages.timings()}};
    write_file(out_dir / "run_manifest.json", manifest.dump(2) + "\n");
  });
  return report;
}

}  // namespace

PipelineReport run_pipeline(const Config& cfg, const fs::path& bundle_dir, const fs::path& out_dir) {
  Stages stages;
  json inputs = json::object();
  DatasetBundle bundle = stages.run("load", [&] {
    json files = json::object();
    for (const auto& entry : fs::recursive_directory_iterator(bundle_dir)) {
      if (!entry.is_regular_file()) continue;
      char hex[9];
      std::snprintf(hex, sizeof hex, "%08x", crc32_of_file(entry.path()));
      files[fs::relative(entry.path(), bundle_dir).generic_string()] = hex;
    }
    inputs = {{"bundle", fs::absolute(bundle_dir).lexically_normal().string()}, {"crc32", files}};
    return load_bundle(bundle_dir);
  });
  return run_stages(cfg, std::move(bundle), out_dir, std::move(inputs), stages);
}

PipelineReport run_pipeline(const Config& cfg, const DatasetBundle& bundle, const fs::path& out_dir) {
  Stages stages;
  return run_stages(cfg, bundle, out_dir, json::object(), stages);
}

}  // namespace lagcoder
