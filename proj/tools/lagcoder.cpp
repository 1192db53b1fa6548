// lagcoder: command-line front end for the lag encoding pipeline.

#include "lagcoder/bundle.hpp"
#include "lagcoder/config.hpp"
#include "lagcoder/controls.hpp"
#include "lagcoder/csv.hpp"
#include "lagcoder/embedding_prep.hpp"
#include "lagcoder/encoding.hpp"
#include "lagcoder/error.hpp"
#include "lagcoder/lmm.hpp"
#include "lagcoder/pipeline.hpp"
#include "lagcoder/plot.hpp"
#include "lagcoder/rng.hpp"
#include "lagcoder/selection.hpp"
#include "lagcoder/signal_prep.hpp"
#include "lagcoder/stats.hpp"
#include "lagcoder/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lagcoder;

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json num_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot write " + path.string());
  out << text;
}

// Options shared by several subcommands; values left unset keep the config's.
struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int threads = 0;

  Config config() const {
    Config cfg = config_path.empty() ? Config{} : load_config(config_path);
    if (seed) cfg.master_seed = *seed;
    if (threads > 0) cfg.threads = threads;
    return cfg;
  }
};

void add_common(CLI::App* app, Common& c, bool with_seed) {
  app->add_option("--config", c.config_path, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--threads", c.threads, "worker threads (default: LAGCODER_THREADS or all cores)");
  if (with_seed) app->add_option("--seed", c.seed, "master seed");
}

std::vector<std::size_t> roi_rows(const DatasetBundle& b, const std::string& roi, bool selected_only) {
  if (roi.empty()) {
    std::vector<std::size_t> all(b.electrodes.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  return control_electrodes(b, parse_roi(roi), selected_only);
}

// Peaks located on the scaled matrix, reported with the unscaled r.
PeakLagTable roi_peaks(const EncodingMatrix& avg) {
  PeakLagTable t = peak_lags(scale_encodings(avg).matrix);
  for (auto& e : t.rows) {
    const auto lag = std::find(avg.lags_ms.begin(), avg.lags_ms.end(), e.peak_lag_ms) - avg.lags_ms.begin();
    const auto row = avg.layers.empty() ? e.layer - 1
                                        : std::find(avg.layers.begin(), avg.layers.end(), e.layer) - avg.layers.begin();
    e.peak_r = avg.values(row, lag);
  }
  return t;
}

std::string peaks_csv(const PeakLagTable& t) {
  std::string s = "layer,peak_lag_ms,peak_r\n";
  for (const auto& e : t.rows) s += std::to_string(e.layer) + ',' + std::to_string(e.peak_lag_ms) + ',' + num(e.peak_r) + '\n';
  return s;
}

// Rows of a peak CSV with columns electrode, layer, peak_lag_ms (and optionally a group column).
struct PeakRow {
  std::string electrode;
  std::string group;
  int layer = 0;
  double lag = 0;
};

std::vector<PeakRow> read_peak_rows(const fs::path& path, const std::string& group_col = "") {
  const auto rows = csv::read_file(path);
  require(!rows.empty(), ErrorCode::InvalidArgument, path.string() + " is empty");
  const auto& h = rows.front();
  const auto ce = csv::column(h, "electrode");
  const auto cl = csv::column(h, "layer");
  const auto cp = csv::column(h, "peak_lag_ms");
  const std::size_t cg = group_col.empty() ? 0 : csv::column(h, group_col);
  std::vector<PeakRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() == 1 && r[0].empty()) continue;
    require(r.size() == h.size(), ErrorCode::ShapeMismatch, path.string() + ": ragged row " + std::to_string(i + 1));
    PeakRow p;
    p.electrode = r[ce];
    p.layer = std::stoi(r[cl]);
    p.lag = std::stod(r[cp]);
    if (!group_col.empty()) p.group = r[cg];
    out.push_back(p);
  }
  return out;
}

MatrixD peak_matrix(const std::vector<PeakRow>& rows, std::vector<std::string>& electrodes, int& n_layers) {
  std::map<std::string, std::size_t> index;
  n_layers = 0;
  for (const auto& r : rows) {
    if (index.try_emplace(r.electrode, index.size()).second) electrodes.push_back(r.electrode);
    n_layers = std::max(n_layers, r.layer);
  }
  MatrixD m = MatrixD::Constant(static_cast<Eigen::Index>(index.size()), n_layers,
                                std::numeric_limits<double>::quiet_NaN());
  for (const auto& r : rows) m(static_cast<Eigen::Index>(index[r.electrode]), r.layer - 1) = r.lag;
  return m;
}

json lag_layer_json(const LagLayerResult& r) {
  return {{"pearson_r", num_json(r.pearson_r)},
          {"spearman_r", num_json(r.spearman_r)},
          {"permutation_p", num_json(r.permutation_p)},
          {"n_perm", r.n_perm},
          {"degenerate", r.degenerate},
          {"peak_lags_ms", r.peak_lags},
          {"layers", r.layer_indices}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layer-wise lagged encoding of neural recordings"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(lagcoder_version()));
  std::string stage = "cli";

  // ---------------------------------------------------------------- preprocess
  Common pre_c;
  std::string pre_bundle, pre_out, pre_stages;
  auto* pre = app.add_subcommand("preprocess", "despike, re-reference, extract high-gamma power, smooth");
  add_common(pre, pre_c, false);
  pre->add_option("--bundle", pre_bundle, "input bundle directory")->required();
  pre->add_option("--out", pre_out, "output bundle directory")->required();
  pre->add_option("--stages", pre_stages, "comma-separated subsequence of despike,car,highgamma,smooth");
  pre->callback([&] {
    stage = "preprocess";
    Config cfg = pre_c.config();
    if (!pre_stages.empty()) {
      json j = json::parse(config_to_json(cfg));
      json stages = json::array();
      std::stringstream ss(pre_stages);
      for (std::string s; std::getline(ss, s, ',');) stages.push_back(s);
      j["preprocess"]["stages"] = stages;
      cfg = parse_config(j.dump());
    }
    const auto bundle = load_bundle(pre_bundle);
    const auto out = preprocess_bundle(bundle, cfg.preprocess, cfg.threads);
    write_bundle(out, pre_out);
    std::cerr << "preprocess: wrote " << pre_out << " (" << out.provenance.back() << ")\n";
  });

  // ---------------------------------------------------------------- reduce
  Common red_c;
  std::string red_bundle, red_out, red_set, red_condition = "all";
  auto* red = app.add_subcommand("reduce", "per-layer PCA of an embedding set");
  add_common(red, red_c, true);
  red->add_option("--bundle", red_bundle)->required();
  red->add_option("--out", red_out)->required();
  red->add_option("--set", red_set, "embedding set (default: config embedding_set)");
  red->add_option("--condition", red_condition, "predictable|unpredictable|all");
  std::optional<int> red_components, red_folds;
  std::string red_mode, red_scheme;
  red->add_option("--components", red_components, "principal components per layer");
  red->add_option("--pca-mode,--mode", red_mode, "full|train_only");
  red->add_option("--fold-scheme", red_scheme, "contiguous|random");
  red->add_option("--folds", red_folds, "cross-validation folds (train_only mode)");
  red->callback([&] {
    stage = "reduce";
    Config cfg = red_c.config();
    if (red_components) cfg.pca_components = *red_components;
    if (red_folds) cfg.folds = *red_folds;
    if (!red_mode.empty()) cfg.pca_mode = parse_pca_mode(red_mode);
    if (!red_scheme.empty()) cfg.fold_scheme = parse_fold_scheme(red_scheme);
    cfg.validate();
    const auto bundle = load_bundle(red_bundle);
    const auto& set = bundle.set(red_set.empty() ? cfg.embedding_set : red_set);
    const auto rows = words_in(bundle.words, parse_condition(red_condition));
    const auto folds = make_folds(rows.size(), cfg.folds, cfg.fold_scheme, derive_seed(cfg.master_seed, Stream::Folds));
    const int n_comp = static_cast<int>(std::min<Eigen::Index>(cfg.pca_components, set.dim()));
    const auto reduced = reduce_layers(set, rows, folds, cfg.pca_mode, n_comp, cfg.threads);
    fs::create_directories(red_out);
    json manifest = {{"source", set.name},
                     {"mode", std::string(to_string(cfg.pca_mode))},
                     {"condition", red_condition},
                     {"n_words", rows.size()},
                     {"n_components", n_comp},
                     {"n_layers", reduced.layers.size()},
                     {"fold_of_word", folds.fold_of_word}};
    for (std::size_t k = 0; k < reduced.layers.size(); ++k) {
      const auto& per_fold = reduced.layers[k].per_fold;
      for (std::size_t f = 0; f < per_fold.size(); ++f) {
        const MatrixF m = per_fold[f].cast<float>();
        std::string name = layer_file_name(static_cast<int>(k) + 1, static_cast<int>(reduced.layers.size()));
        if (per_fold.size() > 1) name.insert(name.size() - 4, "_fold" + std::to_string(f));
        write_f32(fs::path(red_out) / name, m.data(), static_cast<std::size_t>(m.size()));
      }
    }
    write_text(fs::path(red_out) / "reduced.json", manifest.dump(2) + "\n");
  });

  // ---------------------------------------------------------------- encode
  Common enc_c;
  std::string enc_bundle, enc_out, enc_roi, enc_set, enc_condition = "all";
  std::optional<double> enc_window;
  bool enc_selected = false;
  auto* enc = app.add_subcommand("encode", "cross-validated lag x layer encoding");
  add_common(enc, enc_c, true);
  enc->add_option("--bundle", enc_bundle)->required();
  enc->add_option("--out", enc_out)->required();
  enc->add_option("--condition", enc_condition, "predictable|unpredictable|all");
  enc->add_option("--roi", enc_roi, "restrict to one ROI (mSTG, aSTG, IFG, TP, other)");
  enc->add_option("--set", enc_set, "embedding set (default: config embedding_set)");
  enc->add_option("--window-ms", enc_window, "averaging window");
  enc->add_flag("--selected-only", enc_selected, "only electrodes marked selected in the bundle");
  enc->callback([&] {
    stage = "encode";
    Config cfg = enc_c.config();
    if (enc_window) cfg.window_ms = *enc_window;
    const auto bundle = load_bundle(enc_bundle);
    const auto& set = bundle.set(enc_set.empty() ? cfg.embedding_set : enc_set);
    const auto electrodes = roi_rows(bundle, enc_roi, enc_selected);
    EncodeOptions eo = encode_options(cfg);
    eo.seed = derive_seed(cfg.master_seed, Stream::Folds);
    const auto cond = parse_condition(enc_condition);
    const auto result = encode_condition(bundle, set, cond, electrodes, eo);
    const fs::path out(enc_out);
    std::string rows_csv = "electrode,roi,layer,peak_lag_ms,peak_r\n";
    for (std::size_t i = 0; i < result.electrodes.size(); ++i) {
      const auto& m = result.electrodes[i];
      write_encoding(m, out / "electrodes", m.tag);
      const auto roi = to_string(bundle.electrodes[result.electrode_indices[i]].roi);
      for (const auto& e : peak_lags(m).rows) {
        rows_csv += csv::escape(m.tag) + ',' + std::string(roi) + ',' + std::to_string(e.layer) + ',' +
                    std::to_string(e.peak_lag_ms) + ',' + num(e.peak_r) + '\n';
      }
    }
    write_text(out / "electrode_peaks.csv", rows_csv);
    const std::string tag = enc_roi.empty() ? "all" : enc_roi;
    const auto avg = average_roi(result.electrodes, tag);
    write_encoding(avg, out, "roi_" + tag);
    write_text(out / ("peaks_" + tag + ".csv"), peaks_csv(roi_peaks(avg)));
    std::cerr << "encode: " << result.electrodes.size() << " electrodes, " << result.word_rows.size() << " words, "
              << set.layer_count() << " layers x " << avg.n_lags() << " lags\n";
  });

  // ---------------------------------------------------------------- stats
  auto* stats = app.add_subcommand("stats", "inferential statistics");
  stats->require_subcommand(1);

  std::string ll_dir, ll_out;
  int ll_perm = 100000;
  bool ll_two = false;
  Common ll_c;
  auto* ll = stats->add_subcommand("lag-layer", "layer index vs peak lag correlation with a permutation test");
  add_common(ll, ll_c, true);
  ll->add_option("--encodings", ll_dir, "directory of .f32 encodings (ROI averages)")->required();
  ll->add_option("--n-perm", ll_perm, "permutations");
  ll->add_flag("--two-sided", ll_two, "compare |r| instead of r");
  ll->add_option("--out", ll_out, "output directory (default: the encodings directory)");
  ll->callback([&] {
    stage = "stats";
    const Config cfg = ll_c.config();
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(ll_dir)) {
      if (e.path().extension() == ".f32") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    require(!files.empty(), ErrorCode::MissingFile, "no .f32 encodings in " + ll_dir);
    std::string table = "encoding,pearson_r,spearman_r,permutation_p\n";
    json j = json::object();
    for (std::size_t i = 0; i < files.size(); ++i) {
      const auto m = read_encoding(files[i]);
      const auto peaks = roi_peaks(m);
      const auto r = lag_layer_correlation(peaks, ll_perm, derive_seed(cfg.master_seed, Stream::Permutation, i),
                                           ll_two ? Sidedness::TwoSided : Sidedness::OneSided, cfg.threads);
      const auto stem = files[i].stem().string();
      table += csv::escape(stem) + ',' + num(r.pearson_r) + ',' + num(r.spearman_r) + ',' + num(r.permutation_p) + '\n';
      j[stem] = lag_layer_json(r);
    }
    const fs::path out = ll_out.empty() ? fs::path(ll_dir) : fs::path(ll_out);
    write_text(out / "lag_layer.csv", table);
    write_text(out / "lag_layer.json", j.dump(2) + "\n");
    std::cout << table;
  });

  std::string sel_bundle, sel_out, sel_static;
  std::optional<int> sel_perm;
  std::optional<double> sel_q;
  Common sel_c;
  auto* sel = stats->add_subcommand("select", "electrode selection against a phase-randomised max null");
  add_common(sel, sel_c, true);
  sel->add_option("--bundle", sel_bundle)->required();
  sel->add_option("--static-set", sel_static, "static embedding set (default: config static_set)");
  sel->add_option("--n-perm", sel_perm, "permutations");
  sel->add_option("--q", sel_q, "FDR threshold");
  sel->add_option("--out", sel_out, "output directory")->required();
  sel->callback([&] {
    stage = "select";
    Config cfg = sel_c.config();
    if (sel_perm) cfg.selection_n_perm = *sel_perm;
    if (sel_q) cfg.selection_q = *sel_q;
    const auto bundle = load_bundle(sel_bundle);
    auto so = selection_options(cfg);
    so.seed = derive_seed(cfg.master_seed, Stream::PhaseRandomization);
    const auto report = select_electrodes(bundle, bundle.set(sel_static.empty() ? cfg.static_set : sel_static), so);
    std::string table = "electrode,observed_max_r,p,q,selected\n";
    json rows = json::array();
    for (const auto& e : report.electrodes) {
      table += csv::escape(e.id) + ',' + num(e.observed_max_r) + ',' + num(e.p) + ',' + num(e.q) + ',' +
               (e.selected ? "1" : "0") + '\n';
      rows.push_back({{"id", e.id}, {"observed_max_r", num_json(e.observed_max_r)}, {"p", e.p}, {"q", e.q},
                      {"selected", e.selected}});
    }
    for (const auto& w : report.warnings) std::cerr << "select: warning: " << w << '\n';
    write_text(fs::path(sel_out) / "selection.csv", table);
    write_text(fs::path(sel_out) / "selection.json",
               json{{"electrodes", rows}, {"null_mean", report.null_mean}, {"null_p95", report.null_p95},
                    {"n_perm", report.n_perm}, {"q_threshold", report.q_threshold}}
                       .dump(2) + "\n");
    std::cout << table;
  });

  std::string lmm_peaks, lmm_out;
  auto* lmm = stats->add_subcommand("lmm", "peak_lag ~ 1 + layer + (1 + layer | electrode) by REML");
  lmm->add_option("--peaks", lmm_peaks, "CSV with electrode,layer,peak_lag_ms")->required()->check(CLI::ExistingFile);
  lmm->add_option("--out", lmm_out, "JSON output file (default: stdout)");
  lmm->callback([&] {
    stage = "stats";
    std::vector<LmmRow> rows;
    for (const auto& p : read_peak_rows(lmm_peaks)) rows.push_back({p.electrode, double(p.layer), p.lag});
    const auto f = fit_lmm(rows);
    const json j = {{"fixed_intercept", num_json(f.fixed_intercept)},
                    {"fixed_slope", num_json(f.fixed_slope)},
                    {"slope_std_error", num_json(f.slope_std_error)},
                    {"slope_z", num_json(f.slope_z)},
                    {"slope_p", num_json(f.slope_p)},
                    {"intercept_var", num_json(f.intercept_var)},
                    {"slope_var", num_json(f.slope_var)},
                    {"intercept_slope_cov", num_json(f.intercept_slope_cov)},
                    {"residual_var", num_json(f.residual_var)},
                    {"log_restricted_likelihood", num_json(f.log_restricted_likelihood)},
                    {"converged", f.converged},
                    {"singular", f.singular},
                    {"n_groups", f.n_groups},
                    {"n_obs", f.n_obs}};
    if (!f.converged) std::cerr << "stats: warning: REML optimisation did not converge\n";
    if (lmm_out.empty()) {
      std::cout << j.dump(2) << '\n';
    } else {
      write_text(lmm_out, j.dump(2) + "\n");
    }
  });

  std::string lev_peaks, lev_group = "roi";
  auto* lev = stats->add_subcommand("levene", "Levene's test on peak-lag spread across groups");
  lev->add_option("--peaks", lev_peaks, "CSV with electrode,layer,peak_lag_ms and the group column")
      ->required()
      ->check(CLI::ExistingFile);
  lev->add_option("--group-by", lev_group, "group column");
  lev->callback([&] {
    stage = "stats";
    std::map<std::string, std::vector<double>> groups;
    for (const auto& p : read_peak_rows(lev_peaks, lev_group)) groups[p.group].push_back(p.lag);
    std::vector<std::vector<double>> g;
    json names = json::array();
    for (auto& [k, v] : groups) {
      names.push_back(k);
      g.push_back(v);
    }
    const auto r = levene_test(g);
    std::cout << json{{"groups", names}, {"f", num_json(r.f)}, {"p", num_json(r.p)},
                      {"df_between", r.df_between}, {"df_within", r.df_within}}
                     .dump(2)
              << '\n';
  });

  std::string tt_pred, tt_unpred, tt_out;
  auto* tt = stats->add_subcommand("ttest", "per-layer paired t-test, predictable vs unpredictable");
  tt->add_option("--pred", tt_pred)->required()->check(CLI::ExistingFile);
  tt->add_option("--unpred", tt_unpred)->required()->check(CLI::ExistingFile);
  tt->add_option("--out", tt_out, "CSV output (default: stdout)");
  tt->callback([&] {
    stage = "stats";
    std::vector<std::string> ea, eb;
    int la = 0, lb = 0;
    const MatrixD a = peak_matrix(read_peak_rows(tt_pred), ea, la);
    const MatrixD b = peak_matrix(read_peak_rows(tt_unpred), eb, lb);
    require(ea == eb && la == lb, ErrorCode::ShapeMismatch, "predictable and unpredictable tables differ in electrodes or layers");
    const auto r = paired_ttest_layers(a, b);
    std::string table = "layer,mean_difference_ms,t,n_pairs,p,q\n";
    for (Eigen::Index k = 0; k < r.p.size(); ++k) {
      table += std::to_string(k + 1) + ',' + num(r.mean_difference(k)) + ',' + num(r.t(k)) + ',' +
               std::to_string(r.n_pairs(k)) + ',' + num(r.p(k)) + ',' + num(r.q(k)) + '\n';
    }
    if (tt_out.empty()) {
      std::cout << table;
    } else {
      write_text(tt_out, table);
    }
  });

  // ---------------------------------------------------------------- control
  auto* control = app.add_subcommand("control", "control analyses");
  control->require_subcommand(1);
  std::string ct_bundle, ct_roi = "IFG", ct_condition = "all", ct_set, ct_out;
  int ct_iters = 200;
  std::size_t ct_pool = 1000;
  bool ct_selected = false;
  Common ct_c;
  auto add_control_opts = [&](CLI::App* c) {
    add_common(c, ct_c, true);
    c->add_option("--bundle", ct_bundle)->required();
    c->add_option("--roi", ct_roi);
    c->add_option("--condition", ct_condition);
    c->add_option("--set", ct_set, "embedding set (default: config embedding_set)");
    c->add_flag("--selected-only", ct_selected);
    c->add_option("--out", ct_out, "JSON output file (default: stdout)");
  };
  auto control_setup = [&](const Config& cfg) {
    ControlOptions o = control_options(cfg);
    o.encode.seed = derive_seed(cfg.master_seed, Stream::Folds);
    o.roi = parse_roi(ct_roi);
    o.condition = parse_condition(ct_condition);
    o.selected_only = ct_selected;
    o.n_iter = ct_iters;
    o.pool_size = ct_pool;
    return o;
  };
  auto emit = [&](const json& j) {
    if (ct_out.empty()) {
      std::cout << j.dump(2) << '\n';
    } else {
      write_text(ct_out, j.dump(2) + "\n");
    }
  };

  auto* interp = control->add_subcommand("interpolate", "pseudo-layer interpolation control");
  add_control_opts(interp);
  interp->add_option("--iters", ct_iters, "iterations");
  interp->add_option("--pool-size", ct_pool, "interpolation grid size");
  interp->callback([&] {
    stage = "control";
    const Config cfg = ct_c.config();
    const auto bundle = load_bundle(ct_bundle);
    ControlOptions o = control_setup(cfg);
    o.encode.seed = derive_seed(cfg.master_seed, Stream::Folds);
    const auto& set = bundle.set(ct_set.empty() ? cfg.embedding_set : ct_set);
    auto interp_opts = o;
    const auto r = run_interpolation_control(bundle, set, interp_opts);
    json nulls = json::array();
    for (const double v : r.null_r) nulls.push_back(num_json(v));
    emit({{"observed_r", num_json(r.observed_r)}, {"p", num_json(r.p)}, {"n_iter", r.n_iter},
          {"pool_size", r.pool_size}, {"observed_peak_lags_ms", r.observed_peak_lags}, {"null_r", nulls}});
  });

  auto* proj = control->add_subcommand("project-out", "remove the max layer's direction from every layer");
  add_control_opts(proj);
  proj->callback([&] {
    stage = "control";
    const Config cfg = ct_c.config();
    const auto bundle = load_bundle(ct_bundle);
    const ControlOptions o = control_setup(cfg);
    const auto& set = bundle.set(ct_set.empty() ? cfg.embedding_set : ct_set);
    const auto r = run_projection_control(bundle, set, o);
    emit({{"max_layer", r.max_layer},
          {"max_layer_peak_after", num_json(r.max_layer_peak_after)},
          {"null_ceiling", num_json(r.null_ceiling)},
          {"below_ceiling", std::isnan(r.max_layer_peak_after) || r.max_layer_peak_after < r.null_ceiling},
          {"zero_norm_words", r.zero_norm_words},
          {"lag_layer_after", lag_layer_json(r.lag_layer_after)}});
  });

  // ---------------------------------------------------------------- synth
  std::string syn_spec, syn_out;
  std::optional<std::uint64_t> syn_seed;
  auto* syn = app.add_subcommand("synth", "generate a planted synthetic bundle");
  syn->add_option("--spec", syn_spec, "JSON synth spec (default: built-in)")->check(CLI::ExistingFile);
  syn->add_option("--out", syn_out)->required();
  syn->add_option("--seed", syn_seed, "override the spec seed");
  syn->callback([&] {
    stage = "synth";
    SynthSpec spec = syn_spec.empty() ? SynthSpec{} : load_synth_spec(syn_spec);
    if (syn_seed) spec.seed = *syn_seed;
    const auto result = synth_generate(spec);
    write_synth(result, syn_out);
    std::cerr << "synth: " << result.bundle.electrodes.size() << " electrodes, " << result.bundle.words.size()
              << " words, " << result.bundle.signals.n_samples() << " samples\n";
  });

  // ---------------------------------------------------------------- plot
  std::string pl_kind = "encoding_lines", pl_encoding, pl_out, pl_title;
  std::vector<std::string> pl_peaks;
  auto* pl = app.add_subcommand("plot", "render an SVG figure");
  pl->add_option("--kind", pl_kind, "encoding_lines|scaled_encoding|lag_layer_scatter|layer_bar|roi_panel");
  pl->add_option("--encoding", pl_encoding, ".f32 encoding (lines, scaled, bar)");
  pl->add_option("--peaks", pl_peaks, "peak CSV(s) with layer,peak_lag_ms,peak_r (scatter, roi_panel)");
  pl->add_option("--title", pl_title);
  pl->add_option("--out", pl_out)->required();
  pl->callback([&] {
    stage = "plot";
    PlotSpec spec;
    spec.kind = parse_plot_kind(pl_kind);
    spec.title = pl_title;
    spec.output = pl_out;
    PlotData data;
    if (!pl_encoding.empty()) {
      auto m = read_encoding(pl_encoding);
      if (spec.kind == PlotKind::ScaledEncoding) m = scale_encodings(m).matrix;
      if (spec.kind == PlotKind::LayerBar) {
        for (Eigen::Index k = 0; k < m.n_layers(); ++k) {
          double best = std::numeric_limits<double>::quiet_NaN();
          for (Eigen::Index j = 0; j < m.n_lags(); ++j) {
            if (!std::isnan(m.values(k, j)) && (std::isnan(best) || m.values(k, j) > best)) best = m.values(k, j);
          }
          data.bars.push_back(best);
        }
      }
      data.encoding = std::move(m);
    }
    for (const auto& path : pl_peaks) {
      const auto rows = csv::read_file(path);
      require(!rows.empty(), ErrorCode::InvalidArgument, path + " is empty");
      PlotPanel panel;
      panel.label = fs::path(path).stem().string();
      const auto cl = csv::column(rows[0], "layer");
      const auto cp = csv::column(rows[0], "peak_lag_ms");
      const auto cr = csv::column(rows[0], "peak_r");
      for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() < rows[0].size()) continue;
        panel.peaks.rows.push_back({std::stoi(rows[i][cl]), std::stoi(rows[i][cp]), std::stod(rows[i][cr])});
      }
      panel.r = pearson(panel.peaks.layer_indices(), panel.peaks.lags());
      data.panels.push_back(std::move(panel));
    }
    write_plot(spec, data);
  });

  // ---------------------------------------------------------------- run
  Common run_c;
  std::string run_bundle, run_out;
  auto* run = app.add_subcommand("run", "full pipeline: preprocess, select, encode, stats, plots");
  add_common(run, run_c, true);
  run->add_option("--bundle", run_bundle)->required();
  run->add_option("--out", run_out)->required();
  run->callback([&] {
    stage = "run";
    const Config cfg = run_c.config();
    const auto report = run_pipeline(cfg, run_bundle, run_out);
    for (const auto& w : report.warnings) std::cerr << "run: warning: " << w << '\n';
    for (const auto& r : report.rois) {
      std::cout << to_string(r.condition) << ' ' << to_string(r.roi) << " r=" << num(r.lag_layer.pearson_r)
                << " p=" << num(r.lag_layer.permutation_p) << '\n';
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const StageError& e) {
    std::cerr << "lagcoder: [" << e.stage() << "] " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "lagcoder: [" << stage << "] " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "lagcoder: [" << stage << "] " << e.what() << '\n';
    return 1;
  }
  return 0;
}
