#include "lagcoder/synth.hpp"

#include "fft.hpp"
#include "lagcoder/embedding_prep.hpp"
#include "lagcoder/error.hpp"
#include "lagcoder/rng.hpp"

#include <Eigen/QR>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace lagcoder {

using nlohmann::json;

namespace {

// Sub-streams of Stream::Synth.
enum : std::uint64_t { kWords = 1, kStatic, kLayers, kWeights, kNoise, kPool };

std::string_view driver_name(SynthDriver d) {
  switch (d) {
    case SynthDriver::Contextual: return "contextual";
    case SynthDriver::Static: return "static";
    case SynthDriver::None: return "none";
  }
  return "none";
}

SynthDriver parse_driver(const std::string& s) {
  if (s == "contextual") return SynthDriver::Contextual;
  if (s == "static") return SynthDriver::Static;
  if (s == "none") return SynthDriver::None;
  fail(ErrorCode::InvalidArgument, "unknown synth driver '" + s + "'");
}

MatrixD gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  MatrixD m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = standard_normal(rng);
  }
  return m;
}

void standardize_columns(MatrixD& m) {
  const Eigen::RowVectorXd mean = m.colwise().mean();
  m.rowwise() -= mean;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double sd = std::sqrt(m.col(j).squaredNorm() / static_cast<double>(m.rows()));
    if (sd > 0) m.col(j) /= sd;
  }
}

MatrixD random_rotation(Eigen::Index dim, Rng& rng) {
  const MatrixD g = gaussian(dim, dim, rng);
  Eigen::HouseholderQR<MatrixD> qr(g);
  MatrixD q = qr.householderQ() * MatrixD::Identity(dim, dim);
  // Fix column signs so the draw is Haar distributed.
  const MatrixD r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < dim; ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  return q;
}

// 1/f power above knee_hz, flat below it; unit standard deviation.
std::vector<double> pink_noise(std::size_t n, double sample_rate, double knee_hz, Rng& rng) {
  std::vector<double> white(n);
  for (auto& v : white) v = standard_normal(rng);
  if (n < 4) return white;
  const detail::RealFft fft(n);
  auto spec = fft.forward(white);
  spec[0] = 0.0;
  const double bin_hz = sample_rate / static_cast<double>(n);
  for (std::size_t k = 1; k < spec.size(); ++k) {
    spec[k] /= std::sqrt(std::max(static_cast<double>(k) * bin_hz, knee_hz));
  }
  auto out = fft.inverse(spec);
  double ss = 0;
  for (const double v : out) ss += v * v;
  const double sd = std::sqrt(ss / static_cast<double>(n));
  if (sd > 0) {
    for (auto& v : out) v /= sd;
  }
  return out;
}

}  // namespace

void SynthSpec::validate() const {
  require(!rois.empty(), ErrorCode::InvalidArgument, "synth spec has no ROIs");
  require(n_words >= 10, ErrorCode::InvalidArgument, "synth needs at least 10 words");
  require(n_layers >= 1 && dim >= 1 && static_dim >= 1 && vocab_size >= 1, ErrorCode::InvalidArgument,
          "layer count and dimensions must be positive");
  require(word_spacing_s > 2 * onset_jitter_s && onset_jitter_s >= 0, ErrorCode::InvalidArgument,
          "word spacing must exceed twice the onset jitter");
  require(kernel_ms > 0 && sample_rate > 0 && padding_s > 0, ErrorCode::InvalidArgument,
          "kernel width, sample rate and padding must be positive");
  require(white_sigma >= 0 && pink_amplitude >= 0, ErrorCode::InvalidArgument, "noise levels must be >= 0");
  require(pink_knee_hz >= 0, ErrorCode::InvalidArgument, "pink_knee_hz must be >= 0");
  require(layer_coupling >= 0 && layer_coupling <= 1 && static_coupling >= 0 && static_coupling <= 1,
          ErrorCode::InvalidArgument, "couplings must lie in [0, 1]");
  require(p_top1 >= 0 && p_top2_5 >= 0 && p_top1 + p_top2_5 <= 1, ErrorCode::InvalidArgument,
          "rank probabilities must sum to at most 1");
  require(layer_model == SynthLayerModel::Nonlinear || n_layers >= 2, ErrorCode::InvalidArgument,
          "interpolated layers need at least two layers");
  for (const auto& r : rois) {
    require(r.n_electrodes >= 0, ErrorCode::InvalidArgument, "electrode count must be >= 0");
  }
}

SynthSpec parse_synth_spec(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("synth spec is not valid JSON: ") + e.what());
  }
  SynthSpec s;
  try {
    if (j.contains("rois")) {
      s.rois.clear();
      for (const auto& r : j.at("rois")) {
        SynthRoiSpec rs;
        rs.roi = parse_roi(r.value("roi", std::string("IFG")));
        rs.n_electrodes = r.value("n_electrodes", rs.n_electrodes);
        rs.driver = parse_driver(r.value("driver", std::string("contextual")));
        rs.lag_slope_ms = r.value("lag_slope_ms", rs.lag_slope_ms);
        rs.lag_intercept_ms = r.value("lag_intercept_ms", rs.lag_intercept_ms);
        rs.gain = r.value("gain", rs.gain);
        rs.unpredictable_lag_shift_ms = r.value("unpredictable_lag_shift_ms", rs.unpredictable_lag_shift_ms);
        s.rois.push_back(rs);
      }
    }
    s.n_words = j.value("n_words", s.n_words);
    s.n_layers = j.value("n_layers", s.n_layers);
    s.dim = j.value("dim", s.dim);
    s.static_dim = j.value("static_dim", s.static_dim);
    s.vocab_size = j.value("vocab_size", s.vocab_size);
    s.word_spacing_s = j.value("word_spacing_s", s.word_spacing_s);
    s.onset_jitter_s = j.value("onset_jitter_s", s.onset_jitter_s);
    s.padding_s = j.value("padding_s", s.padding_s);
    s.kernel_ms = j.value("kernel_ms", s.kernel_ms);
    s.white_sigma = j.value("white_sigma", s.white_sigma);
    s.pink_amplitude = j.value("pink_amplitude", s.pink_amplitude);
    s.pink_knee_hz = j.value("pink_knee_hz", s.pink_knee_hz);
    s.layer_coupling = j.value("layer_coupling", s.layer_coupling);
    s.nonlinearity_gain = j.value("nonlinearity_gain", s.nonlinearity_gain);
    s.static_coupling = j.value("static_coupling", s.static_coupling);
    const auto model = j.value("layer_model", std::string("nonlinear"));
    require(model == "nonlinear" || model == "interpolated", ErrorCode::InvalidArgument,
            "layer_model must be nonlinear or interpolated");
    s.layer_model = model == "nonlinear" ? SynthLayerModel::Nonlinear : SynthLayerModel::Interpolated;
    s.interpolation_pool = j.value("interpolation_pool", s.interpolation_pool);
    const auto domain = j.value("domain", std::string("power"));
    require(domain == "power" || domain == "raw", ErrorCode::InvalidArgument, "domain must be power or raw");
    s.domain = domain == "power" ? SignalDomain::Power : SignalDomain::Raw;
    s.sample_rate = j.value("sample_rate", s.domain == SignalDomain::Raw ? 512.0 : s.sample_rate);
    s.p_top1 = j.value("p_top1", s.p_top1);
    s.p_top2_5 = j.value("p_top2_5", s.p_top2_5);
    s.contextual_set = j.value("contextual_set", s.contextual_set);
    s.static_set = j.value("static_set", s.static_set);
    s.seed = j.value("seed", s.seed);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("bad synth spec field: ") + e.what());
  }
  s.validate();
  return s;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::MissingFile, "cannot open synth spec " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_synth_spec(ss.str());
}

std::string synth_spec_to_json(const SynthSpec& s) {
  json j;
  j["rois"] = json::array();
  for (const auto& r : s.rois) {
    j["rois"].push_back({{"roi", std::string(to_string(r.roi))},
                         {"n_electrodes", r.n_electrodes},
                         {"driver", std::string(driver_name(r.driver))},
                         {"lag_slope_ms", r.lag_slope_ms},
                         {"lag_intercept_ms", r.lag_intercept_ms},
                         {"gain", r.gain},
                         {"unpredictable_lag_shift_ms", r.unpredictable_lag_shift_ms}});
  }
  j["n_words"] = s.n_words;
  j["n_layers"] = s.n_layers;
  j["dim"] = s.dim;
  j["static_dim"] = s.static_dim;
  j["vocab_size"] = s.vocab_size;
  j["word_spacing_s"] = s.word_spacing_s;
  j["onset_jitter_s"] = s.onset_jitter_s;
  j["padding_s"] = s.padding_s;
  j["kernel_ms"] = s.kernel_ms;
  j["white_sigma"] = s.white_sigma;
  j["pink_amplitude"] = s.pink_amplitude;
  j["pink_knee_hz"] = s.pink_knee_hz;
  j["layer_coupling"] = s.layer_coupling;
  j["nonlinearity_gain"] = s.nonlinearity_gain;
  j["static_coupling"] = s.static_coupling;
  j["layer_model"] = s.layer_model == SynthLayerModel::Nonlinear ? "nonlinear" : "interpolated";
  j["interpolation_pool"] = s.interpolation_pool;
  j["domain"] = s.domain == SignalDomain::Power ? "power" : "raw";
  j["sample_rate"] = s.sample_rate;
  j["p_top1"] = s.p_top1;
  j["p_top2_5"] = s.p_top2_5;
  j["contextual_set"] = s.contextual_set;
  j["static_set"] = s.static_set;
  j["seed"] = s.seed;
  return j.dump(2);
}

std::vector<std::size_t> SynthTruth::driven_electrodes() const {
  std::vector<std::size_t> out;
  for (std::size_t e = 0; e < electrodes.size(); ++e) {
    if (electrodes[e].driver != SynthDriver::None) out.push_back(e);
  }
  return out;
}

SynthResult synth_generate(const SynthSpec& spec) {
  spec.validate();
  const auto n_words = static_cast<Eigen::Index>(spec.n_words);
  const int n_layers = spec.n_layers;
  const double fs = spec.sample_rate;

  // Words: onsets on a jittered grid, Zipf vocabulary, model ranks.
  Rng word_rng = make_rng(spec.seed, Stream::Synth, kWords);
  std::vector<double> zipf(static_cast<std::size_t>(spec.vocab_size));
  double total = 0;
  for (std::size_t v = 0; v < zipf.size(); ++v) total += 1.0 / static_cast<double>(v + 1);
  double acc = 0;
  for (std::size_t v = 0; v < zipf.size(); ++v) {
    acc += 1.0 / static_cast<double>(v + 1) / total;
    zipf[v] = acc;
  }
  std::vector<WordEvent> words(static_cast<std::size_t>(n_words));
  std::vector<std::size_t> vocab_of(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    const double jitter = spec.onset_jitter_s * (2.0 * uniform01(word_rng) - 1.0);
    const double u = uniform01(word_rng);
    const auto it = std::upper_bound(zipf.begin(), zipf.end(), u);
    vocab_of[i] = std::min<std::size_t>(static_cast<std::size_t>(it - zipf.begin()), zipf.size() - 1);
    const double r = uniform01(word_rng);
    int rank;
    if (r < spec.p_top1) {
      rank = 1;
    } else if (r < spec.p_top1 + spec.p_top2_5) {
      rank = 2 + static_cast<int>(uniform_index(word_rng, 4));
    } else {
      rank = 6 + static_cast<int>(uniform_index(word_rng, 500));
    }
    words[i].index = i;
    words[i].text = "w" + std::to_string(vocab_of[i]);
    words[i].onset = spec.padding_s + static_cast<double>(i) * spec.word_spacing_s + jitter;
    words[i].top_rank = rank;
  }
  words = classify_predictability(std::move(words));

  // Static table and per-word static embeddings.
  Rng static_rng = make_rng(spec.seed, Stream::Synth, kStatic);
  const MatrixD table = gaussian(spec.vocab_size, spec.static_dim, static_rng);
  MatrixD stat(n_words, spec.static_dim);
  for (Eigen::Index i = 0; i < n_words; ++i) stat.row(i) = table.row(static_cast<Eigen::Index>(vocab_of[static_cast<std::size_t>(i)]));

  // Contextual layers: a chain of rotated, saturated, renormalised states.
  Rng layer_rng = make_rng(spec.seed, Stream::Synth, kLayers);
  const double c = spec.layer_coupling;
  const double c0 = spec.static_coupling;
  std::vector<MatrixD> chain;
  {
    MatrixD proj = stat * gaussian(spec.static_dim, spec.dim, layer_rng);
    standardize_columns(proj);
    MatrixD x = c0 * proj + std::sqrt(1.0 - c0 * c0) * gaussian(n_words, spec.dim, layer_rng);
    standardize_columns(x);
    chain.push_back(x);
    for (int k = 1; k < n_layers; ++k) {
      const MatrixD rot = random_rotation(spec.dim, layer_rng);
      MatrixD t = (spec.nonlinearity_gain * (chain.back() * rot)).array().tanh().matrix();
      standardize_columns(t);
      MatrixD next = c * t + std::sqrt(1.0 - c * c) * gaussian(n_words, spec.dim, layer_rng);
      standardize_columns(next);
      chain.push_back(std::move(next));
    }
  }

  SynthTruth truth;
  truth.spec_json = synth_spec_to_json(spec);
  EmbeddingSet contextual;
  contextual.name = spec.contextual_set;
  contextual.kind = EmbeddingKind::Contextual;
  if (spec.layer_model == SynthLayerModel::Nonlinear) {
    for (int k = 0; k < n_layers; ++k) {
      contextual.layers.push_back(chain[static_cast<std::size_t>(k)].cast<float>());
      truth.alphas.push_back(n_layers == 1 ? 0.0 : static_cast<double>(k) / (n_layers - 1));
    }
  } else {
    // Intermediate layers are a sorted random draw from the endpoint pool, so
    // the real layers are exchangeable with pseudo-layer sets drawn the same way.
    const PseudoLayerPool pool(chain.front().cast<float>(), chain.back().cast<float>(), spec.interpolation_pool);
    Rng pool_rng = make_rng(spec.seed, Stream::Synth, kPool);
    const PseudoSet pseudo = sample_pseudo_set(pool, static_cast<std::size_t>(n_layers - 2), pool_rng);
    contextual.layers = pseudo.set.layers;
    truth.alphas = pseudo.alphas;
    truth.pool_indices = pseudo.pool_indices;
  }
  std::vector<MatrixD> layers_d;
  for (const auto& l : contextual.layers) layers_d.push_back(l.cast<double>());

  EmbeddingSet static_set;
  static_set.name = spec.static_set;
  static_set.kind = EmbeddingKind::Static;
  static_set.layers.push_back(stat.cast<float>());

  // Recording geometry.
  const double duration = words.back().onset + spec.padding_s;
  const auto n_samples = static_cast<Eigen::Index>(std::ceil(duration * fs)) + 1;
  const double support_ms = 4.0 * spec.kernel_ms;
  const LagGrid grid;
  for (const auto& r : spec.rois) {
    std::vector<double> lags;
    for (int k = 0; k < n_layers; ++k) {
      const double pos = 1.0 + (n_layers - 1) * truth.alphas[static_cast<std::size_t>(k)];
      lags.push_back(r.lag_slope_ms * pos + r.lag_intercept_ms);
    }
    for (const double l : lags) {
      for (const double shift : {0.0, r.unpredictable_lag_shift_ms}) {
        const double lag = l + shift;
        require(lag >= grid.min_ms && lag <= grid.max_ms, ErrorCode::GridOverflow,
                "planted lag " + std::to_string(lag) + " ms is outside the lag grid");
        require(std::abs(lag) + support_ms < spec.padding_s * 1000.0, ErrorCode::GridOverflow,
                "planted lag " + std::to_string(lag) + " ms plus kernel support exceeds the padding");
      }
    }
    truth.planted_lags_ms.push_back(std::move(lags));
  }

  DatasetBundle bundle;
  bundle.words = words;
  bundle.signals.sample_rate = fs;
  bundle.signals.t0 = 0.0;
  int total_electrodes = 0;
  for (const auto& r : spec.rois) total_electrodes += r.n_electrodes;
  bundle.signals.samples = MatrixF::Zero(total_electrodes, n_samples);

  const double sigma_s = spec.kernel_ms / 1000.0;
  const auto half_support = static_cast<Eigen::Index>(std::ceil(4.0 * sigma_s * fs));
  auto add_bump = [&](std::vector<double>& y, double centre_s, double amp) {
    const double centre = centre_s * fs;
    const auto mid = static_cast<Eigen::Index>(std::llround(centre));
    for (Eigen::Index t = std::max<Eigen::Index>(0, mid - half_support);
         t <= std::min<Eigen::Index>(n_samples - 1, mid + half_support); ++t) {
      const double d = (static_cast<double>(t) - centre) / fs / sigma_s;
      y[static_cast<std::size_t>(t)] += amp * std::exp(-0.5 * d * d);
    }
  };

  int row = 0;
  for (std::size_t ri = 0; ri < spec.rois.size(); ++ri) {
    const auto& r = spec.rois[ri];
    for (int i = 0; i < r.n_electrodes; ++i, ++row) {
      ElectrodeMeta meta;
      char id[32];
      std::snprintf(id, sizeof id, "%s_%02d", std::string(to_string(r.roi)).c_str(), i + 1);
      meta.id = id;
      meta.roi = r.roi;
      bundle.electrodes.push_back(meta);
      truth.electrodes.push_back({meta.id, r.roi, r.driver});

      Rng wrng = make_rng(spec.seed, Stream::Synth, kWeights, static_cast<std::uint64_t>(row));
      std::vector<double> y(static_cast<std::size_t>(n_samples), 0.0);
      if (r.driver == SynthDriver::Contextual) {
        const double scale = r.gain / std::sqrt(static_cast<double>(n_layers) * spec.dim);
        for (int k = 0; k < n_layers; ++k) {
          const VectorD w = gaussian(spec.dim, 1, wrng).col(0);
          const VectorD amp = layers_d[static_cast<std::size_t>(k)] * w * scale;
          const double lag = truth.planted_lags_ms[ri][static_cast<std::size_t>(k)];
          for (Eigen::Index wd = 0; wd < n_words; ++wd) {
            const auto& word = words[static_cast<std::size_t>(wd)];
            const double shift =
                word.predictability == Predictability::Top5Unpredictable ? r.unpredictable_lag_shift_ms : 0.0;
            add_bump(y, word.onset + (lag + shift) / 1000.0, amp(wd));
          }
        }
      } else if (r.driver == SynthDriver::Static) {
        const VectorD w = gaussian(spec.static_dim, 1, wrng).col(0);
        const VectorD amp = stat * w * (r.gain / std::sqrt(static_cast<double>(spec.static_dim)));
        for (Eigen::Index wd = 0; wd < n_words; ++wd) {
          add_bump(y, words[static_cast<std::size_t>(wd)].onset + r.lag_intercept_ms / 1000.0, amp(wd));
        }
      }

      Rng nrng = make_rng(spec.seed, Stream::Synth, kNoise, static_cast<std::uint64_t>(row));
      const auto pink = pink_noise(static_cast<std::size_t>(n_samples), fs, spec.pink_knee_hz, nrng);
      auto out = bundle.signals.samples.row(row);
      for (Eigen::Index t = 0; t < n_samples; ++t) {
        const auto ts = static_cast<std::size_t>(t);
        const double white = standard_normal(nrng);
        if (spec.domain == SignalDomain::Power) {
          out(t) = static_cast<float>(y[ts] + spec.white_sigma * white + spec.pink_amplitude * pink[ts]);
        } else {
          // Broadband carrier whose power follows the planted response.
          const double power = std::exp(y[ts] + spec.pink_amplitude * pink[ts]);
          out(t) = static_cast<float>(std::max(spec.white_sigma, 1e-3) * std::sqrt(power) * white);
        }
      }
    }
  }

  bundle.embeddings.push_back(std::move(contextual));
  bundle.embeddings.push_back(std::move(static_set));
  bundle.provenance.push_back("synth:seed=" + std::to_string(spec.seed));
  if (spec.domain == SignalDomain::Power) bundle.provenance.push_back("preprocess:synthetic-power");
  bundle.validate();
  return {std::move(bundle), std::move(truth)};
}

std::string truth_to_json(const SynthTruth& truth) {
  json j;
  j["spec"] = json::parse(truth.spec_json);
  j["electrodes"] = json::array();
  for (const auto& e : truth.electrodes) {
    j["electrodes"].push_back(
        {{"id", e.id}, {"roi", std::string(to_string(e.roi))}, {"driver", std::string(driver_name(e.driver))}});
  }
  j["alphas"] = truth.alphas;
  j["planted_lags_ms"] = truth.planted_lags_ms;
  j["pool_indices"] = truth.pool_indices;
  return j.dump(2);
}

void write_synth(const SynthResult& result, const std::filesystem::path& dir) {
  write_bundle(result.bundle, dir);
  std::ofstream out(dir / "ground_truth.json");
  require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot write ground truth in " + dir.string());
  out << truth_to_json(result.truth) << '\n';
}

}  // namespace lagcoder
