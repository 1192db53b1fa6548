#include "lagcoder/signal_prep.hpp"

#include "fft.hpp"
#include "lagcoder/error.hpp"
#include "lagcoder/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace lagcoder {

namespace {

// Linear-interpolated sample quantile (type 7).
double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double lagrange_at(const std::vector<std::pair<double, double>>& pts, double x) {
  double result = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double term = pts[i].second;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j != i) term *= (x - pts[j].first) / (pts[i].first - pts[j].first);
    }
    result += term;
  }
  return result;
}

}  // namespace

DespikeResult despike(std::span<const double> signal, double multiplier) {
  const std::size_t n = signal.size();
  require(n >= 4, ErrorCode::InvalidArgument, "despike needs at least 4 samples");
  for (double v : signal) require(std::isfinite(v), ErrorCode::NonFiniteValue, "despike input is not finite");

  DespikeResult out{std::vector<double>(signal.begin(), signal.end()), {}};
  std::vector<double> sorted(signal.begin(), signal.end());
  std::sort(sorted.begin(), sorted.end());
  const double median = quantile_sorted(sorted, 0.5);
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  if (!(iqr > 0.0)) return out;

  const double lo = median - multiplier * iqr;
  const double hi = median + multiplier * iqr;
  std::vector<std::size_t> clean;
  clean.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (signal[i] < lo || signal[i] > hi) {
      out.spikes.push_back(i);
    } else {
      clean.push_back(i);
    }
  }
  if (out.spikes.empty()) return out;
  require(!clean.empty(), ErrorCode::AllSpikes, "every sample was flagged as a spike");

  for (std::size_t idx : out.spikes) {
    // position of the first clean sample to the right
    const auto right = std::lower_bound(clean.begin(), clean.end(), idx);
    std::vector<std::pair<double, double>> pts;
    for (auto it = right; it != clean.begin() && pts.size() < 2;) {
      --it;
      pts.emplace_back(static_cast<double>(*it), signal[*it]);
    }
    const std::size_t n_left = pts.size();
    for (auto it = right; it != clean.end() && pts.size() < n_left + 2; ++it) {
      pts.emplace_back(static_cast<double>(*it), signal[*it]);
    }
    const std::size_t n_right = pts.size() - n_left;
    if (n_left == 0 || n_right == 0) {
      // Edge run: hold the nearest clean value rather than extrapolate a cubic.
      out.signal[idx] = n_left ? pts.front().second : pts[n_left].second;
    } else {
      out.signal[idx] = lagrange_at(pts, static_cast<double>(idx));
    }
  }
  return out;
}

MatrixD common_average_reference(const MatrixD& signals) {
  require(signals.rows() >= 2, ErrorCode::TooFewElectrodes, "CAR needs at least 2 electrodes");
  const Eigen::RowVectorXd mean = signals.colwise().mean();
  return signals.rowwise() - mean;
}

std::vector<double> wavelet_frequencies(const PreprocessConfig& cfg) {
  std::vector<double> out;
  const int n = cfg.n_wavelet_freqs;
  for (int i = 0; i < n; ++i) {
    const double f = n == 1 ? std::sqrt(cfg.band_lo_hz * cfg.band_hi_hz)
                            : cfg.band_lo_hz * std::pow(cfg.band_hi_hz / cfg.band_lo_hz,
                                                        static_cast<double>(i) / (n - 1));
    bool excluded = false;
    for (double line : cfg.line_noise_hz) {
      if (std::abs(f - line) <= cfg.line_exclusion_halfwidth_hz) excluded = true;
    }
    if (!excluded) out.push_back(f);
  }
  return out;
}

std::vector<double> highgamma_power(std::span<const double> signal, double sample_rate,
                                    const PreprocessConfig& cfg) {
  using detail::Complex;
  require(sample_rate >= 2.0 * cfg.band_hi_hz, ErrorCode::NyquistViolation,
          "sample rate " + std::to_string(sample_rate) + " Hz is below twice band_hi");
  const auto freqs = wavelet_frequencies(cfg);
  require(!freqs.empty(), ErrorCode::EmptyBand, "every wavelet frequency was excluded");
  const std::size_t n = signal.size();
  std::vector<double> total(n, 0.0);
  if (n == 0) return total;

  double signal_power = 0.0;
  for (double v : signal) signal_power += v * v;
  signal_power /= static_cast<double>(n);

  const double dt = 1.0 / sample_rate;
  std::size_t max_half = 0;
  std::vector<std::size_t> halves;
  for (double f : freqs) {
    const double sigma_t = cfg.n_cycles / (2.0 * std::numbers::pi * f);
    halves.push_back(static_cast<std::size_t>(std::ceil(4.0 * sigma_t * sample_rate)));
    max_half = std::max(max_half, halves.back());
  }
  const std::size_t fft_n = detail::fast_fft_size(n + 2 * max_half);
  const detail::ComplexFft fft(fft_n);

  std::vector<Complex> padded(fft_n, Complex(0.0, 0.0));
  for (std::size_t i = 0; i < n; ++i) padded[i] = Complex(signal[i], 0.0);
  const auto signal_hat = fft.forward(padded);

  std::vector<double> power(n);
  for (std::size_t fi = 0; fi < freqs.size(); ++fi) {
    const double f = freqs[fi];
    const double sigma_t = cfg.n_cycles / (2.0 * std::numbers::pi * f);
    const std::size_t half = halves[fi];
    const std::size_t len = 2 * half + 1;

    std::vector<double> envelope(len);
    double env_sum = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      const double t = (static_cast<double>(j) - static_cast<double>(half)) * dt;
      envelope[j] = std::exp(-t * t / (2.0 * sigma_t * sigma_t));
      env_sum += envelope[j];
    }
    // Wavelet laid out for circular convolution, centred at index 0.
    std::vector<Complex> kernel(fft_n, Complex(0.0, 0.0));
    for (std::size_t j = 0; j < len; ++j) {
      const double t = (static_cast<double>(j) - static_cast<double>(half)) * dt;
      const Complex w = std::polar(envelope[j] / env_sum, 2.0 * std::numbers::pi * f * t);
      const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(half);
      kernel[static_cast<std::size_t>((pos + static_cast<std::ptrdiff_t>(fft_n)) % static_cast<std::ptrdiff_t>(fft_n))] = w;
    }
    auto prod = fft.forward(kernel);
    for (std::size_t k = 0; k < fft_n; ++k) prod[k] *= signal_hat[k];
    const auto conv = fft.inverse(prod);

    // Energy of the kernel overlapping the series at each output sample.
    std::vector<double> energy_prefix(len + 1, 0.0);
    for (std::size_t j = 0; j < len; ++j) energy_prefix[j + 1] = energy_prefix[j] + envelope[j] * envelope[j];
    const double energy_total = energy_prefix[len];

    double mean = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      // kernel offset j pairs with sample t + j - half; valid j range:
      const std::size_t j_lo = t >= half ? 0 : half - t;
      const std::size_t j_hi = std::min(len, n - t + half);  // exclusive
      const double overlap = energy_prefix[j_hi] - energy_prefix[j_lo];
      const double gain = overlap > 0 ? energy_total / overlap : 0.0;
      power[t] = std::norm(conv[t]) * gain;
      mean += power[t];
    }
    mean /= static_cast<double>(n);
    const bool normalize = cfg.normalize_per_frequency && mean > 1e-12 * signal_power && mean > 0.0;
    const double scale = normalize ? 1.0 / mean : 1.0;
    for (std::size_t t = 0; t < n; ++t) total[t] += power[t] * scale;
  }
  const double inv = 1.0 / static_cast<double>(freqs.size());
  for (auto& v : total) v *= inv;
  return total;
}

std::vector<double> hamming_smooth(std::span<const double> series, double kernel_ms, double sample_rate) {
  require(kernel_ms > 0 && sample_rate > 0, ErrorCode::InvalidArgument, "kernel and sample rate must be > 0");
  auto len = static_cast<std::size_t>(std::llround(kernel_ms * sample_rate / 1000.0));
  if (len < 1) len = 1;
  if (len % 2 == 0) ++len;
  std::vector<double> w(len, 1.0);
  if (len > 1) {
    for (std::size_t j = 0; j < len; ++j) {
      w[j] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(len - 1));
    }
  }
  double area = 0.0;
  for (double v : w) area += v;
  for (double& v : w) v /= area;

  const std::size_t n = series.size();
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(len / 2);
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0.0, weight = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(j) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
      acc += w[j] * series[static_cast<std::size_t>(src)];
      weight += w[j];
    }
    out[t] = acc / weight;
  }
  return out;
}

static std::string describe(const PreprocessConfig& cfg) {
  std::ostringstream os;
  os << "preprocess:";
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) os << (i ? "," : "") << to_string(cfg.stages[i]);
  os << ";despike_multiplier=" << cfg.despike_multiplier << ";band=" << cfg.band_lo_hz << "-"
     << cfg.band_hi_hz << ";n_cycles=" << cfg.n_cycles << ";n_freqs=" << cfg.n_wavelet_freqs
     << ";normalize=" << (cfg.normalize_per_frequency ? 1 : 0) << ";kernel_ms=" << cfg.smooth_kernel_ms;
  return os.str();
}

PreprocessResult preprocess_recording(const SignalRecording& rec, const PreprocessConfig& cfg, int threads) {
  cfg.validate();
  rec.validate();
  const auto n_elec = static_cast<std::size_t>(rec.n_electrodes());
  const auto n = static_cast<std::size_t>(rec.n_samples());
  MatrixD x = rec.samples.cast<double>();

  PreprocessResult result;
  result.spikes_per_electrode.assign(n_elec, 0);

  auto per_electrode = [&](auto&& stage) {
    parallel_for(n_elec, threads, [&](std::size_t e) {
      std::vector<double> row(n);
      for (std::size_t t = 0; t < n; ++t) row[t] = x(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(t));
      auto out = stage(e, row);
      for (std::size_t t = 0; t < n; ++t) x(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(t)) = out[t];
    });
  };

  if (cfg.has(PreprocessStage::Despike)) {
    per_electrode([&](std::size_t e, const std::vector<double>& row) {
      auto d = despike(row, cfg.despike_multiplier);
      result.spikes_per_electrode[e] = d.spikes.size();
      return std::move(d.signal);
    });
  }
  if (cfg.has(PreprocessStage::Car)) x = common_average_reference(x);
  if (cfg.has(PreprocessStage::HighGamma)) {
    per_electrode([&](std::size_t, const std::vector<double>& row) {
      return highgamma_power(row, rec.sample_rate, cfg);
    });
  }
  if (cfg.has(PreprocessStage::Smooth)) {
    per_electrode([&](std::size_t, const std::vector<double>& row) {
      return hamming_smooth(row, cfg.smooth_kernel_ms, rec.sample_rate);
    });
  }

  result.recording.samples = x.cast<float>();
  result.recording.sample_rate = rec.sample_rate;
  result.recording.t0 = rec.t0;
  result.provenance = describe(cfg);
  require(result.recording.samples.allFinite(), ErrorCode::NonFiniteValue,
          "preprocessing produced non-finite values");
  return result;
}

DatasetBundle preprocess_bundle(const DatasetBundle& bundle, const PreprocessConfig& cfg, int threads) {
  auto out = bundle;
  auto pre = preprocess_recording(bundle.signals, cfg, threads);
  out.signals = std::move(pre.recording);
  out.provenance.push_back(std::move(pre.provenance));
  return out;
}

}  // namespace lagcoder
