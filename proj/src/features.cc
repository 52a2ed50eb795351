#include "fsr/features.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <unsupported/Eigen/FFT>

#include "fsr/binary_io.h"

namespace fsr {

namespace {

constexpr std::uint32_t kFeatureFileVersion = 1;

double hz_to_mel(double hz) { return 1127.0 * std::log1p(hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * std::expm1(mel / 1127.0); }

}  // namespace

int FrameConfig::window_samples() const {
  return static_cast<int>(std::lround(window_ms * kSampleRate / 1000.0));
}

int FrameConfig::hop_samples() const {
  return static_cast<int>(std::lround(hop_ms * kSampleRate / 1000.0));
}

int FrameConfig::fft_size() const {
  int n = 1;
  while (n < window_samples()) n <<= 1;
  return n;
}

void FrameConfig::validate() const {
  if (!(hop_ms > 0.0) || window_ms < hop_ms) {
    throw std::invalid_argument("frame config requires window_ms >= hop_ms > 0");
  }
  if (num_mel < 1) throw std::invalid_argument("num_mel must be >= 1");
  if (hop_samples() < 1) throw std::invalid_argument("hop shorter than a sample");
}

std::vector<Frame> frame_signal(const AudioBuffer& audio,
                                const FrameConfig& cfg) {
  if (audio.sample_rate != kSampleRate) {
    throw std::invalid_argument("expected 16000 Hz audio, got " +
                                std::to_string(audio.sample_rate) + " Hz");
  }
  cfg.validate();
  const std::size_t w = cfg.window_samples();
  const std::size_t h = cfg.hop_samples();
  const std::size_t s = audio.samples.size();
  std::vector<Frame> frames;
  if (s < w) return frames;
  const std::size_t count = (s - w) / h + 1;
  frames.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto begin = audio.samples.begin() + static_cast<long>(i * h);
    frames.emplace_back(begin, begin + static_cast<long>(w));
  }
  return frames;
}

std::vector<double> mel_filter_edges_hz(int num_mel, double sample_rate) {
  const double lo = hz_to_mel(0.0);
  const double hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(num_mel + 2);
  for (int i = 0; i < num_mel + 2; ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * i / (num_mel + 1));
  }
  return edges;
}

std::vector<double> log_mel_filterbank(std::span<const double> frame,
                                       const FrameConfig& cfg) {
  const int w = cfg.window_samples();
  if (static_cast<int>(frame.size()) != w) {
    throw std::invalid_argument("frame length does not match window");
  }
  const int n = cfg.fft_size();
  std::vector<double> buf(n, 0.0);
  for (int i = 0; i < w; ++i) {
    const double hamming =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (w - 1));
    buf[i] = frame[i] * hamming;
  }
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, buf);

  const int bins = n / 2 + 1;
  std::vector<double> power(bins);
  for (int k = 0; k < bins; ++k) power[k] = std::norm(spec[k]);

  const std::vector<double> edges = mel_filter_edges_hz(cfg.num_mel);
  std::vector<double> out(cfg.num_mel);
  for (int m = 0; m < cfg.num_mel; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    double energy = 0.0;
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * kSampleRate / n;
      double weight = 0.0;
      if (f > left && f <= center) {
        weight = (f - left) / (center - left);
      } else if (f > center && f < right) {
        weight = (right - f) / (right - center);
      }
      energy += weight * power[k];
    }
    out[m] = std::log(std::max(energy, kLogFloor));
  }
  return out;
}

std::array<double, 2> pitch_features(std::span<const double> frame,
                                     double sample_rate) {
  const int n = static_cast<int>(frame.size());
  const int min_lag = static_cast<int>(std::floor(sample_rate / kMaxPitchHz));
  const int max_lag =
      std::min(n - 1, static_cast<int>(std::ceil(sample_rate / kMinPitchHz)));
  if (min_lag >= max_lag) return {0.0, 0.0};

  double mean = 0.0;
  for (double v : frame) mean += v;
  mean /= std::max(n, 1);
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = frame[i] - mean;

  std::vector<double> r(max_lag + 1, 0.0);
  for (int lag = min_lag; lag <= max_lag; ++lag) {
    double xy = 0.0, xx = 0.0, yy = 0.0;
    for (int i = 0; i + lag < n; ++i) {
      xy += x[i] * x[i + lag];
      xx += x[i] * x[i];
      yy += x[i + lag] * x[i + lag];
    }
    const double denom = std::sqrt(xx * yy);
    r[lag] = denom > 1e-9 ? xy / denom : 0.0;
  }

  double peak = 0.0;
  for (int lag = min_lag; lag <= max_lag; ++lag) peak = std::max(peak, r[lag]);
  if (peak <= 0.0) return {0.0, 0.0};

  // Smallest lag that is a local maximum close to the global peak; avoids
  // locking onto multiples of the true period.
  int best = -1;
  for (int lag = min_lag; lag <= max_lag; ++lag) {
    const bool local_max = (lag == min_lag || r[lag] >= r[lag - 1]) &&
                           (lag == max_lag || r[lag] >= r[lag + 1]);
    if (local_max && r[lag] >= 0.9 * peak) {
      best = lag;
      break;
    }
  }
  const double voicing = std::clamp(peak, 0.0, 1.0);
  if (best < 0 || voicing < kVoicingThreshold) return {0.0, voicing};
  const double f0 = std::clamp(sample_rate / best, 0.0, kMaxPitchHz);
  return {f0, voicing};
}

FeatureMatrix append_differences(const RowMatrix& static_feats) {
  const Eigen::Index t_len = static_feats.rows();
  const Eigen::Index d = static_feats.cols();
  FeatureMatrix out(t_len, 3 * d);
  if (t_len == 0) return out;
  out.setZero();
  out.leftCols(d) = static_feats;
  for (Eigen::Index t = 1; t < t_len; ++t) {
    out.block(t, d, 1, d) = static_feats.row(t) - static_feats.row(t - 1);
    out.block(t, 2 * d, 1, d) =
        out.block(t, d, 1, d) - out.block(t - 1, d, 1, d);
  }
  return out;
}

FeatureMatrix compute_features(const AudioBuffer& audio,
                               const FrameConfig& cfg) {
  const std::vector<Frame> frames = frame_signal(audio, cfg);
  const int static_dim = cfg.num_mel + kPitchDim;
  RowMatrix feats(static_cast<Eigen::Index>(frames.size()), static_dim);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const std::vector<double> mel = log_mel_filterbank(frames[t], cfg);
    const auto pitch = pitch_features(frames[t], audio.sample_rate);
    for (int m = 0; m < cfg.num_mel; ++m) feats(t, m) = mel[m];
    feats(t, cfg.num_mel) = pitch[0];
    feats(t, cfg.num_mel + 1) = pitch[1];
  }
  return append_differences(feats);
}

void write_feature_matrix(const std::filesystem::path& path,
                          const FeatureMatrix& m) {
  std::ostringstream os;
  io::write_magic(os, "SDFM");
  io::write_u32(os, kFeatureFileVersion);
  io::write_u32(os, static_cast<std::uint32_t>(m.rows()));
  io::write_u32(os, static_cast<std::uint32_t>(m.cols()));
  io::write_f64s(os, {m.data(), static_cast<std::size_t>(m.size())});
  io::write_file(path, os.str());
}

FeatureMatrix read_feature_matrix(const std::filesystem::path& path) {
  std::istringstream is(io::read_file(path));
  io::expect_magic(is, "SDFM");
  if (io::read_u32(is) != kFeatureFileVersion) {
    throw std::runtime_error("unsupported feature file version");
  }
  const std::uint32_t rows = io::read_u32(is);
  const std::uint32_t cols = io::read_u32(is);
  FeatureMatrix m(rows, cols);
  io::read_f64s(is, {m.data(), static_cast<std::size_t>(m.size())});
  return m;
}

}  // namespace fsr
