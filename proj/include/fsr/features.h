#pragma once

// Audio front-end: 25 ms / 10 ms framing, 26 log-mel filterbank energies,
// a 2-d pitch feature (f0, voicing) and literal first/second differences,
// giving (26 + 2) * 3 = 84 values per frame.

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fsr/types.h"
#include "fsr/wav.h"

namespace fsr {

struct FrameConfig {
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int num_mel = 26;

  int window_samples() const;
  int hop_samples() const;
  int fft_size() const;  // next power of two >= window
  // Throws std::invalid_argument unless window_ms >= hop_ms > 0, num_mel >= 1.
  void validate() const;
};

inline constexpr double kLogFloor = 1e-10;
inline constexpr int kPitchDim = 2;
inline constexpr double kMinPitchHz = 60.0;
inline constexpr double kMaxPitchHz = 400.0;
// Normalized-autocorrelation peaks below this are treated as unvoiced.
inline constexpr double kVoicingThreshold = 0.5;

using Frame = std::vector<double>;

// floor((S - W) / H) + 1 frames when S >= W, else none.
std::vector<Frame> frame_signal(const AudioBuffer& audio,
                                const FrameConfig& cfg);

// Center frequencies (Hz) of the triangular filters, HTK mel scale over
// [0, sample_rate / 2].
std::vector<double> mel_filter_edges_hz(int num_mel,
                                        double sample_rate = kSampleRate);

// Hamming window, power spectrum, triangular mel filters, log(max(E, 1e-10)).
std::vector<double> log_mel_filterbank(std::span<const double> frame,
                                       const FrameConfig& cfg);

// (f0 in Hz or 0 when unvoiced, voicing in [0, 1]).
std::array<double, 2> pitch_features(std::span<const double> frame,
                                     double sample_rate = kSampleRate);

// Row t of the result is [f_t ; f_t - f_{t-1} ; delta_t - delta_{t-1}] with
// both differences zero at t = 0.
FeatureMatrix append_differences(const RowMatrix& static_feats);

FeatureMatrix compute_features(const AudioBuffer& audio,
                               const FrameConfig& cfg = {});

inline int feature_dim(const FrameConfig& cfg) {
  return 3 * (cfg.num_mel + kPitchDim);
}

// Feature matrix file: "SDFM", u32 version, u32 rows, u32 cols, f64 row-major.
void write_feature_matrix(const std::filesystem::path& path,
                          const FeatureMatrix& m);
FeatureMatrix read_feature_matrix(const std::filesystem::path& path);

}  // namespace fsr
