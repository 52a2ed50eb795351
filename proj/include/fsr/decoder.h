#pragma once

// Hybrid HMM decoding with frame retaining. Features are stacked into super
// frames, each super frame goes through the network once, and its scaled
// log-likelihood vector is reused for `fr` consecutive decoder steps. The
// decoding graph is the per-frame graph regardless of fs and fr.

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fsr/graph.h"
#include "fsr/model.h"
#include "fsr/types.h"

namespace fsr {

inline constexpr double kUnlimitedBeam = std::numeric_limits<double>::infinity();
inline constexpr double kFrameShiftSeconds = 0.010;

struct DecodeConfig {
  int fs = 1;
  int fr = 1;
  double acoustic_scale = 1.0;
  double beam = kUnlimitedBeam;

  void validate() const;
};

// Super-frame index feeding each decoder step:
// step t -> floor(t / fr) for t < min(M * fr, num_frames).
std::vector<std::uint32_t> retained_indices(std::size_t num_super_frames,
                                            int fr, std::size_t num_frames);

// Per-step posterior rows built from `super_posteriors` by the mapping above.
RowMatrix retained_posteriors(const RowMatrix& super_posteriors, int fr,
                              std::size_t num_frames);

// acoustic_scale * (log posterior[state] - log prior[state]); posteriors are
// floored at 1e-12. The p(x) term is constant per step and dropped.
double emission_score(std::span<const double> posterior, const Vector& prior,
                      StateId state, double acoustic_scale);

// Emission scores for every state of one posterior vector.
Vector emission_scores(std::span<const double> posterior, const Vector& prior,
                       double acoustic_scale);

struct SearchResult {
  WordSequence words;
  double score = -std::numeric_limits<double>::infinity();  // log domain
  std::vector<std::uint32_t> arc_path;
  bool failed = true;  // no final node reachable after the last step
};

// Token-passing Viterbi. Step t consumes row step_rows[t] of `loglik`
// (rows x num_hmm_states) on one emitting arc per path, then expands
// epsilon arcs. Path score = sum(emission - arc weight) - final weight.
// Equal scores keep the token from the lower (node id, arc id).
SearchResult viterbi_search(const DecodingGraph& graph, const RowMatrix& loglik,
                            std::span<const std::uint32_t> step_rows,
                            double beam = kUnlimitedBeam);

struct DecodeResult {
  WordSequence words;
  double log_score = -std::numeric_limits<double>::infinity();
  std::size_t num_forward_passes = 0;
  std::size_t num_steps = 0;
  double decode_wall_seconds = 0.0;
  double audio_seconds = 0.0;
  bool failed = true;
  std::vector<std::uint32_t> arc_path;
  // Super-frame index used at each decoder step.
  std::vector<std::uint32_t> step_source;
};

// Stacks with fs (tail padding), runs ceil(T / fs) forward passes, retains
// each output for fr steps (truncated at T) and searches the graph.
// model.input_dim must equal fs * d.
DecodeResult decode(const FeatureMatrix& features, const ModelParams& model,
                    const Vector& priors, const DecodingGraph& graph,
                    const DecodeConfig& cfg);

// Levenshtein distance (substitutions + deletions + insertions).
std::size_t edit_distance(std::span<const WordId> ref,
                          std::span<const WordId> hyp);
// distance / max(1, |ref|).
double error_rate(std::span<const WordId> ref, std::span<const WordId> hyp);

// decode / audio; 0 when decode time is 0. Throws unless audio_seconds > 0.
double rtf(double decode_wall_seconds, double audio_seconds);

}  // namespace fsr
