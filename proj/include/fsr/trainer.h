#pragma once

// Frame-level cross-entropy training with mini-batch SGD and classical
// momentum, plus the alignment statistics (state priors and HMM self-loop
// probabilities) the hybrid decoder needs.

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "fsr/graph.h"
#include "fsr/model.h"
#include "fsr/utterance.h"

namespace fsr {

struct TrainConfig {
  double learning_rate = 0.3;
  double momentum = 0.9;
  std::size_t batch_size_utts = 4;
  int epochs = 4;
  std::uint64_t seed = 1;
  int fs = 1;
  double clip_norm = 5.0;

  void validate() const;
};

inline constexpr double kPosteriorFloor = 1e-12;

// -sum_t log posteriors(t, labels[t]). Posteriors below 1e-12 are clamped
// and counted in `clamped` when it is non-null.
double ce_loss(const RowMatrix& posteriors, std::span<const StateId> labels,
               std::size_t* clamped = nullptr);

// v <- momentum * v - lr * g; w <- w + v. Returns false (and leaves params
// and velocity untouched) if any gradient component is non-finite.
bool sgd_step(ModelParams& params, const Gradients& grads,
              ModelParams& velocity, const TrainConfig& cfg);

// Rescales grads so their global L2 norm is at most max_norm; returns the
// norm before clipping.
double clip_global_norm(Gradients& grads, double max_norm);

// Network inputs and targets after stacking (fs == 1 leaves them as is).
struct TrainingExample {
  RowMatrix inputs;
  LabelSequence labels;
};

std::vector<TrainingExample> prepare_examples(
    std::span<const AlignedUtterance> dataset, int fs);

// Fisher-Yates permutation of [0, n) drawn from rng.
std::vector<std::size_t> shuffled_order(std::size_t n, std::mt19937_64& rng);

// Applies SGD updates batch by batch and owns the momentum buffer, so the
// same optimizer state can carry across synchronization blocks.
class SgdWorker {
 public:
  SgdWorker(const ModelConfig& model_cfg, const TrainConfig& cfg);

  // One update on the summed loss of `batch`, normalized by its frame
  // count. Returns the pre-update summed loss.
  double train_batch(ModelParams& params,
                     std::span<const TrainingExample* const> batch);

  std::size_t skipped_steps() const { return skipped_; }

 private:
  TrainConfig cfg_;
  ModelParams velocity_;
  Gradients total_;  // reused batch gradient buffer
  std::size_t skipped_ = 0;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;  // per (stacked) frame
  std::size_t frames_processed = 0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  ModelParams model;
  std::vector<EpochLog> epochs;
  std::size_t skipped_steps = 0;
};

// Deterministic for a fixed cfg.seed: one utterance-level shuffle per epoch,
// batches of cfg.batch_size_utts in shuffled order.
TrainResult train_ce(const ModelParams& init,
                     std::span<const AlignedUtterance> dataset,
                     const TrainConfig& cfg);

// Mean CE per frame of `params` over the (stacked) examples.
double mean_frame_loss(const ModelParams& params,
                       std::span<const TrainingExample> examples);

// Add-one smoothed state frequencies over the labels the network is trained
// on (middle labels when fs > 1).
Vector count_priors(std::span<const AlignedUtterance> dataset,
                    std::uint32_t num_states, int fs = 1);

// Add-one smoothed self-loop probability per state from frame alignments.
// Leaving a state, including at the end of an utterance, counts as an exit.
HmmTransitions estimate_transitions(std::span<const AlignedUtterance> dataset,
                                    std::uint32_t num_states);

// CSV: epoch,mean_loss,frames_processed,wall_seconds
void write_train_log(const std::filesystem::path& path,
                     std::span<const EpochLog> epochs);

}  // namespace fsr
