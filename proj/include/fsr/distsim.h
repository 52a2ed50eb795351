#pragma once

// In-process simulation of data-parallel training: K logical workers on
// disjoint shards, mesh all-reduce averaging, blockwise model-update
// filtering (BMUF) at every synchronization, and an EMA copy of the global
// model that is tracked but never fed back into training.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fsr/model.h"
#include "fsr/trainer.h"
#include "fsr/utterance.h"

namespace fsr {

struct BmufConfig {
  std::size_t num_workers = 1;
  std::size_t block_size = 16;  // utterances per worker per block
  double block_learning_rate = 1.0;
  double block_momentum = 0.9;

  void validate() const;
};

struct BmufState {
  ModelParams global;
  ModelParams delta;  // block-level momentum buffer

  static BmufState init(const ModelParams& model);
};

struct EmaConfig {
  double decay = 0.99;
};

struct EmaState {
  ModelParams model;
  double decay = 0.99;
};

// Seeded partition of [0, n) into k index lists whose sizes differ by at
// most one; each list is ascending, so k == 1 is the identity.
std::vector<std::vector<std::size_t>> split_shards(std::size_t n,
                                                   std::size_t k,
                                                   std::uint64_t seed);

// Element-wise mean via a reduce-scatter / all-gather over K equal-ish
// chunks of the flattened parameters. Sums run in worker-index order.
ModelParams mesh_allreduce_mean(std::span<const ModelParams> workers);

// G = mean(workers) - W; delta <- eta * delta + zeta * G;
// W <- W + delta, evaluated as mean + eta * delta_old + (zeta - 1) * G so
// eta = 0, zeta = 1 yields exactly the worker average.
void bmuf_sync(BmufState& state, std::span<const ModelParams> workers,
               const BmufConfig& cfg);

// ema <- decay * ema + (1 - decay) * model, clamped to the interval spanned
// by the two operands.
void ema_update(EmaState& state, const ModelParams& model);

struct BlockLog {
  std::size_t block_index = 0;
  double probe_loss_global = 0.0;
  double probe_loss_ema = 0.0;
  double wall_seconds = 0.0;
};

struct DistributedResult {
  ModelParams global;
  ModelParams ema;
  std::vector<BlockLog> blocks;
  std::vector<EpochLog> epochs;
  std::size_t skipped_steps = 0;
};

// Worker k shuffles its shard each epoch with a generator seeded from
// cfg.seed (worker 0 uses cfg.seed itself) and trains block_size utterances
// from the current global model before every synchronization. Momentum
// buffers stay local to each worker. With K = 1, eta = 0, zeta = 1 this is
// exactly train_ce. block_size must be a multiple of cfg.batch_size_utts.
DistributedResult train_distributed(const ModelParams& init,
                                    std::span<const AlignedUtterance> dataset,
                                    std::span<const AlignedUtterance> probe,
                                    const TrainConfig& cfg,
                                    const BmufConfig& bmuf,
                                    const EmaConfig& ema);

// CSV: block_index,probe_loss_global,probe_loss_ema,wall_seconds
void write_block_log(const std::filesystem::path& path,
                     std::span<const BlockLog> blocks);

}  // namespace fsr
