#include "fsr/distsim.h"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace fsr {

namespace {

void require_same_shape(std::span<const ModelParams> models,
                        const ModelParams& ref) {
  for (const ModelParams& m : models) {
    if (!m.same_shape(ref)) {
      throw std::invalid_argument("worker model shapes differ");
    }
  }
}

std::uint64_t worker_seed(std::uint64_t seed, std::size_t worker) {
  return seed + 0x9E3779B97F4A7C15ULL * worker;
}

}  // namespace

void BmufConfig::validate() const {
  if (num_workers < 1) throw std::invalid_argument("num_workers must be >= 1");
  if (block_size < 1) throw std::invalid_argument("block_size must be >= 1");
  if (!(block_learning_rate > 0.0)) {
    throw std::invalid_argument("block learning rate must be > 0");
  }
  if (!(block_momentum >= 0.0 && block_momentum < 1.0)) {
    throw std::invalid_argument("block momentum must be in [0, 1)");
  }
}

BmufState BmufState::init(const ModelParams& model) {
  return {model, ModelParams::zeros(model.config())};
}

std::vector<std::vector<std::size_t>> split_shards(std::size_t n,
                                                   std::size_t k,
                                                   std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("need at least one shard");
  if (k > n) {
    throw std::invalid_argument("cannot split " + std::to_string(n) +
                                " utterances into " + std::to_string(k) +
                                " shards");
  }
  std::mt19937_64 rng(seed);
  const std::vector<std::size_t> perm = shuffled_order(n, rng);
  std::vector<std::vector<std::size_t>> shards(k);
  for (std::size_t i = 0; i < n; ++i) shards[i % k].push_back(perm[i]);
  for (auto& s : shards) std::sort(s.begin(), s.end());
  return shards;
}

ModelParams mesh_allreduce_mean(std::span<const ModelParams> workers) {
  if (workers.empty()) throw std::invalid_argument("all-reduce of no workers");
  require_same_shape(workers, workers.front());
  const std::size_t k = workers.size();

  std::vector<std::vector<std::span<const double>>> views;
  views.reserve(k);
  for (const ModelParams& w : workers) views.push_back(w.tensors());
  ModelParams out = ModelParams::zeros(workers.front().config());
  auto dst = out.tensors();

  // Flattened index space split into k chunks; worker r owns chunk r for
  // the reduce-scatter, then every chunk is gathered into `out`.
  std::vector<std::pair<std::size_t, std::size_t>> flat;  // (tensor, offset)
  for (std::size_t t = 0; t < dst.size(); ++t) {
    for (std::size_t i = 0; i < dst[t].size(); ++i) flat.emplace_back(t, i);
  }
  const std::size_t total = flat.size();
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t begin = total * r / k;
    const std::size_t end = total * (r + 1) / k;
    for (std::size_t f = begin; f < end; ++f) {
      const auto [t, i] = flat[f];
      double sum = 0.0;
      for (std::size_t w = 0; w < k; ++w) sum += views[w][t][i];
      dst[t][i] = sum / static_cast<double>(k);
    }
  }
  return out;
}

void bmuf_sync(BmufState& state, std::span<const ModelParams> workers,
               const BmufConfig& cfg) {
  require_same_shape(workers, state.global);
  const ModelParams mean = mesh_allreduce_mean(workers);
  const double eta = cfg.block_momentum;
  const double zeta = cfg.block_learning_rate;
  auto w = state.global.tensors();
  auto d = state.delta.tensors();
  const auto m = mean.tensors();
  for (std::size_t t = 0; t < w.size(); ++t) {
    for (std::size_t i = 0; i < w[t].size(); ++i) {
      const double g = m[t][i] - w[t][i];
      const double momentum_term = eta * d[t][i];
      d[t][i] = momentum_term + zeta * g;
      w[t][i] = m[t][i] + momentum_term + (zeta - 1.0) * g;
    }
  }
}

void ema_update(EmaState& state, const ModelParams& model) {
  if (!state.model.same_shape(model)) {
    throw std::invalid_argument("EMA shape mismatch");
  }
  const double a = state.decay;
  auto e = state.model.tensors();
  const auto m = model.tensors();
  for (std::size_t t = 0; t < e.size(); ++t) {
    for (std::size_t i = 0; i < e[t].size(); ++i) {
      const double lo = std::min(e[t][i], m[t][i]);
      const double hi = std::max(e[t][i], m[t][i]);
      e[t][i] = std::clamp(a * e[t][i] + (1.0 - a) * m[t][i], lo, hi);
    }
  }
}

DistributedResult train_distributed(const ModelParams& init,
                                    std::span<const AlignedUtterance> dataset,
                                    std::span<const AlignedUtterance> probe,
                                    const TrainConfig& cfg,
                                    const BmufConfig& bmuf,
                                    const EmaConfig& ema_cfg) {
  cfg.validate();
  bmuf.validate();
  if (!(ema_cfg.decay >= 0.0 && ema_cfg.decay <= 1.0)) {
    throw std::invalid_argument("EMA decay must be in [0, 1]");
  }
  if (bmuf.block_size % cfg.batch_size_utts != 0) {
    throw std::invalid_argument("block_size must be a multiple of batch size");
  }
  const std::size_t k = bmuf.num_workers;
  const auto shards = split_shards(dataset.size(), k, cfg.seed);

  struct Worker {
    std::vector<TrainingExample> examples;
    std::mt19937_64 rng;
    SgdWorker sgd;
    std::vector<std::size_t> order;
  };
  std::vector<Worker> workers;
  workers.reserve(k);
  for (std::size_t w = 0; w < k; ++w) {
    std::vector<AlignedUtterance> shard;
    for (std::size_t idx : shards[w]) shard.push_back(dataset[idx]);
    workers.push_back({prepare_examples(shard, cfg.fs),
                       std::mt19937_64(worker_seed(cfg.seed, w)),
                       SgdWorker(init.config(), cfg),
                       {}});
  }
  const std::vector<TrainingExample> probe_examples =
      prepare_examples(probe, cfg.fs);

  DistributedResult result;
  BmufState state = BmufState::init(init);
  EmaState ema{init, ema_cfg.decay};
  std::size_t block_index = 0;
  std::vector<ModelParams> local;
  std::vector<const TrainingExample*> batch;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    EpochLog elog;
    elog.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t longest = 0;
    for (Worker& w : workers) {
      w.order = shuffled_order(w.examples.size(), w.rng);
      longest = std::max(longest, w.order.size());
    }
    for (std::size_t begin = 0; begin < longest; begin += bmuf.block_size) {
      const auto block_start = std::chrono::steady_clock::now();
      local.clear();
      for (Worker& w : workers) {
        const std::size_t end = std::min(w.order.size(), begin + bmuf.block_size);
        if (begin >= end) continue;  // shard exhausted this epoch
        ModelParams params = state.global;
        for (std::size_t i = begin; i < end; i += cfg.batch_size_utts) {
          batch.clear();
          for (std::size_t j = i; j < std::min(end, i + cfg.batch_size_utts);
               ++j) {
            batch.push_back(&w.examples[w.order[j]]);
            elog.frames_processed += w.examples[w.order[j]].labels.size();
          }
          loss_sum += w.sgd.train_batch(params, batch);
        }
        local.push_back(std::move(params));
      }
      bmuf_sync(state, local, bmuf);
      ema_update(ema, state.global);

      BlockLog blog;
      blog.block_index = block_index++;
      if (!probe_examples.empty()) {
        blog.probe_loss_global = mean_frame_loss(state.global, probe_examples);
        blog.probe_loss_ema = mean_frame_loss(ema.model, probe_examples);
      }
      blog.wall_seconds = std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - block_start)
                              .count();
      result.blocks.push_back(blog);
    }
    elog.mean_loss = loss_sum / static_cast<double>(elog.frames_processed);
    elog.wall_seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - epoch_start)
                            .count();
    result.epochs.push_back(elog);
  }
  for (const Worker& w : workers) result.skipped_steps += w.sgd.skipped_steps();
  result.global = std::move(state.global);
  result.ema = std::move(ema.model);
  return result;
}

void write_block_log(const std::filesystem::path& path,
                     std::span<const BlockLog> blocks) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "block_index,probe_loss_global,probe_loss_ema,wall_seconds\n";
  out << std::setprecision(17);
  for (const BlockLog& b : blocks) {
    out << b.block_index << ',' << b.probe_loss_global << ','
        << b.probe_loss_ema << ',' << b.wall_seconds << '\n';
  }
}

}  // namespace fsr
