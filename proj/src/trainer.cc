#include "fsr/trainer.h"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

#include "fsr/stacking.h"

namespace fsr {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("learning_rate must be > 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("momentum must be in [0, 1)");
  }
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size_utts < 1) {
    throw std::invalid_argument("batch_size_utts must be >= 1");
  }
  if (fs < 1) throw std::invalid_argument("fs must be >= 1");
}

double ce_loss(const RowMatrix& posteriors, std::span<const StateId> labels,
               std::size_t* clamped) {
  if (static_cast<std::size_t>(posteriors.rows()) != labels.size()) {
    throw std::invalid_argument("posterior rows != label count");
  }
  double loss = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] >= posteriors.cols()) {
      throw std::invalid_argument("label out of range");
    }
    double p = posteriors(static_cast<Eigen::Index>(t), labels[t]);
    if (p < kPosteriorFloor) {
      p = kPosteriorFloor;
      if (clamped != nullptr) ++*clamped;
    }
    loss -= std::log(p);
  }
  return loss;
}

bool sgd_step(ModelParams& params, const Gradients& grads,
              ModelParams& velocity, const TrainConfig& cfg) {
  if (!params.same_shape(grads) || !params.same_shape(velocity)) {
    throw std::invalid_argument("sgd_step: shape mismatch");
  }
  if (!grads.all_finite()) return false;
  auto w = params.tensors();
  auto v = velocity.tensors();
  const auto g = grads.tensors();
  for (std::size_t i = 0; i < w.size(); ++i) {
    for (std::size_t k = 0; k < w[i].size(); ++k) {
      v[i][k] = cfg.momentum * v[i][k] - cfg.learning_rate * g[i][k];
      w[i][k] += v[i][k];
    }
  }
  return true;
}

double clip_global_norm(Gradients& grads, double max_norm) {
  double sq = 0.0;
  for (auto t : grads.tensors()) {
    for (double x : t) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && std::isfinite(norm)) {
    const double scale = max_norm / norm;
    for (auto t : grads.tensors()) {
      for (double& x : t) x *= scale;
    }
  }
  return norm;
}

std::vector<TrainingExample> prepare_examples(
    std::span<const AlignedUtterance> dataset, int fs) {
  const StackConfig cfg = StackConfig::non_overlapping(fs);
  std::vector<TrainingExample> out;
  out.reserve(dataset.size());
  for (const AlignedUtterance& utt : dataset) {
    if (fs == 1) {
      if (utt.labels.size() != utt.num_frames()) {
        throw std::invalid_argument("utterance " + utt.id +
                                    ": label count != frame count");
      }
      out.push_back({utt.features, utt.labels});
    } else {
      StackedSequence s = stack_with_labels(utt.features, utt.labels, cfg);
      out.push_back({std::move(s.super_frames), std::move(s.labels)});
    }
  }
  return out;
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng() % i;
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

SgdWorker::SgdWorker(const ModelConfig& model_cfg, const TrainConfig& cfg)
    : cfg_(cfg),
      velocity_(ModelParams::zeros(model_cfg)),
      total_(ModelParams::zeros(model_cfg)) {}

double SgdWorker::train_batch(ModelParams& params,
                              std::span<const TrainingExample* const> batch) {
  if (!total_.same_shape(params)) {
    throw std::invalid_argument("model does not match the optimizer state");
  }
  Gradients& total = total_;
  total.set_zero();
  double loss_sum = 0.0;
  std::size_t frames = 0;
  for (const TrainingExample* ex : batch) {
    loss_sum += accumulate_gradients(params, ex->inputs, ex->labels, total);
    frames += ex->labels.size();
  }
  if (frames == 0) return 0.0;
  for (auto t : total.tensors()) {
    for (double& x : t) x /= static_cast<double>(frames);
  }
  clip_global_norm(total, cfg_.clip_norm);
  if (!sgd_step(params, total, velocity_, cfg_)) ++skipped_;
  return loss_sum;
}

TrainResult train_ce(const ModelParams& init,
                     std::span<const AlignedUtterance> dataset,
                     const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("empty training set");
  const std::vector<TrainingExample> examples =
      prepare_examples(dataset, cfg.fs);
  if (init.config().input_dim != examples.front().inputs.cols()) {
    throw std::invalid_argument("model input_dim does not match fs * d");
  }

  TrainResult result{init, {}, 0};
  SgdWorker worker(init.config(), cfg);
  std::mt19937_64 rng(cfg.seed);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::size_t> order = shuffled_order(examples.size(), rng);
    EpochLog log;
    log.epoch = epoch;
    double loss_sum = 0.0;
    std::vector<const TrainingExample*> batch;
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_size_utts) {
      batch.clear();
      for (std::size_t k = i; k < std::min(order.size(), i + cfg.batch_size_utts);
           ++k) {
        batch.push_back(&examples[order[k]]);
        log.frames_processed += examples[order[k]].labels.size();
      }
      loss_sum += worker.train_batch(result.model, batch);
    }
    log.mean_loss = loss_sum / static_cast<double>(log.frames_processed);
    log.wall_seconds = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
    result.epochs.push_back(log);
  }
  result.skipped_steps = worker.skipped_steps();
  return result;
}

double mean_frame_loss(const ModelParams& params,
                       std::span<const TrainingExample> examples) {
  double loss = 0.0;
  std::size_t frames = 0;
  for (const TrainingExample& ex : examples) {
    loss += ce_loss(forward_sequence(params, ex.inputs), ex.labels);
    frames += ex.labels.size();
  }
  return frames > 0 ? loss / static_cast<double>(frames) : 0.0;
}

Vector count_priors(std::span<const AlignedUtterance> dataset,
                    std::uint32_t num_states, int fs) {
  if (dataset.empty()) throw std::invalid_argument("no alignments for priors");
  const StackConfig cfg = StackConfig::non_overlapping(fs);
  Vector counts = Vector::Ones(num_states);
  double total = num_states;
  for (const AlignedUtterance& utt : dataset) {
    const LabelSequence labels =
        fs == 1 ? utt.labels : middle_label(utt.labels, cfg);
    for (StateId l : labels) {
      if (l >= num_states) throw std::invalid_argument("label out of range");
      counts(l) += 1.0;
      total += 1.0;
    }
  }
  return counts / total;
}

HmmTransitions estimate_transitions(std::span<const AlignedUtterance> dataset,
                                    std::uint32_t num_states) {
  std::vector<double> stay(num_states, 0.0), leave(num_states, 0.0);
  for (const AlignedUtterance& utt : dataset) {
    for (std::size_t t = 0; t < utt.labels.size(); ++t) {
      const StateId s = utt.labels[t];
      if (s >= num_states) throw std::invalid_argument("label out of range");
      if (t + 1 < utt.labels.size() && utt.labels[t + 1] == s) {
        stay[s] += 1.0;
      } else {
        leave[s] += 1.0;
      }
    }
  }
  HmmTransitions tr;
  tr.self_loop.resize(num_states);
  for (std::uint32_t s = 0; s < num_states; ++s) {
    tr.self_loop[s] = (stay[s] + 1.0) / (stay[s] + leave[s] + 2.0);
  }
  return tr;
}

void write_train_log(const std::filesystem::path& path,
                     std::span<const EpochLog> epochs) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,mean_loss,frames_processed,wall_seconds\n";
  out << std::setprecision(17);
  for (const EpochLog& e : epochs) {
    out << e.epoch << ',' << e.mean_loss << ',' << e.frames_processed << ','
        << e.wall_seconds << '\n';
  }
}

}  // namespace fsr
