#include "fsr/decoder.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "fsr/stacking.h"

namespace fsr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct TraceLink {
  std::uint32_t arc;
  std::int64_t prev;
};

// Tokens that arrived during the current step, before epsilon expansion.
struct Frontier {
  std::vector<double> score;
  std::vector<std::int64_t> prev_link;
  std::vector<std::int32_t> arc;  // -1: no arc (initial token)

  explicit Frontier(std::size_t n)
      : score(n, kNegInf), prev_link(n, -1), arc(n, -1) {}

  void clear() { std::fill(score.begin(), score.end(), kNegInf); }

  void relax(std::uint32_t node, double cand, std::int64_t prev,
             std::uint32_t arc_id) {
    if (cand > score[node]) {
      score[node] = cand;
      prev_link[node] = prev;
      arc[node] = static_cast<std::int32_t>(arc_id);
    }
  }
};

// Materializes the trace link of every token in epsilon order and relaxes
// its epsilon arcs. Afterwards `links[n]` is the trace head of node n.
void expand_epsilon(const DecodingGraph& graph, Frontier& f,
                    std::vector<TraceLink>& trace,
                    std::vector<std::int64_t>& links) {
  const auto& arcs = graph.arcs();
  for (std::uint32_t n : graph.epsilon_order()) {
    if (f.score[n] == kNegInf) continue;
    if (f.arc[n] >= 0) {
      trace.push_back({static_cast<std::uint32_t>(f.arc[n]), f.prev_link[n]});
      links[n] = static_cast<std::int64_t>(trace.size()) - 1;
    } else {
      links[n] = f.prev_link[n];
    }
    for (std::uint32_t id : graph.epsilon_out(n)) {
      const Arc& a = arcs[id];
      f.relax(a.dst, f.score[n] - a.weight, links[n], id);
    }
  }
}

}  // namespace

void DecodeConfig::validate() const {
  if (fs < 1 || fr < 1) throw std::invalid_argument("fs and fr must be >= 1");
  if (!(acoustic_scale > 0.0)) {
    throw std::invalid_argument("acoustic_scale must be > 0");
  }
  if (!(beam > 0.0)) throw std::invalid_argument("beam must be > 0");
}

std::vector<std::uint32_t> retained_indices(std::size_t num_super_frames,
                                            int fr, std::size_t num_frames) {
  if (fr < 1) throw std::invalid_argument("fr must be >= 1");
  const std::size_t steps =
      std::min(num_super_frames * static_cast<std::size_t>(fr), num_frames);
  std::vector<std::uint32_t> idx(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    idx[t] = static_cast<std::uint32_t>(t / static_cast<std::size_t>(fr));
  }
  return idx;
}

RowMatrix retained_posteriors(const RowMatrix& super_posteriors, int fr,
                              std::size_t num_frames) {
  const auto idx = retained_indices(
      static_cast<std::size_t>(super_posteriors.rows()), fr, num_frames);
  RowMatrix out(static_cast<Eigen::Index>(idx.size()), super_posteriors.cols());
  for (std::size_t t = 0; t < idx.size(); ++t) {
    out.row(static_cast<Eigen::Index>(t)) = super_posteriors.row(idx[t]);
  }
  return out;
}

double emission_score(std::span<const double> posterior, const Vector& prior,
                      StateId state, double acoustic_scale) {
  const double p = std::max(posterior[state], 1e-12);
  return acoustic_scale * (std::log(p) - std::log(prior(state)));
}

Vector emission_scores(std::span<const double> posterior, const Vector& prior,
                       double acoustic_scale) {
  if (static_cast<Eigen::Index>(posterior.size()) != prior.size()) {
    throw std::invalid_argument("posterior and prior sizes differ");
  }
  Vector out(prior.size());
  for (Eigen::Index s = 0; s < prior.size(); ++s) {
    out(s) = emission_score(posterior, prior, static_cast<StateId>(s),
                            acoustic_scale);
  }
  return out;
}

SearchResult viterbi_search(const DecodingGraph& graph, const RowMatrix& loglik,
                            std::span<const std::uint32_t> step_rows,
                            double beam) {
  if (loglik.cols() < graph.num_hmm_states()) {
    throw std::invalid_argument("emission table narrower than HMM state set");
  }
  const std::uint32_t num_nodes = graph.num_nodes();
  const auto& arcs = graph.arcs();
  std::vector<TraceLink> trace;
  std::vector<double> score(num_nodes, kNegInf);
  std::vector<std::int64_t> links(num_nodes, -1);
  Frontier next(num_nodes);

  next.score[graph.start()] = 0.0;
  expand_epsilon(graph, next, trace, links);
  score = next.score;

  for (std::uint32_t row : step_rows) {
    if (row >= loglik.rows()) throw std::out_of_range("emission row index");
    const double* ll = loglik.row(row).data();
    next.clear();
    for (std::uint32_t n = 0; n < num_nodes; ++n) {
      if (score[n] == kNegInf) continue;
      for (std::uint32_t id : graph.emitting_out(n)) {
        const Arc& a = arcs[id];
        next.relax(a.dst, score[n] - a.weight + ll[a.ilabel], links[n], id);
      }
    }
    expand_epsilon(graph, next, trace, links);
    score = next.score;
    if (beam != kUnlimitedBeam) {
      const double best = *std::max_element(score.begin(), score.end());
      for (double& s : score) {
        if (s < best - beam) s = kNegInf;
      }
    }
  }

  SearchResult result;
  std::int64_t best_node = -1;
  for (std::uint32_t n = 0; n < num_nodes; ++n) {
    if (score[n] == kNegInf || !graph.is_final(n)) continue;
    const double total = score[n] - graph.final_weights()[n];
    if (total > result.score) {
      result.score = total;
      best_node = n;
    }
  }
  if (best_node < 0) return result;
  result.failed = false;
  for (std::int64_t l = links[best_node]; l >= 0; l = trace[l].prev) {
    result.arc_path.push_back(trace[l].arc);
  }
  std::reverse(result.arc_path.begin(), result.arc_path.end());
  for (std::uint32_t id : result.arc_path) {
    if (arcs[id].olabel != kEpsilon) {
      result.words.push_back(static_cast<WordId>(arcs[id].olabel));
    }
  }
  return result;
}

DecodeResult decode(const FeatureMatrix& features, const ModelParams& model,
                    const Vector& priors, const DecodingGraph& graph,
                    const DecodeConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::size_t num_frames = static_cast<std::size_t>(features.rows());
  if (model.config().input_dim != cfg.fs * features.cols()) {
    throw std::invalid_argument("model input_dim != fs * feature dim");
  }
  if (priors.size() != model.config().num_states) {
    throw std::invalid_argument("prior size != model output size");
  }

  DecodeResult result;
  result.audio_seconds = static_cast<double>(num_frames) * kFrameShiftSeconds;
  const StackedSequence stacked =
      stack(features, StackConfig::non_overlapping(cfg.fs));
  const std::size_t num_super = stacked.size();
  const auto width = static_cast<std::size_t>(stacked.super_frames.cols());

  RowMatrix loglik(static_cast<Eigen::Index>(num_super), priors.size());
  StreamState state(model.config());
  for (std::size_t j = 0; j < num_super; ++j) {
    const Vector post = forward_step(
        model, state,
        {stacked.super_frames.row(static_cast<Eigen::Index>(j)).data(), width});
    ++result.num_forward_passes;
    loglik.row(static_cast<Eigen::Index>(j)) =
        emission_scores({post.data(), static_cast<std::size_t>(post.size())},
                        priors, cfg.acoustic_scale)
            .transpose();
  }
  result.step_source = retained_indices(num_super, cfg.fr, num_frames);
  result.num_steps = result.step_source.size();

  SearchResult search =
      viterbi_search(graph, loglik, result.step_source, cfg.beam);
  result.words = std::move(search.words);
  result.log_score = search.score;
  result.failed = search.failed;
  result.arc_path = std::move(search.arc_path);
  result.decode_wall_seconds = std::chrono::duration<double>(
                                   std::chrono::steady_clock::now() - start)
                                   .count();
  return result;
}

std::size_t edit_distance(std::span<const WordId> ref,
                          std::span<const WordId> hyp) {
  std::vector<std::size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

double error_rate(std::span<const WordId> ref, std::span<const WordId> hyp) {
  return static_cast<double>(edit_distance(ref, hyp)) /
         static_cast<double>(std::max<std::size_t>(1, ref.size()));
}

double rtf(double decode_wall_seconds, double audio_seconds) {
  if (!(audio_seconds > 0.0)) {
    throw std::invalid_argument("audio duration must be > 0");
  }
  return decode_wall_seconds / audio_seconds;
}

}  // namespace fsr
