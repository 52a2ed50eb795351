#pragma once

// Static decoding graph: word-bigram LM over a lexicon of left-to-right
// HMM state sequences with self-loops. Emitting arcs carry an HMM state id
// and consume one frame; epsilon arcs carry LM and word-exit weights. Arc
// weights are negative log probabilities.
//
// Node layout produced by build_graph (W words):
//   0                      start (epsilon arcs to every word entry, P(w|<s>))
//   per word w, in order:  entry E_w, one node per pronunciation state,
//                          history node L_w (final, weight -log P(</s>|w))
// Arcs: E_w -> N_{w,0} emits s_0 and outputs w; N_{w,k} self-loops on s_k
// and advances to N_{w,k+1} emitting s_{k+1}; N_{w,last} -> L_w is an
// epsilon exit; L_u -> E_v is epsilon with weight -log P(v|u).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "fsr/types.h"

namespace fsr {

inline constexpr std::int32_t kEpsilon = -1;
inline constexpr double kInfWeight = std::numeric_limits<double>::infinity();

struct Arc {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  std::int32_t ilabel = kEpsilon;  // HMM state id, or kEpsilon
  std::int32_t olabel = kEpsilon;  // word id, or kEpsilon
  double weight = 0.0;             // -log probability

  bool emitting() const { return ilabel != kEpsilon; }
  bool operator==(const Arc&) const = default;
};

class DecodingGraph {
 public:
  DecodingGraph() = default;
  // Validates and indexes the arcs. final_weight[n] is +inf for non-final
  // nodes. Throws std::invalid_argument on out-of-range ids, non-finite arc
  // weights, nodes unreachable from start, or epsilon cycles.
  DecodingGraph(std::uint32_t num_nodes, std::uint32_t start,
                std::uint32_t num_hmm_states, std::vector<Arc> arcs,
                std::vector<double> final_weight);

  std::uint32_t num_nodes() const { return num_nodes_; }
  std::uint32_t start() const { return start_; }
  std::uint32_t num_hmm_states() const { return num_hmm_states_; }
  const std::vector<Arc>& arcs() const { return arcs_; }
  const std::vector<double>& final_weights() const { return final_weight_; }
  bool is_final(std::uint32_t node) const {
    return final_weight_[node] != kInfWeight;
  }

  // Arc ids leaving `node`, ascending, split by kind.
  const std::vector<std::uint32_t>& emitting_out(std::uint32_t node) const {
    return emitting_out_[node];
  }
  const std::vector<std::uint32_t>& epsilon_out(std::uint32_t node) const {
    return epsilon_out_[node];
  }
  // All nodes, ordered so every epsilon arc goes forward.
  const std::vector<std::uint32_t>& epsilon_order() const {
    return epsilon_order_;
  }

  bool operator==(const DecodingGraph& other) const {
    return num_nodes_ == other.num_nodes_ && start_ == other.start_ &&
           num_hmm_states_ == other.num_hmm_states_ &&
           arcs_ == other.arcs_ && final_weight_ == other.final_weight_;
  }

 private:
  std::uint32_t num_nodes_ = 0;
  std::uint32_t start_ = 0;
  std::uint32_t num_hmm_states_ = 0;
  std::vector<Arc> arcs_;
  std::vector<double> final_weight_;
  std::vector<std::vector<std::uint32_t>> emitting_out_;
  std::vector<std::vector<std::uint32_t>> epsilon_out_;
  std::vector<std::uint32_t> epsilon_order_;
};

// Pronunciation of each word as a sequence of HMM state ids.
struct Lexicon {
  std::vector<LabelSequence> pronunciations;

  std::size_t num_words() const { return pronunciations.size(); }
  // Word w -> states [w*s, w*s + s).
  static Lexicon left_to_right(std::uint32_t num_words,
                               std::uint32_t states_per_word);
};

// Add-one smoothed word bigram with sentence boundaries.
struct BigramLm {
  std::uint32_t vocab_size = 0;
  std::vector<double> start;   // P(w | <s>)
  std::vector<double> bigram;  // P(v | u), row-major V x V
  std::vector<double> end;     // P(</s> | u)

  double prob(WordId u, WordId v) const { return bigram[u * vocab_size + v]; }

  static BigramLm uniform(std::uint32_t vocab_size);
  static BigramLm estimate(const std::vector<WordSequence>& transcripts,
                           std::uint32_t vocab_size);
};

// Per HMM state self-loop probability; leaving the state has 1 - p.
struct HmmTransitions {
  std::vector<double> self_loop;

  static HmmTransitions constant(std::uint32_t num_states, double p);
};

DecodingGraph build_graph(const Lexicon& lexicon, const BigramLm& lm,
                          const HmmTransitions& transitions);

// Graph file: "SDGR", u32 version, u32 num_nodes, u32 start,
// u32 num_hmm_states, f64 final weight per node, u32 num_arcs, then per arc
// u32 src, u32 dst, i32 ilabel, i32 olabel, f64 weight.
std::string serialize_graph(const DecodingGraph& graph);
DecodingGraph parse_graph(const std::string& bytes);
void write_graph(const std::filesystem::path& path, const DecodingGraph& graph);
DecodingGraph read_graph(const std::filesystem::path& path);
std::uint64_t graph_hash(const DecodingGraph& graph);

}  // namespace fsr
