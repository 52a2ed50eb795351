#include "fsr/graph.h"

#include <cmath>
#include <functional>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "fsr/binary_io.h"

namespace fsr {

namespace {

constexpr std::uint32_t kGraphFileVersion = 1;

double neg_log(double p) { return -std::log(p); }

}  // namespace

DecodingGraph::DecodingGraph(std::uint32_t num_nodes, std::uint32_t start,
                             std::uint32_t num_hmm_states,
                             std::vector<Arc> arcs,
                             std::vector<double> final_weight)
    : num_nodes_(num_nodes),
      start_(start),
      num_hmm_states_(num_hmm_states),
      arcs_(std::move(arcs)),
      final_weight_(std::move(final_weight)) {
  if (num_nodes_ == 0 || start_ >= num_nodes_) {
    throw std::invalid_argument("graph needs a start node in range");
  }
  if (final_weight_.size() != num_nodes_) {
    throw std::invalid_argument("final weight vector size != node count");
  }
  emitting_out_.resize(num_nodes_);
  epsilon_out_.resize(num_nodes_);
  std::vector<std::uint32_t> eps_in_degree(num_nodes_, 0);
  for (std::uint32_t id = 0; id < arcs_.size(); ++id) {
    const Arc& a = arcs_[id];
    if (a.src >= num_nodes_ || a.dst >= num_nodes_) {
      throw std::invalid_argument("arc " + std::to_string(id) +
                                  " references a missing node");
    }
    if (!std::isfinite(a.weight)) {
      throw std::invalid_argument("arc " + std::to_string(id) +
                                  " has a non-finite weight");
    }
    if (a.emitting()) {
      if (a.ilabel < 0 ||
          static_cast<std::uint32_t>(a.ilabel) >= num_hmm_states_) {
        throw std::invalid_argument("arc " + std::to_string(id) +
                                    " has an out-of-range HMM state");
      }
      emitting_out_[a.src].push_back(id);
    } else {
      epsilon_out_[a.src].push_back(id);
      ++eps_in_degree[a.dst];
    }
  }
  for (double w : final_weight_) {
    if (std::isnan(w) || w == -kInfWeight) {
      throw std::invalid_argument("final weights must be finite or +inf");
    }
  }

  std::vector<bool> seen(num_nodes_, false);
  std::vector<std::uint32_t> todo = {start_};
  seen[start_] = true;
  while (!todo.empty()) {
    const std::uint32_t n = todo.back();
    todo.pop_back();
    for (const auto* list : {&emitting_out_[n], &epsilon_out_[n]}) {
      for (std::uint32_t id : *list) {
        const std::uint32_t d = arcs_[id].dst;
        if (!seen[d]) {
          seen[d] = true;
          todo.push_back(d);
        }
      }
    }
  }
  for (std::uint32_t n = 0; n < num_nodes_; ++n) {
    if (!seen[n]) {
      throw std::invalid_argument("node " + std::to_string(n) +
                                  " is unreachable from start");
    }
  }

  // Kahn's algorithm on the epsilon subgraph, smallest node id first.
  std::priority_queue<std::uint32_t, std::vector<std::uint32_t>,
                      std::greater<>>
      ready;
  for (std::uint32_t n = 0; n < num_nodes_; ++n) {
    if (eps_in_degree[n] == 0) ready.push(n);
  }
  while (!ready.empty()) {
    const std::uint32_t n = ready.top();
    ready.pop();
    epsilon_order_.push_back(n);
    for (std::uint32_t id : epsilon_out_[n]) {
      if (--eps_in_degree[arcs_[id].dst] == 0) ready.push(arcs_[id].dst);
    }
  }
  if (epsilon_order_.size() != num_nodes_) {
    throw std::invalid_argument("graph contains an epsilon cycle");
  }
}

Lexicon Lexicon::left_to_right(std::uint32_t num_words,
                               std::uint32_t states_per_word) {
  Lexicon lex;
  lex.pronunciations.resize(num_words);
  for (std::uint32_t w = 0; w < num_words; ++w) {
    for (std::uint32_t k = 0; k < states_per_word; ++k) {
      lex.pronunciations[w].push_back(w * states_per_word + k);
    }
  }
  return lex;
}

BigramLm BigramLm::uniform(std::uint32_t vocab_size) {
  return estimate({}, vocab_size);
}

BigramLm BigramLm::estimate(const std::vector<WordSequence>& transcripts,
                            std::uint32_t vocab_size) {
  if (vocab_size == 0) throw std::invalid_argument("empty LM vocabulary");
  const std::size_t v = vocab_size;
  std::vector<double> start_count(v, 0.0), end_count(v, 0.0);
  std::vector<double> pair_count(v * v, 0.0), history_count(v, 0.0);
  double sentences = 0.0;
  for (const WordSequence& words : transcripts) {
    if (words.empty()) continue;
    for (WordId w : words) {
      if (w >= vocab_size) {
        throw std::invalid_argument("transcript word id out of range");
      }
    }
    sentences += 1.0;
    start_count[words.front()] += 1.0;
    for (std::size_t i = 1; i < words.size(); ++i) {
      pair_count[words[i - 1] * v + words[i]] += 1.0;
      history_count[words[i - 1]] += 1.0;
    }
    end_count[words.back()] += 1.0;
    history_count[words.back()] += 1.0;
  }

  BigramLm lm;
  lm.vocab_size = vocab_size;
  lm.start.resize(v);
  lm.bigram.resize(v * v);
  lm.end.resize(v);
  for (std::size_t w = 0; w < v; ++w) {
    lm.start[w] = (start_count[w] + 1.0) / (sentences + v);
  }
  // Successors of u are the V words plus </s>.
  for (std::size_t u = 0; u < v; ++u) {
    const double denom = history_count[u] + v + 1.0;
    for (std::size_t w = 0; w < v; ++w) {
      lm.bigram[u * v + w] = (pair_count[u * v + w] + 1.0) / denom;
    }
    lm.end[u] = (end_count[u] + 1.0) / denom;
  }
  return lm;
}

HmmTransitions HmmTransitions::constant(std::uint32_t num_states, double p) {
  return {std::vector<double>(num_states, p)};
}

DecodingGraph build_graph(const Lexicon& lexicon, const BigramLm& lm,
                          const HmmTransitions& transitions) {
  const std::size_t num_words = lexicon.num_words();
  if (num_words == 0) throw std::invalid_argument("empty lexicon");
  if (lm.vocab_size != num_words) {
    throw std::invalid_argument("LM vocabulary does not match lexicon");
  }
  const auto num_hmm_states =
      static_cast<std::uint32_t>(transitions.self_loop.size());
  for (double p : transitions.self_loop) {
    if (!(p > 0.0 && p < 1.0)) {
      throw std::invalid_argument("self-loop probabilities must be in (0, 1)");
    }
  }

  std::vector<std::uint32_t> entry(num_words), history(num_words);
  std::vector<std::uint32_t> first_state_node(num_words);
  std::uint32_t next = 1;  // node 0 is the start
  for (std::size_t w = 0; w < num_words; ++w) {
    const LabelSequence& pron = lexicon.pronunciations[w];
    if (pron.empty()) {
      throw std::invalid_argument("word " + std::to_string(w) +
                                  " has an empty pronunciation");
    }
    for (StateId s : pron) {
      if (s >= num_hmm_states) {
        throw std::invalid_argument("pronunciation uses unknown HMM state " +
                                    std::to_string(s));
      }
    }
    entry[w] = next++;
    first_state_node[w] = next;
    next += static_cast<std::uint32_t>(pron.size());
    history[w] = next++;
  }
  const std::uint32_t num_nodes = next;

  std::vector<Arc> arcs;
  std::vector<double> final_weight(num_nodes, kInfWeight);
  auto state_label = [](StateId s) { return static_cast<std::int32_t>(s); };
  for (std::size_t w = 0; w < num_words; ++w) {
    arcs.push_back({0, entry[w], kEpsilon, kEpsilon, neg_log(lm.start[w])});
  }
  for (std::size_t w = 0; w < num_words; ++w) {
    const LabelSequence& pron = lexicon.pronunciations[w];
    const std::uint32_t base = first_state_node[w];
    arcs.push_back({entry[w], base, state_label(pron[0]),
                    static_cast<std::int32_t>(w), 0.0});
    for (std::size_t k = 0; k < pron.size(); ++k) {
      const auto node = static_cast<std::uint32_t>(base + k);
      const double p_self = transitions.self_loop[pron[k]];
      arcs.push_back(
          {node, node, state_label(pron[k]), kEpsilon, neg_log(p_self)});
      if (k + 1 < pron.size()) {
        arcs.push_back({node, node + 1, state_label(pron[k + 1]), kEpsilon,
                        neg_log(1.0 - p_self)});
      } else {
        arcs.push_back(
            {node, history[w], kEpsilon, kEpsilon, neg_log(1.0 - p_self)});
      }
    }
    for (std::size_t v = 0; v < num_words; ++v) {
      arcs.push_back({history[w], entry[v], kEpsilon, kEpsilon,
                      neg_log(lm.prob(static_cast<WordId>(w),
                                      static_cast<WordId>(v)))});
    }
    final_weight[history[w]] = neg_log(lm.end[w]);
  }
  return DecodingGraph(num_nodes, 0, num_hmm_states, std::move(arcs),
                       std::move(final_weight));
}

std::string serialize_graph(const DecodingGraph& graph) {
  std::ostringstream os;
  io::write_magic(os, "SDGR");
  io::write_u32(os, kGraphFileVersion);
  io::write_u32(os, graph.num_nodes());
  io::write_u32(os, graph.start());
  io::write_u32(os, graph.num_hmm_states());
  io::write_f64s(os, graph.final_weights());
  io::write_u32(os, static_cast<std::uint32_t>(graph.arcs().size()));
  for (const Arc& a : graph.arcs()) {
    io::write_u32(os, a.src);
    io::write_u32(os, a.dst);
    io::write_i32(os, a.ilabel);
    io::write_i32(os, a.olabel);
    io::write_f64(os, a.weight);
  }
  return os.str();
}

DecodingGraph parse_graph(const std::string& bytes) {
  std::istringstream is(bytes);
  io::expect_magic(is, "SDGR");
  const std::uint32_t version = io::read_u32(is);
  if (version != kGraphFileVersion) {
    throw std::runtime_error("unsupported graph file version " +
                             std::to_string(version));
  }
  const std::uint32_t num_nodes = io::read_u32(is);
  const std::uint32_t start = io::read_u32(is);
  const std::uint32_t num_hmm_states = io::read_u32(is);
  std::vector<double> final_weight(num_nodes);
  io::read_f64s(is, final_weight);
  const std::uint32_t num_arcs = io::read_u32(is);
  std::vector<Arc> arcs(num_arcs);
  for (Arc& a : arcs) {
    a.src = io::read_u32(is);
    a.dst = io::read_u32(is);
    a.ilabel = io::read_i32(is);
    a.olabel = io::read_i32(is);
    a.weight = io::read_f64(is);
  }
  return DecodingGraph(num_nodes, start, num_hmm_states, std::move(arcs),
                       std::move(final_weight));
}

void write_graph(const std::filesystem::path& path,
                 const DecodingGraph& graph) {
  io::write_file(path, serialize_graph(graph));
}

DecodingGraph read_graph(const std::filesystem::path& path) {
  return parse_graph(io::read_file(path));
}

std::uint64_t graph_hash(const DecodingGraph& graph) {
  return io::fnv1a(serialize_graph(graph));
}

}  // namespace fsr
