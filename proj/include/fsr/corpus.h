#pragma once

// Synthetic aligned corpus: uniform word bigram, one left-to-right HMM per
// word with geometric state durations, and Gaussian feature vectors around a
// per-state mean (unit variance). Stands in for real speech plus a GMM-HMM
// forced alignment.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "fsr/graph.h"
#include "fsr/utterance.h"

namespace fsr {

struct GenConfig {
  std::uint32_t num_words = 10;
  std::uint32_t states_per_word = 3;
  std::uint32_t feature_dim = 12;
  double mean_separation = 4.0;
  double self_loop_prob = 0.6;
  std::uint32_t min_words = 5;
  std::uint32_t max_words = 10;
  std::uint32_t num_utterances = 250;
  std::uint64_t seed = 1;

  void validate() const;
  std::uint32_t num_states() const { return num_words * states_per_word; }
  bool operator==(const GenConfig&) const = default;
};

inline constexpr double kFeatureSigma = 1.0;

struct Corpus {
  std::uint32_t num_words = 0;
  std::uint32_t states_per_word = 0;
  std::uint32_t feature_dim = 0;
  std::vector<AlignedUtterance> utterances;
  RowMatrix state_means;  // num_states x d; empty when read from disk

  std::uint32_t num_states() const { return num_words * states_per_word; }
  Lexicon lexicon() const {
    return Lexicon::left_to_right(num_words, states_per_word);
  }
  std::vector<WordSequence> transcripts() const;
  std::size_t total_frames() const;
};

// State means: mean_separation * z_s with z_s ~ N(0, I / (2d)), so two
// state means are mean_separation apart in expectation.
RowMatrix state_means(const GenConfig& cfg);

// Bit-reproducible for a fixed seed; utterance i draws from its own
// generator derived from (seed, i).
Corpus generate(const GenConfig& cfg);

// Seeded utterance-level split; round(n * train_frac) utterances go to
// train. Both parts keep corpus order. Throws if either part would be empty.
std::pair<Corpus, Corpus> split(const Corpus& corpus, double train_frac,
                                std::uint64_t seed);

// Corpus file: "SDCO", u32 version, u32 num_words, u32 states_per_word,
// u32 feature_dim, u32 num_utterances, then per utterance: string utt_id
// (u32 length + bytes), u32 n, n x u32 word ids, u32 T, u32 d,
// T*d f64 row-major features, T x u32 labels.
std::string serialize_corpus(const Corpus& corpus);
Corpus parse_corpus(const std::string& bytes);
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& path);

std::string gen_config_to_json(const GenConfig& cfg);
GenConfig gen_config_from_json(const std::string& text);

}  // namespace fsr
