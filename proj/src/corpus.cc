#include "fsr/corpus.h"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "fsr/binary_io.h"
#include "fsr/trainer.h"
#include "json.hpp"

namespace fsr {

namespace {

constexpr std::uint32_t kCorpusFileVersion = 1;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

}  // namespace

void GenConfig::validate() const {
  if (num_words < 2) throw std::invalid_argument("num_words must be >= 2");
  if (states_per_word < 1) {
    throw std::invalid_argument("states_per_word must be >= 1");
  }
  if (feature_dim < 1) throw std::invalid_argument("feature_dim must be >= 1");
  if (!(self_loop_prob >= 0.0 && self_loop_prob < 1.0)) {
    throw std::invalid_argument("self_loop_prob must be in [0, 1)");
  }
  if (!(mean_separation >= 0.0)) {
    throw std::invalid_argument("mean_separation must be >= 0");
  }
  if (min_words < 1 || max_words < min_words) {
    throw std::invalid_argument("need 1 <= min_words <= max_words");
  }
}

std::vector<WordSequence> Corpus::transcripts() const {
  std::vector<WordSequence> out;
  out.reserve(utterances.size());
  for (const auto& u : utterances) out.push_back(u.transcript);
  return out;
}

std::size_t Corpus::total_frames() const {
  std::size_t n = 0;
  for (const auto& u : utterances) n += u.num_frames();
  return n;
}

RowMatrix state_means(const GenConfig& cfg) {
  std::mt19937_64 rng(derive_seed(cfg.seed, 0));
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale =
      cfg.mean_separation / std::sqrt(2.0 * static_cast<double>(cfg.feature_dim));
  RowMatrix means(cfg.num_states(), cfg.feature_dim);
  for (Eigen::Index s = 0; s < means.rows(); ++s) {
    for (Eigen::Index k = 0; k < means.cols(); ++k) {
      means(s, k) = scale * normal(rng);
    }
  }
  return means;
}

Corpus generate(const GenConfig& cfg) {
  cfg.validate();
  Corpus corpus;
  corpus.num_words = cfg.num_words;
  corpus.states_per_word = cfg.states_per_word;
  corpus.feature_dim = cfg.feature_dim;
  corpus.state_means = state_means(cfg);
  const Lexicon lexicon = corpus.lexicon();

  corpus.utterances.resize(cfg.num_utterances);
  for (std::uint32_t i = 0; i < cfg.num_utterances; ++i) {
    std::mt19937_64 rng(derive_seed(cfg.seed, i + 1));
    std::uniform_int_distribution<std::uint32_t> length(cfg.min_words,
                                                        cfg.max_words);
    std::uniform_int_distribution<std::uint32_t> word(0, cfg.num_words - 1);
    std::bernoulli_distribution stay(cfg.self_loop_prob);
    std::normal_distribution<double> noise(0.0, kFeatureSigma);

    AlignedUtterance& utt = corpus.utterances[i];
    utt.id = "utt" + std::to_string(i);
    const std::uint32_t n = length(rng);
    for (std::uint32_t k = 0; k < n; ++k) utt.transcript.push_back(word(rng));
    for (WordId w : utt.transcript) {
      for (StateId s : lexicon.pronunciations[w]) {
        do {
          utt.labels.push_back(s);
        } while (stay(rng));
      }
    }
    utt.features.resize(static_cast<Eigen::Index>(utt.labels.size()),
                        cfg.feature_dim);
    for (std::size_t t = 0; t < utt.labels.size(); ++t) {
      for (std::uint32_t k = 0; k < cfg.feature_dim; ++k) {
        utt.features(static_cast<Eigen::Index>(t), k) =
            corpus.state_means(utt.labels[t], k) + noise(rng);
      }
    }
  }
  return corpus;
}

std::pair<Corpus, Corpus> split(const Corpus& corpus, double train_frac,
                                std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw std::invalid_argument("train_frac must be in (0, 1)");
  }
  const std::size_t n = corpus.utterances.size();
  const auto n_train =
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_frac));
  if (n_train == 0 || n_train == n) {
    throw std::invalid_argument("split leaves an empty partition");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order = shuffled_order(n, rng);
  std::vector<bool> in_train(n, false);
  for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = true;

  Corpus train, test;
  for (Corpus* c : {&train, &test}) {
    c->num_words = corpus.num_words;
    c->states_per_word = corpus.states_per_word;
    c->feature_dim = corpus.feature_dim;
    c->state_means = corpus.state_means;
  }
  for (std::size_t i = 0; i < n; ++i) {
    (in_train[i] ? train : test).utterances.push_back(corpus.utterances[i]);
  }
  return {std::move(train), std::move(test)};
}

std::string serialize_corpus(const Corpus& corpus) {
  std::ostringstream os;
  io::write_magic(os, "SDCO");
  io::write_u32(os, kCorpusFileVersion);
  io::write_u32(os, corpus.num_words);
  io::write_u32(os, corpus.states_per_word);
  io::write_u32(os, corpus.feature_dim);
  io::write_u32(os, static_cast<std::uint32_t>(corpus.utterances.size()));
  for (const AlignedUtterance& u : corpus.utterances) {
    io::write_string(os, u.id);
    io::write_u32(os, static_cast<std::uint32_t>(u.transcript.size()));
    for (WordId w : u.transcript) io::write_u32(os, w);
    io::write_u32(os, static_cast<std::uint32_t>(u.features.rows()));
    io::write_u32(os, static_cast<std::uint32_t>(u.features.cols()));
    io::write_f64s(os, {u.features.data(),
                        static_cast<std::size_t>(u.features.size())});
    for (StateId l : u.labels) io::write_u32(os, l);
  }
  return os.str();
}

Corpus parse_corpus(const std::string& bytes) {
  std::istringstream is(bytes);
  io::expect_magic(is, "SDCO");
  const std::uint32_t version = io::read_u32(is);
  if (version != kCorpusFileVersion) {
    throw std::runtime_error("unsupported corpus file version " +
                             std::to_string(version));
  }
  Corpus corpus;
  corpus.num_words = io::read_u32(is);
  corpus.states_per_word = io::read_u32(is);
  corpus.feature_dim = io::read_u32(is);
  const std::uint32_t n = io::read_u32(is);
  corpus.utterances.resize(n);
  for (AlignedUtterance& u : corpus.utterances) {
    u.id = io::read_string(is);
    u.transcript.resize(io::read_u32(is));
    for (WordId& w : u.transcript) w = io::read_u32(is);
    const std::uint32_t t_len = io::read_u32(is);
    const std::uint32_t d = io::read_u32(is);
    if (d != corpus.feature_dim) {
      throw std::runtime_error("utterance " + u.id + " has feature dim " +
                               std::to_string(d));
    }
    u.features.resize(t_len, d);
    io::read_f64s(is, {u.features.data(),
                       static_cast<std::size_t>(u.features.size())});
    u.labels.resize(t_len);
    for (StateId& l : u.labels) {
      l = io::read_u32(is);
      if (l >= corpus.num_states()) {
        throw std::runtime_error("utterance " + u.id + " has label " +
                                 std::to_string(l) + " out of range");
      }
    }
  }
  return corpus;
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  io::write_file(path, serialize_corpus(corpus));
}

Corpus read_corpus(const std::filesystem::path& path) {
  return parse_corpus(io::read_file(path));
}

std::string gen_config_to_json(const GenConfig& cfg) {
  const nlohmann::ordered_json j = {
      {"num_words", cfg.num_words},
      {"states_per_word", cfg.states_per_word},
      {"feature_dim", cfg.feature_dim},
      {"mean_separation", cfg.mean_separation},
      {"self_loop_prob", cfg.self_loop_prob},
      {"min_words", cfg.min_words},
      {"max_words", cfg.max_words},
      {"num_utterances", cfg.num_utterances},
      {"seed", cfg.seed},
  };
  return j.dump(2) + "\n";
}

GenConfig gen_config_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  GenConfig cfg;
  cfg.num_words = j.value("num_words", cfg.num_words);
  cfg.states_per_word = j.value("states_per_word", cfg.states_per_word);
  cfg.feature_dim = j.value("feature_dim", cfg.feature_dim);
  cfg.mean_separation = j.value("mean_separation", cfg.mean_separation);
  cfg.self_loop_prob = j.value("self_loop_prob", cfg.self_loop_prob);
  cfg.min_words = j.value("min_words", cfg.min_words);
  cfg.max_words = j.value("max_words", cfg.max_words);
  cfg.num_utterances = j.value("num_utterances", cfg.num_utterances);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

}  // namespace fsr
