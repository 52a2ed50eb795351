#pragma once

// The `fsr` command line: gen-data, train, train-dist, build-graph, decode,
// sweep and bench-rtf. Every command reads one optional JSON config
// (--config) whose sections are all optional:
//
//   {
//     "seed": 1,
//     "corpus": {"num_words": 10, ..., "train_fraction": 0.8},
//     "model":  {"hidden_dim": 64, "num_layers": 2, "fc_dim": 64},
//     "train":  {"learning_rate": 0.3, "momentum": 0.9, "batch_size_utts": 4,
//                "epochs": 4, "fs": 1, "clip_norm": 5.0},
//     "bmuf":   {"num_workers": 4, "block_size": 16,
//                "block_learning_rate": 1.0, "block_momentum": 0.9,
//                "ema_decay": 0.99},
//     "decode": {"fs": 1, "fr": 1, "acoustic_scale": 1.0, "beam": null},
//     "sweep":  {"cells": [[1, 1], [3, 3]], "repetitions": 5}
//   }
//
// "seed" drives corpus generation, the train/test split and training;
// --seed replaces it. Unknown keys are rejected.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsr/corpus.h"
#include "fsr/decoder.h"
#include "fsr/distsim.h"
#include "fsr/experiment.h"
#include "fsr/trainer.h"

namespace fsr {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Bad flags, malformed config or inconsistent inputs (exit code 1).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::uint64_t seed = 1;
  GenConfig corpus;
  double train_fraction = 0.8;
  Architecture arch;
  TrainConfig train;
  BmufConfig bmuf;
  EmaConfig ema;
  DecodeConfig decode;
  SweepSpec sweep{{{1, 1}, {2, 2}, {3, 3}, {4, 4}}, 5};
};

// Parses and validates a config document. Throws UsageError.
RunConfig parse_run_config(const std::string& json_text);
// Applies `seed` to every seeded component.
void apply_seed(RunConfig& cfg, std::uint64_t seed);

// State priors stored next to a model: {"fs": N, "priors": [...]}.
struct PriorFile {
  int fs = 1;
  Vector priors;
};
void write_priors(const std::string& path, const PriorFile& p);
PriorFile read_priors(const std::string& path);

// One line per utterance:
// utt_id <TAB> words <TAB> log_score <TAB> forward_passes <TAB> wall_seconds
std::string format_hypotheses(const Corpus& test, const EvalResult& eval);

// Entry point shared by tools/fsr.cc and the tests; args excludes argv[0].
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace fsr
