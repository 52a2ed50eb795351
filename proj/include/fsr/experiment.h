#pragma once

// End-to-end pipeline pieces shared by the CLI and the acceptance suite:
// task construction from a synthetic corpus, per-fs model training,
// test-set decoding, RTF timing and FS/FR sweep tables.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fsr/corpus.h"
#include "fsr/decoder.h"
#include "fsr/graph.h"
#include "fsr/model.h"
#include "fsr/trainer.h"

namespace fsr {

// Network shape that does not depend on the data; input_dim and num_states
// are filled in per task.
struct Architecture {
  std::uint32_t hidden_dim = 64;
  std::uint32_t num_layers = 2;
  std::uint32_t fc_dim = 64;
};

// Lexicon, add-one bigram over train transcripts and alignment-estimated
// self-loops. Depends on nothing but the training corpus.
DecodingGraph build_task_graph(const Corpus& train);

// input_dim = fs * feature_dim, num_states from the corpus.
ModelConfig make_model_config(const Corpus& train, const Architecture& arch,
                              int fs);

struct TrainedSystem {
  int fs = 1;
  ModelParams model;
  Vector priors;
  TrainResult log;
  double train_wall_seconds = 0.0;
};

// Glorot-initialized from cfg.seed and trained with train_ce.
TrainedSystem train_system(const Corpus& train, const Architecture& arch,
                           TrainConfig cfg, int fs);

struct EvalResult {
  std::size_t ref_words = 0;
  std::size_t errors = 0;
  std::size_t failures = 0;
  std::size_t forward_passes = 0;
  double decode_seconds = 0.0;
  double audio_seconds = 0.0;
  std::vector<DecodeResult> utterances;

  double error_rate() const {
    return static_cast<double>(errors) /
           static_cast<double>(std::max<std::size_t>(1, ref_words));
  }
  double rtf() const { return fsr::rtf(decode_seconds, audio_seconds); }
};

EvalResult evaluate(const Corpus& test, const ModelParams& model,
                    const Vector& priors, const DecodingGraph& graph,
                    const DecodeConfig& cfg);

// Median over `repetitions` whole-test-set decodes of
// total decode time / total audio time.
double measure_rtf(const Corpus& test, const ModelParams& model,
                   const Vector& priors, const DecodingGraph& graph,
                   const DecodeConfig& cfg, int repetitions);

double median(std::vector<double> values);

struct SweepSpec {
  std::vector<std::pair<int, int>> cells;  // (fs, fr)
  int repetitions = 5;

  void validate() const;
};

struct SweepRow {
  int fs = 1;
  int fr = 1;
  double error_rate = 0.0;
  double rtf = 0.0;
  std::size_t num_forward_passes_total = 0;
  std::optional<double> train_wall_seconds;

  bool operator==(const SweepRow&) const = default;
};

// Trains one model per distinct fs (shared seeds) and decodes the test set
// for every cell.
std::vector<SweepRow> run_sweep(const Corpus& train, const Corpus& test,
                                const Architecture& arch,
                                const TrainConfig& train_cfg,
                                const DecodeConfig& decode_cfg,
                                const SweepSpec& spec);

// Header: fs,fr,error_rate,rtf,num_forward_passes_total,train_wall_seconds
std::string sweep_to_csv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> sweep_from_csv(const std::string& text);
// Columns in the order FS, FR, error (%), RTF, forward passes, train time.
std::string sweep_to_markdown(const std::vector<SweepRow>& rows);

}  // namespace fsr
