#include "fsr/experiment.h"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

namespace fsr {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

}  // namespace

DecodingGraph build_task_graph(const Corpus& train) {
  return build_graph(train.lexicon(),
                     BigramLm::estimate(train.transcripts(), train.num_words),
                     estimate_transitions(train.utterances, train.num_states()));
}

ModelConfig make_model_config(const Corpus& train, const Architecture& arch,
                              int fs) {
  if (fs < 1) throw std::invalid_argument("fs must be >= 1");
  ModelConfig mc;
  mc.input_dim = static_cast<std::uint32_t>(fs) * train.feature_dim;
  mc.hidden_dim = arch.hidden_dim;
  mc.num_layers = arch.num_layers;
  mc.fc_dim = arch.fc_dim;
  mc.num_states = train.num_states();
  return mc;
}

TrainedSystem train_system(const Corpus& train, const Architecture& arch,
                           TrainConfig cfg, int fs) {
  cfg.fs = fs;
  const ModelConfig mc = make_model_config(train, arch, fs);

  TrainedSystem sys;
  sys.fs = fs;
  const auto start = std::chrono::steady_clock::now();
  sys.log = train_ce(ModelParams::glorot(mc, cfg.seed), train.utterances, cfg);
  sys.train_wall_seconds = std::chrono::duration<double>(
                               std::chrono::steady_clock::now() - start)
                               .count();
  sys.model = sys.log.model;
  sys.priors = count_priors(train.utterances, mc.num_states, fs);
  return sys;
}

EvalResult evaluate(const Corpus& test, const ModelParams& model,
                    const Vector& priors, const DecodingGraph& graph,
                    const DecodeConfig& cfg) {
  EvalResult out;
  out.utterances.reserve(test.utterances.size());
  for (const AlignedUtterance& utt : test.utterances) {
    DecodeResult r = decode(utt.features, model, priors, graph, cfg);
    out.ref_words += utt.transcript.size();
    out.errors += edit_distance(utt.transcript, r.words);
    out.failures += r.failed ? 1 : 0;
    out.forward_passes += r.num_forward_passes;
    out.decode_seconds += r.decode_wall_seconds;
    out.audio_seconds += r.audio_seconds;
    out.utterances.push_back(std::move(r));
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of nothing");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double measure_rtf(const Corpus& test, const ModelParams& model,
                   const Vector& priors, const DecodingGraph& graph,
                   const DecodeConfig& cfg, int repetitions) {
  if (repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
  std::vector<double> rtfs;
  for (int r = 0; r < repetitions; ++r) {
    rtfs.push_back(evaluate(test, model, priors, graph, cfg).rtf());
  }
  return median(std::move(rtfs));
}

void SweepSpec::validate() const {
  if (cells.empty()) {
    throw std::invalid_argument(
        "sweep needs at least one (fs, fr) cell, e.g. --cells 1:1,3:3");
  }
  for (const auto& [fs, fr] : cells) {
    if (fs < 1 || fr < 1) throw std::invalid_argument("fs and fr must be >= 1");
  }
  if (repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
}

std::vector<SweepRow> run_sweep(const Corpus& train, const Corpus& test,
                                const Architecture& arch,
                                const TrainConfig& train_cfg,
                                const DecodeConfig& decode_cfg,
                                const SweepSpec& spec) {
  spec.validate();
  const DecodingGraph graph = build_task_graph(train);
  std::map<int, TrainedSystem> systems;
  std::vector<SweepRow> rows;
  for (const auto& [fs, fr] : spec.cells) {
    if (!systems.contains(fs)) {
      systems.emplace(fs, train_system(train, arch, train_cfg, fs));
    }
    const TrainedSystem& sys = systems.at(fs);
    DecodeConfig cfg = decode_cfg;
    cfg.fs = fs;
    cfg.fr = fr;
    const EvalResult eval = evaluate(test, sys.model, sys.priors, graph, cfg);
    SweepRow row;
    row.fs = fs;
    row.fr = fr;
    row.error_rate = eval.error_rate();
    row.rtf = measure_rtf(test, sys.model, sys.priors, graph, cfg,
                          spec.repetitions);
    row.num_forward_passes_total = eval.forward_passes;
    row.train_wall_seconds = sys.train_wall_seconds;
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "fs,fr,error_rate,rtf,num_forward_passes_total,train_wall_seconds\n";
  for (const SweepRow& r : rows) {
    os << r.fs << ',' << r.fr << ',' << format_double(r.error_rate) << ','
       << format_double(r.rtf) << ',' << r.num_forward_passes_total << ',';
    if (r.train_wall_seconds) os << format_double(*r.train_wall_seconds);
    os << '\n';
  }
  return os.str();
}

std::vector<SweepRow> sweep_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line.rfind("fs,fr,", 0) != 0) {
    throw std::invalid_argument("sweep CSV is missing its header");
  }
  std::vector<SweepRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) {
      throw std::invalid_argument("sweep CSV row needs 6 fields: " + line);
    }
    SweepRow r;
    r.fs = std::stoi(f[0]);
    r.fr = std::stoi(f[1]);
    r.error_rate = parse_double(f[2]);
    r.rtf = parse_double(f[3]);
    r.num_forward_passes_total = std::stoull(f[4]);
    if (!f[5].empty()) r.train_wall_seconds = parse_double(f[5]);
    rows.push_back(r);
  }
  return rows;
}

std::string sweep_to_markdown(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "| FS | FR | Error (%) | RTF | Forward passes | Train (s) |\n";
  os << "|---:|---:|---:|---:|---:|---:|\n";
  char buf[160];
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "| %d | %d | %.2f | %.4f | %zu | ", r.fs,
                  r.fr, 100.0 * r.error_rate, r.rtf,
                  r.num_forward_passes_total);
    os << buf;
    if (r.train_wall_seconds) {
      std::snprintf(buf, sizeof(buf), "%.2f", *r.train_wall_seconds);
      os << buf;
    } else {
      os << '-';
    }
    os << " |\n";
  }
  return os.str();
}

}  // namespace fsr
