#include "fsr/commands.h"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "fsr/binary_io.h"
#include "fsr/graph.h"
#include "fsr/model.h"

namespace fsr {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!obj.is_object()) throw UsageError(where + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw UsageError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_uint(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned()) {
    throw UsageError(std::string(key) + " must be a non-negative integer");
  }
  out = v.get<T>();
}

void read_int(const json& obj, const char* key, int& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) {
    throw UsageError(std::string(key) + " must be an integer");
  }
  out = v.get<int>();
}

void read_double(const json& obj, const char* key, double& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number()) throw UsageError(std::string(key) + " must be a number");
  out = v.get<double>();
}

std::vector<std::pair<int, int>> parse_cells(const std::string& text) {
  std::vector<std::pair<int, int>> cells;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    int a = 0, b = 0;
    char tail = 0;
    if (std::sscanf(item.c_str(), "%d:%d%c", &a, &b, &tail) != 2) {
      throw UsageError("bad cell '" + item + "', expected FS:FR");
    }
    cells.emplace_back(a, b);
  }
  return cells;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// Anything the library rejects while validating user-supplied settings is a
// configuration error.
template <typename F>
void as_usage(F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

Corpus load_corpus(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("no such corpus: " + path);
  return read_corpus(path);
}

std::string default_priors_path(const std::string& model_path) {
  return model_path + ".priors.json";
}

void check_model_matches(const ModelParams& model, const Corpus& corpus,
                         const PriorFile& priors, int fs) {
  if (priors.fs != fs) {
    throw UsageError("model was trained with fs=" + std::to_string(priors.fs) +
                     " but decoding asks for fs=" + std::to_string(fs));
  }
  if (model.config().input_dim != static_cast<std::uint32_t>(fs) *
                                       corpus.feature_dim) {
    throw UsageError("model input_dim does not match fs * feature_dim");
  }
  if (static_cast<std::uint32_t>(priors.priors.size()) !=
          model.config().num_states ||
      model.config().num_states != corpus.num_states()) {
    throw UsageError("model, priors and corpus disagree on the state count");
  }
}

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> fs;
  std::optional<int> fr;
  std::optional<int> repetitions;
  std::optional<std::size_t> workers;
  std::string out, train, test, model, priors, log, graph, hyp;
  std::string ema_model, block_log, probe, markdown, csv, cells;
};

RunConfig load_config(const Options& o) {
  RunConfig cfg;
  if (!o.config_path.empty()) {
    std::ifstream is(o.config_path);
    if (!is) throw UsageError("cannot read config " + o.config_path);
    std::stringstream ss;
    ss << is.rdbuf();
    cfg = parse_run_config(ss.str());
  }
  if (o.seed) apply_seed(cfg, *o.seed);
  if (o.fs) {
    cfg.train.fs = *o.fs;
    cfg.decode.fs = *o.fs;
  }
  if (o.fr) cfg.decode.fr = *o.fr;
  if (o.repetitions) cfg.sweep.repetitions = *o.repetitions;
  if (o.workers) cfg.bmuf.num_workers = *o.workers;
  if (!o.cells.empty()) cfg.sweep.cells = parse_cells(o.cells);
  as_usage([&] {
    cfg.corpus.validate();
    cfg.train.validate();
    cfg.bmuf.validate();
    cfg.decode.validate();
    cfg.sweep.validate();
  });
  return cfg;
}

int cmd_gen_data(const RunConfig& cfg, const Options& o, std::ostream& out) {
  const Corpus corpus = generate(cfg.corpus);
  auto [train, test] = split(corpus, cfg.train_fraction, cfg.corpus.seed);
  fs::create_directories(o.out);
  const fs::path dir(o.out);
  write_corpus(dir / "train.sdco", train);
  write_corpus(dir / "test.sdco", test);
  auto sidecar = nlohmann::ordered_json::parse(gen_config_to_json(cfg.corpus));
  sidecar["train_fraction"] = cfg.train_fraction;
  io::write_file(dir / "corpus.json", sidecar.dump(2) + "\n");
  out << "train: " << train.utterances.size() << " utterances, "
      << train.total_frames() << " frames\n"
      << "test: " << test.utterances.size() << " utterances, "
      << test.total_frames() << " frames\n";
  return kExitOk;
}

void print_epochs(std::ostream& out, std::span<const EpochLog> epochs) {
  for (const EpochLog& e : epochs) {
    out << "epoch " << e.epoch << " loss " << fmt("%.4f", e.mean_loss)
        << " frames " << e.frames_processed << " time "
        << fmt("%.3f", e.wall_seconds) << "s\n";
  }
}

int cmd_train(const RunConfig& cfg, const Options& o, std::ostream& out) {
  const Corpus train = load_corpus(o.train);
  ModelConfig mc;
  as_usage([&] { mc = make_model_config(train, cfg.arch, cfg.train.fs); });
  const TrainResult r = train_ce(ModelParams::glorot(mc, cfg.train.seed),
                                 train.utterances, cfg.train);
  save_model(fs::path(o.model), r.model);
  write_priors(o.priors.empty() ? default_priors_path(o.model) : o.priors,
               {cfg.train.fs, count_priors(train.utterances, mc.num_states,
                                           cfg.train.fs)});
  if (!o.log.empty()) write_train_log(o.log, r.epochs);
  print_epochs(out, r.epochs);
  if (r.skipped_steps > 0) out << "skipped steps: " << r.skipped_steps << "\n";
  return kExitOk;
}

int cmd_train_dist(const RunConfig& cfg, const Options& o, std::ostream& out) {
  const Corpus train = load_corpus(o.train);
  const Corpus probe = o.probe.empty() ? train : load_corpus(o.probe);
  if (probe.feature_dim != train.feature_dim) {
    throw UsageError("probe corpus feature_dim differs from training corpus");
  }
  ModelConfig mc;
  as_usage([&] {
    mc = make_model_config(train, cfg.arch, cfg.train.fs);
    if (cfg.bmuf.block_size % cfg.train.batch_size_utts != 0) {
      throw std::invalid_argument(
          "bmuf.block_size must be a multiple of train.batch_size_utts");
    }
    if (cfg.bmuf.num_workers > train.utterances.size()) {
      throw std::invalid_argument("more workers than training utterances");
    }
  });
  const DistributedResult r = train_distributed(
      ModelParams::glorot(mc, cfg.train.seed), train.utterances,
      probe.utterances, cfg.train, cfg.bmuf, cfg.ema);
  save_model(fs::path(o.model), r.global);
  if (!o.ema_model.empty()) save_model(fs::path(o.ema_model), r.ema);
  write_priors(o.priors.empty() ? default_priors_path(o.model) : o.priors,
               {cfg.train.fs, count_priors(train.utterances, mc.num_states,
                                           cfg.train.fs)});
  if (!o.log.empty()) write_train_log(o.log, r.epochs);
  if (!o.block_log.empty()) write_block_log(o.block_log, r.blocks);
  print_epochs(out, r.epochs);
  if (!r.blocks.empty()) {
    const BlockLog& last = r.blocks.back();
    out << "blocks " << r.blocks.size() << " probe loss global "
        << fmt("%.4f", last.probe_loss_global) << " ema "
        << fmt("%.4f", last.probe_loss_ema) << "\n";
  }
  return kExitOk;
}

int cmd_build_graph(const Options& o, std::ostream& out) {
  const Corpus train = load_corpus(o.train);
  const DecodingGraph graph = build_task_graph(train);
  write_graph(o.out, graph);
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(graph_hash(graph)));
  out << "nodes " << graph.num_nodes() << " arcs " << graph.arcs().size()
      << " hash " << hash << "\n";
  return kExitOk;
}

struct DecodeInputs {
  Corpus test;
  ModelParams model;
  PriorFile priors;
  DecodingGraph graph;
};

DecodeInputs load_decode_inputs(const RunConfig& cfg, const Options& o) {
  DecodeInputs in{load_corpus(o.test), load_model(fs::path(o.model)),
                  read_priors(o.priors.empty() ? default_priors_path(o.model)
                                               : o.priors),
                  read_graph(o.graph)};
  check_model_matches(in.model, in.test, in.priors, cfg.decode.fs);
  return in;
}

int cmd_decode(const RunConfig& cfg, const Options& o, std::ostream& out) {
  const DecodeInputs in = load_decode_inputs(cfg, o);
  const EvalResult eval =
      evaluate(in.test, in.model, in.priors.priors, in.graph, cfg.decode);
  if (!o.hyp.empty()) io::write_file(o.hyp, format_hypotheses(in.test, eval));
  out << "utterances " << in.test.utterances.size() << " words "
      << eval.ref_words << " errors " << eval.errors << " failed "
      << eval.failures << "\n"
      << "error_rate " << fmt("%.4f", eval.error_rate()) << "\n"
      << "forward_passes " << eval.forward_passes << "\n"
      << "rtf " << fmt("%.6f", eval.rtf()) << "\n";
  return kExitOk;
}

int cmd_bench_rtf(const RunConfig& cfg, const Options& o, std::ostream& out) {
  const DecodeInputs in = load_decode_inputs(cfg, o);
  std::vector<double> rtfs;
  for (int r = 0; r < cfg.sweep.repetitions; ++r) {
    rtfs.push_back(
        evaluate(in.test, in.model, in.priors.priors, in.graph, cfg.decode)
            .rtf());
    out << "run " << r + 1 << " rtf " << fmt("%.6f", rtfs.back()) << "\n";
  }
  out << "median_rtf " << fmt("%.6f", median(rtfs)) << "\n";
  return kExitOk;
}

int cmd_sweep(const RunConfig& cfg, const Options& o, std::ostream& out) {
  const Corpus train = load_corpus(o.train);
  const Corpus test = load_corpus(o.test);
  if (train.feature_dim != test.feature_dim ||
      train.num_states() != test.num_states()) {
    throw UsageError("train and test corpora have different shapes");
  }
  const auto rows =
      run_sweep(train, test, cfg.arch, cfg.train, cfg.decode, cfg.sweep);
  const std::string md = sweep_to_markdown(rows);
  if (!o.markdown.empty()) io::write_file(o.markdown, md);
  if (!o.csv.empty()) io::write_file(o.csv, sweep_to_csv(rows));
  out << md;
  return kExitOk;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, {"seed", "corpus", "model", "train", "bmuf", "decode", "sweep"},
             "config");
  RunConfig cfg;
  std::uint64_t seed = cfg.seed;
  read_uint(j, "seed", seed);
  if (j.contains("corpus")) {
    const json& c = j.at("corpus");
    check_keys(c,
               {"num_words", "states_per_word", "feature_dim",
                "mean_separation", "self_loop_prob", "min_words", "max_words",
                "num_utterances", "train_fraction"},
               "corpus");
    read_uint(c, "num_words", cfg.corpus.num_words);
    read_uint(c, "states_per_word", cfg.corpus.states_per_word);
    read_uint(c, "feature_dim", cfg.corpus.feature_dim);
    read_double(c, "mean_separation", cfg.corpus.mean_separation);
    read_double(c, "self_loop_prob", cfg.corpus.self_loop_prob);
    read_uint(c, "min_words", cfg.corpus.min_words);
    read_uint(c, "max_words", cfg.corpus.max_words);
    read_uint(c, "num_utterances", cfg.corpus.num_utterances);
    read_double(c, "train_fraction", cfg.train_fraction);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, {"hidden_dim", "num_layers", "fc_dim"}, "model");
    read_uint(m, "hidden_dim", cfg.arch.hidden_dim);
    read_uint(m, "num_layers", cfg.arch.num_layers);
    read_uint(m, "fc_dim", cfg.arch.fc_dim);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t,
               {"learning_rate", "momentum", "batch_size_utts", "epochs", "fs",
                "clip_norm"},
               "train");
    read_double(t, "learning_rate", cfg.train.learning_rate);
    read_double(t, "momentum", cfg.train.momentum);
    read_uint(t, "batch_size_utts", cfg.train.batch_size_utts);
    read_int(t, "epochs", cfg.train.epochs);
    read_int(t, "fs", cfg.train.fs);
    read_double(t, "clip_norm", cfg.train.clip_norm);
  }
  if (j.contains("bmuf")) {
    const json& b = j.at("bmuf");
    check_keys(b,
               {"num_workers", "block_size", "block_learning_rate",
                "block_momentum", "ema_decay"},
               "bmuf");
    read_uint(b, "num_workers", cfg.bmuf.num_workers);
    read_uint(b, "block_size", cfg.bmuf.block_size);
    read_double(b, "block_learning_rate", cfg.bmuf.block_learning_rate);
    read_double(b, "block_momentum", cfg.bmuf.block_momentum);
    read_double(b, "ema_decay", cfg.ema.decay);
  }
  if (j.contains("decode")) {
    const json& d = j.at("decode");
    check_keys(d, {"fs", "fr", "acoustic_scale", "beam"}, "decode");
    read_int(d, "fs", cfg.decode.fs);
    read_int(d, "fr", cfg.decode.fr);
    read_double(d, "acoustic_scale", cfg.decode.acoustic_scale);
    if (d.contains("beam") && !d.at("beam").is_null()) {
      read_double(d, "beam", cfg.decode.beam);
    }
  }
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    check_keys(s, {"cells", "repetitions"}, "sweep");
    if (s.contains("cells")) {
      cfg.sweep.cells.clear();
      for (const json& cell : s.at("cells")) {
        if (!cell.is_array() || cell.size() != 2 || !cell[0].is_number_integer() ||
            !cell[1].is_number_integer()) {
          throw UsageError("sweep.cells entries must be [fs, fr] pairs");
        }
        cfg.sweep.cells.emplace_back(cell[0].get<int>(), cell[1].get<int>());
      }
    }
    read_int(s, "repetitions", cfg.sweep.repetitions);
  }
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) {
    throw UsageError("corpus.train_fraction must be in (0, 1)");
  }
  if (!(cfg.ema.decay >= 0.0 && cfg.ema.decay <= 1.0)) {
    throw UsageError("bmuf.ema_decay must be in [0, 1]");
  }
  apply_seed(cfg, seed);
  return cfg;
}

void apply_seed(RunConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.corpus.seed = seed;
  cfg.train.seed = seed;
}

void write_priors(const std::string& path, const PriorFile& p) {
  json j;
  j["fs"] = p.fs;
  j["priors"] = std::vector<double>(p.priors.begin(), p.priors.end());
  io::write_file(path, j.dump(2) + "\n");
}

PriorFile read_priors(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("no such priors file: " + path);
  const json j = json::parse(io::read_file(path));
  PriorFile p;
  p.fs = j.at("fs").get<int>();
  const auto v = j.at("priors").get<std::vector<double>>();
  p.priors = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  for (double x : v) {
    if (!(x > 0.0)) throw std::runtime_error("priors must be positive: " + path);
  }
  return p;
}

std::string format_hypotheses(const Corpus& test, const EvalResult& eval) {
  std::ostringstream os;
  for (std::size_t i = 0; i < eval.utterances.size(); ++i) {
    const DecodeResult& r = eval.utterances[i];
    os << test.utterances[i].id << '\t';
    for (std::size_t k = 0; k < r.words.size(); ++k) {
      os << (k ? " " : "") << r.words[k];
    }
    os << '\t' << fmt("%.6f", r.log_score) << '\t' << r.num_forward_passes
       << '\t' << fmt("%.6f", r.decode_wall_seconds) << '\n';
  }
  return os.str();
}

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Frame stacking and frame retaining for hybrid HMM/LSTM decoding",
               "fsr"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON config file")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Override the config seed");
  };

  auto* gen = app.add_subcommand("gen-data", "Generate train/test corpora");
  common(gen);
  gen->add_option("--out", o.out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Cross-entropy training");
  common(train);
  train->add_option("--train", o.train, "Training corpus")->required();
  train->add_option("--model", o.model, "Output model")->required();
  train->add_option("--priors", o.priors, "Output priors (default MODEL.priors.json)");
  train->add_option("--log", o.log, "Per-epoch CSV log");
  train->add_option("--fs", o.fs, "Stacked frames");

  auto* dist = app.add_subcommand("train-dist", "Simulated BMUF data-parallel training");
  common(dist);
  dist->add_option("--train", o.train, "Training corpus")->required();
  dist->add_option("--model", o.model, "Output global model")->required();
  dist->add_option("--ema-model", o.ema_model, "Output EMA model");
  dist->add_option("--priors", o.priors, "Output priors (default MODEL.priors.json)");
  dist->add_option("--probe", o.probe, "Probe corpus for block losses (default: training corpus)");
  dist->add_option("--log", o.log, "Per-epoch CSV log");
  dist->add_option("--block-log", o.block_log, "Per-block CSV log");
  dist->add_option("--workers", o.workers, "Number of workers");
  dist->add_option("--fs", o.fs, "Stacked frames");

  auto* graph = app.add_subcommand("build-graph", "Build the decoding graph");
  common(graph);
  graph->add_option("--train", o.train, "Training corpus")->required();
  graph->add_option("--out", o.out, "Output graph")->required();

  auto decode_opts = [&o](CLI::App* sub) {
    sub->add_option("--test", o.test, "Test corpus")->required();
    sub->add_option("--model", o.model, "Model")->required();
    sub->add_option("--priors", o.priors, "Priors (default MODEL.priors.json)");
    sub->add_option("--graph", o.graph, "Decoding graph")->required();
    sub->add_option("--fs", o.fs, "Stacked frames");
    sub->add_option("--fr", o.fr, "Retain count");
  };
  auto* dec = app.add_subcommand("decode", "Decode a test corpus");
  common(dec);
  decode_opts(dec);
  dec->add_option("--hyp", o.hyp, "Hypotheses output file");

  auto* bench = app.add_subcommand("bench-rtf", "Repeated decodes, median RTF");
  common(bench);
  decode_opts(bench);
  bench->add_option("--repetitions", o.repetitions, "Timing repetitions");

  auto* sweep = app.add_subcommand("sweep", "Train per FS and decode every (FS, FR) cell");
  common(sweep);
  sweep->add_option("--train", o.train, "Training corpus")->required();
  sweep->add_option("--test", o.test, "Test corpus")->required();
  sweep->add_option("--cells", o.cells, "Cells as FS:FR,FS:FR,...");
  sweep->add_option("--repetitions", o.repetitions, "Timing repetitions");
  sweep->add_option("--markdown", o.markdown, "Markdown table output");
  sweep->add_option("--csv", o.csv, "CSV table output");

  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.emplace_back("fsr");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "fsr: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    const RunConfig cfg = load_config(o);
    if (gen->parsed()) return cmd_gen_data(cfg, o, out);
    if (train->parsed()) return cmd_train(cfg, o, out);
    if (dist->parsed()) return cmd_train_dist(cfg, o, out);
    if (graph->parsed()) return cmd_build_graph(o, out);
    if (dec->parsed()) return cmd_decode(cfg, o, out);
    if (bench->parsed()) return cmd_bench_rtf(cfg, o, out);
    if (sweep->parsed()) return cmd_sweep(cfg, o, out);
  } catch (const UsageError& e) {
    err << "fsr: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "fsr: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace fsr
