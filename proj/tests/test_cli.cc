#include <doctest.h>

#include <sstream>

#include "fsr/binary_io.h"
#include "fsr/commands.h"
#include "helpers.h"

using namespace fsr;

namespace {

const char* kSmallConfig = R"({
  "seed": 3,
  "corpus": {"num_words": 4, "num_utterances": 30, "min_words": 2, "max_words": 4},
  "model": {"hidden_dim": 8, "num_layers": 1, "fc_dim": 8},
  "train": {"epochs": 2, "batch_size_utts": 4},
  "bmuf": {"num_workers": 1, "block_size": 8, "block_momentum": 0.0,
           "block_learning_rate": 1.0},
  "sweep": {"cells": [[1, 1], [2, 2]], "repetitions": 1}
})";

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig c = parse_run_config(kSmallConfig);
  CHECK(c.seed == 3);
  CHECK(c.corpus.seed == 3);
  CHECK(c.train.seed == 3);
  CHECK(c.arch.hidden_dim == 8);
  CHECK(c.sweep.cells.size() == 2);
  CHECK(c.decode.beam == kUnlimitedBeam);
  CHECK_THROWS_AS(parse_run_config(R"({"trian": {}})"), UsageError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"epoch": 2}})"), UsageError);
  CHECK_THROWS_AS(parse_run_config("{"), UsageError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"epochs": "two"}})"), UsageError);
  RunConfig s = parse_run_config("{}");
  apply_seed(s, 11);
  CHECK(s.corpus.seed == 11);
  CHECK(s.train.seed == 11);
}

TEST_CASE("cli pipeline") {
  testing::TempDir dir("cli");
  const std::string cfg = dir / "cfg.json";
  io::write_file(cfg, kSmallConfig);
  const std::string data = dir / "data";

  REQUIRE(run({"gen-data", "--config", cfg, "--out", data}).code == kExitOk);
  const std::string train_bytes = io::read_file(data + "/train.sdco");
  REQUIRE(run({"gen-data", "--config", cfg, "--out", dir / "data2"}).code == kExitOk);
  CHECK(io::read_file(dir / "data2/train.sdco") == train_bytes);
  CHECK(io::read_file(dir / "data2/test.sdco") == io::read_file(data + "/test.sdco"));
  REQUIRE(run({"gen-data", "--config", cfg, "--seed", "4", "--out", dir / "data3"}).code ==
          kExitOk);
  CHECK(io::read_file(dir / "data3/train.sdco") != train_bytes);

  const std::string train = data + "/train.sdco", test = data + "/test.sdco";
  SUBCASE("single worker distributed run equals plain training") {
    REQUIRE(run({"train", "--config", cfg, "--train", train, "--model", dir / "a.sdmd"}).code ==
            kExitOk);
    REQUIRE(run({"train-dist", "--config", cfg, "--train", train, "--model", dir / "b.sdmd"})
                .code == kExitOk);
    CHECK(io::read_file(dir / "a.sdmd") == io::read_file(dir / "b.sdmd"));
  }

  SUBCASE("train, build graph, decode") {
    const Run t = run({"train", "--config", cfg, "--train", train, "--model", dir / "m.sdmd",
                       "--fs", "2", "--log", dir / "log.csv"});
    REQUIRE(t.code == kExitOk);
    CHECK(io::read_file(dir / "log.csv").rfind("epoch,mean_loss,frames_processed,", 0) == 0);
    const Run g = run({"build-graph", "--train", train, "--out", dir / "g.sdgr"});
    REQUIRE(g.code == kExitOk);
    CHECK(g.out.rfind("nodes ", 0) == 0);
    const Run d = run({"decode", "--config", cfg, "--test", test, "--model", dir / "m.sdmd",
                       "--graph", dir / "g.sdgr", "--fs", "2", "--fr", "2", "--hyp",
                       dir / "hyp.tsv"});
    REQUIRE(d.code == kExitOk);
    CHECK(d.out.find("error_rate ") != std::string::npos);
    const std::string hyp = io::read_file(dir / "hyp.tsv");
    std::istringstream lines(hyp);
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
      ++n;
      CHECK(std::count(line.begin(), line.end(), '\t') == 4);
      CHECK(line.rfind("utt", 0) == 0);
    }
    CHECK(n == 6);

    // a model trained with fs=2 cannot decode with fs=1
    CHECK(run({"decode", "--test", test, "--model", dir / "m.sdmd", "--graph",
               dir / "g.sdgr"})
              .code == kExitUsage);
    const Run b = run({"bench-rtf", "--config", cfg, "--test", test, "--model",
                       dir / "m.sdmd", "--graph", dir / "g.sdgr", "--fs", "2",
                       "--repetitions", "2"});
    CHECK(b.code == kExitOk);
    CHECK(b.out.find("median_rtf ") != std::string::npos);
  }

  SUBCASE("sweep writes a readable csv") {
    const Run s = run({"sweep", "--config", cfg, "--train", train, "--test", test, "--csv",
                       dir / "s.csv", "--markdown", dir / "s.md"});
    REQUIRE(s.code == kExitOk);
    const auto rows = sweep_from_csv(io::read_file(dir / "s.csv"));
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].fs == 1);
    CHECK(rows[1].fr == 2);
    CHECK(rows[0].train_wall_seconds.has_value());
    CHECK(io::read_file(dir / "s.md") == s.out);
  }
}

TEST_CASE("cli exit codes") {
  testing::TempDir dir("cli_err");
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"train", "--train", "x"}).code == kExitUsage);
  CHECK(run({"--help"}).code == kExitOk);

  const std::string bad = dir / "bad.json";
  io::write_file(bad, R"({"sweep": {"cells": []}})");
  const Run empty = run({"sweep", "--config", bad, "--train", "a", "--test", "b"});
  CHECK(empty.code == kExitUsage);
  CHECK_FALSE(empty.err.empty());
  io::write_file(bad, R"({"colour": 1})");
  CHECK(run({"gen-data", "--config", bad, "--out", dir / "x"}).code == kExitUsage);
  CHECK(run({"gen-data", "--config", dir / "missing.json", "--out", dir / "x"}).code ==
        kExitUsage);
  CHECK(run({"sweep", "--cells", "3-3", "--train", "a", "--test", "b"}).code == kExitUsage);
  CHECK(run({"train", "--train", dir / "none.sdco", "--model", dir / "m"}).code ==
        kExitRuntime);
}
