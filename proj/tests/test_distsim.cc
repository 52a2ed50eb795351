#include <doctest.h>

#include <utility>

#include <algorithm>
#include <set>

#include "fsr/corpus.h"
#include "fsr/distsim.h"
#include "helpers.h"

using namespace fsr;

namespace {

ModelParams scalar(double v) {
  ModelParams p = ModelParams::zeros({1, 1, 1, 1, 1});
  p.out_b(0) = v;
  return p;
}

}  // namespace

TEST_CASE("split_shards") {
  SUBCASE("even split") {
    const auto s = split_shards(10, 2, 1);
    CHECK(s[0].size() == 5);
    CHECK(s[1].size() == 5);
  }
  SUBCASE("identity for one shard") {
    const auto s = split_shards(6, 1, 9);
    CHECK(s[0] == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
  }
  SUBCASE("remainder") {
    const auto s = split_shards(7, 3, 1);
    std::multiset<std::size_t> sizes;
    for (const auto& x : s) sizes.insert(x.size());
    CHECK(sizes == std::multiset<std::size_t>{2, 2, 3});
  }
  SUBCASE("partition property") {
    for (std::size_t n = 1; n <= 20; ++n) {
      for (std::size_t k = 1; k <= n; ++k) {
        const auto s = split_shards(n, k, n * 31 + k);
        std::vector<std::size_t> all;
        std::size_t lo = n, hi = 0;
        for (const auto& x : s) {
          all.insert(all.end(), x.begin(), x.end());
          lo = std::min(lo, x.size());
          hi = std::max(hi, x.size());
        }
        std::sort(all.begin(), all.end());
        REQUIRE(all.size() == n);
        for (std::size_t i = 0; i < n; ++i) CHECK(all[i] == i);
        CHECK(hi - lo <= 1);
      }
    }
  }
  CHECK(split_shards(12, 3, 4) == split_shards(12, 3, 4));
  CHECK_THROWS_AS(split_shards(2, 3, 1), std::invalid_argument);
}

TEST_CASE("mesh all-reduce") {
  const ModelParams w = ModelParams::random({3, 2, 2, 2, 3}, 4, 1.0);
  std::vector<ModelParams> one = {w};
  CHECK(mesh_allreduce_mean(one) == w);

  ModelParams neg = w;
  for (auto t : neg.tensors()) {
    for (double& v : t) v = -v;
  }
  std::vector<ModelParams> pair = {w, neg};
  const ModelParams zero = mesh_allreduce_mean(pair);
  for (auto t : zero.tensors()) {
    for (double v : t) CHECK(v == 0.0);
  }

  std::vector<ModelParams> three = {scalar(1), scalar(2), scalar(6)};
  CHECK(mesh_allreduce_mean(three).out_b(0) == 3.0);

  std::vector<ModelParams> mixed = {w, ModelParams::zeros({3, 2, 1, 2, 3})};
  CHECK_THROWS_AS(mesh_allreduce_mean(mixed), std::invalid_argument);
}

TEST_CASE("BMUF sync") {
  SUBCASE("scalar recursion 1.0 then 2.9") {
    BmufConfig cfg;
    cfg.block_momentum = 0.9;
    cfg.block_learning_rate = 1.0;
    BmufState st = BmufState::init(scalar(0.0));
    std::vector<ModelParams> workers = {scalar(1.0)};
    bmuf_sync(st, workers, cfg);
    CHECK(st.global.out_b(0) == doctest::Approx(1.0));
    workers = {scalar(2.0)};
    bmuf_sync(st, workers, cfg);
    CHECK(st.global.out_b(0) == doctest::Approx(2.9));
    CHECK(st.delta.out_b(0) == doctest::Approx(1.9));
  }
  SUBCASE("eta = 0 is model averaging, exactly") {
    BmufConfig cfg;
    cfg.block_momentum = 0.0;
    const ModelConfig mc{2, 3, 1, 2, 4};
    BmufState st = BmufState::init(ModelParams::random(mc, 1, 1.0));
    std::vector<ModelParams> workers;
    for (int k = 0; k < 3; ++k) workers.push_back(ModelParams::random(mc, 10 + k, 1.0));
    bmuf_sync(st, workers, cfg);
    CHECK(st.global == mesh_allreduce_mean(workers));
  }
}

TEST_CASE("EMA") {
  const ModelConfig mc{2, 2, 1, 2, 2};
  const ModelParams a = ModelParams::random(mc, 1, 1.0);
  const ModelParams b = ModelParams::random(mc, 2, 1.0);
  EmaState copy{a, 0.0};
  ema_update(copy, b);
  CHECK(copy.model == b);
  EmaState frozen{a, 1.0};
  ema_update(frozen, b);
  CHECK(frozen.model == a);

  EmaState s{scalar(0.0), 0.9};
  ema_update(s, scalar(1.0));
  CHECK(s.model.out_b(0) == doctest::Approx(0.1));
  ema_update(s, scalar(1.0));
  CHECK(s.model.out_b(0) == doctest::Approx(0.19));

  EmaState mid{a, 0.37};
  ema_update(mid, b);
  const auto ta = a.tensors(), tb = b.tensors();
  const auto tm = std::as_const(mid.model).tensors();
  for (std::size_t t = 0; t < ta.size(); ++t) {
    for (std::size_t i = 0; i < ta[t].size(); ++i) {
      CHECK(tm[t][i] >= std::min(ta[t][i], tb[t][i]));
      CHECK(tm[t][i] <= std::max(ta[t][i], tb[t][i]));
    }
  }
  EmaState wrong{ModelParams::zeros({1, 1, 1, 1, 1}), 0.5};
  CHECK_THROWS_AS(ema_update(wrong, a), std::invalid_argument);
}

TEST_CASE("distributed training") {
  GenConfig g;
  g.num_utterances = 64;
  g.min_words = 2;
  g.max_words = 5;
  const Corpus c = generate(g);
  auto [train, probe] = split(c, 0.75, 1);
  TrainConfig tc;
  tc.epochs = 2;
  const ModelConfig mc{c.feature_dim, 16, 2, 16, c.num_states()};
  const ModelParams init = ModelParams::glorot(mc, 1);

  SUBCASE("single worker without block momentum is sequential training") {
    BmufConfig bc;
    bc.num_workers = 1;
    bc.block_size = 8;
    bc.block_momentum = 0.0;
    const auto dist = train_distributed(init, train.utterances, probe.utterances,
                                        tc, bc, EmaConfig{});
    const auto seq = train_ce(init, train.utterances, tc);
    CHECK(dist.global == seq.model);
    REQUIRE(dist.epochs.size() == seq.epochs.size());
    for (std::size_t e = 0; e < seq.epochs.size(); ++e) {
      CHECK(dist.epochs[e].frames_processed == seq.epochs[e].frames_processed);
    }
    CHECK(dist.blocks.size() == 2 * 6);
  }
  SUBCASE("four workers land near one worker") {
    BmufConfig one;
    one.num_workers = 1;
    BmufConfig four = one;
    four.num_workers = 4;
    four.block_size = 4;
    const auto r1 = train_distributed(init, train.utterances, probe.utterances, tc, one, EmaConfig{});
    const auto r4 = train_distributed(init, train.utterances, probe.utterances, tc, four, EmaConfig{});
    const double l1 = r1.blocks.back().probe_loss_global;
    const double l4 = r4.blocks.back().probe_loss_global;
    CHECK(l4 <= 1.2 * l1);
    CHECK(r4.global.all_finite());
    CHECK(r4.ema.all_finite());
  }
  SUBCASE("block size must hold whole batches") {
    BmufConfig bc;
    bc.block_size = 6;
    CHECK_THROWS_AS(train_distributed(init, train.utterances, probe.utterances, tc, bc, EmaConfig{}),
                    std::invalid_argument);
  }
}
