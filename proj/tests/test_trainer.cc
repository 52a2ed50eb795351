#include <doctest.h>

#include <cmath>
#include <fstream>

#include "fsr/corpus.h"
#include "fsr/stacking.h"
#include "fsr/trainer.h"
#include "helpers.h"

using namespace fsr;

namespace {

ModelParams scalar_model(double w) {
  ModelParams p = ModelParams::zeros({1, 1, 1, 1, 1});
  p.out_b(0) = w;
  return p;
}

Corpus small_corpus(std::uint32_t n = 24) {
  GenConfig g;
  g.num_utterances = n;
  g.min_words = 2;
  g.max_words = 4;
  return generate(g);
}

}  // namespace

TEST_CASE("ce_loss") {
  const LabelSequence zeros = {0, 0};
  RowMatrix uniform = RowMatrix::Constant(2, 4, 0.25);
  CHECK(ce_loss(uniform, zeros) == doctest::Approx(2.0 * std::log(4.0)));

  RowMatrix onehot = RowMatrix::Zero(2, 3);
  onehot(0, 0) = onehot(1, 0) = 1.0;
  CHECK(ce_loss(onehot, zeros) == 0.0);

  RowMatrix ex(2, 2);
  ex << 0.5, 0.5, 0.9, 0.1;
  CHECK(ce_loss(ex, zeros) == doctest::Approx(std::log(2.0) - std::log(0.9)));
  CHECK(ce_loss(ex, zeros) == doctest::Approx(0.7985).epsilon(1e-4));

  std::size_t clamped = 0;
  RowMatrix zero(1, 2);
  zero << 0.0, 1.0;
  const double l = ce_loss(zero, LabelSequence{0}, &clamped);
  CHECK(clamped == 1);
  CHECK(l == doctest::Approx(-std::log(1e-12)));
  CHECK_THROWS(ce_loss(zero, zeros));
}

TEST_CASE("sgd_step") {
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.9;
  ModelParams w = scalar_model(1.0);
  ModelParams v = scalar_model(0.0);
  const ModelParams g = scalar_model(1.0);
  CHECK(sgd_step(w, g, v, cfg));
  CHECK(w.out_b(0) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(sgd_step(w, g, v, cfg));
  CHECK(w.out_b(0) == doctest::Approx(0.71).epsilon(1e-15));

  SUBCASE("plain SGD when momentum is zero") {
    cfg.momentum = 0.0;
    ModelParams w2 = scalar_model(2.0), v2 = scalar_model(0.5);
    sgd_step(w2, scalar_model(3.0), v2, cfg);
    CHECK(w2.out_b(0) == doctest::Approx(2.0 - 0.3));
  }
  SUBCASE("zero gradient and velocity leave parameters unchanged") {
    ModelParams w2 = ModelParams::random({2, 2, 1, 2, 2}, 1);
    const ModelParams before = w2;
    ModelParams v2 = ModelParams::zeros(w2.config());
    sgd_step(w2, ModelParams::zeros(w2.config()), v2, cfg);
    CHECK(w2 == before);
  }
  SUBCASE("non-finite gradients are skipped") {
    ModelParams w2 = scalar_model(1.0), v2 = scalar_model(0.0);
    CHECK_FALSE(sgd_step(w2, scalar_model(std::nan("")), v2, cfg));
    CHECK(w2.out_b(0) == 1.0);
    CHECK(v2.out_b(0) == 0.0);
  }
}

TEST_CASE("clip_global_norm") {
  ModelParams g = ModelParams::zeros({1, 1, 1, 1, 2});
  g.out_b << 3.0, 4.0;
  CHECK(clip_global_norm(g, 10.0) == doctest::Approx(5.0));
  CHECK(g.out_b(1) == 4.0);
  clip_global_norm(g, 1.0);
  CHECK(g.out_b(0) == doctest::Approx(0.6));
  CHECK(g.out_b(1) == doctest::Approx(0.8));
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("shuffle is a seeded permutation") {
  std::mt19937_64 a(3), b(3);
  const auto p = shuffled_order(50, a);
  CHECK(p == shuffled_order(50, b));
  auto sorted = p;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 50; ++i) CHECK(sorted[i] == i);
  CHECK(shuffled_order(0, a).empty());
}

TEST_CASE("priors") {
  AlignedUtterance u;
  u.labels = {0, 0, 1};
  u.features = RowMatrix::Zero(3, 1);
  const std::vector<AlignedUtterance> ds = {u};
  const Vector p = count_priors(ds, 2);
  CHECK(p(0) == doctest::Approx(0.6));
  CHECK(p(1) == doctest::Approx(0.4));

  AlignedUtterance same;
  same.labels.assign(5, 1);
  const std::vector<AlignedUtterance> ds2 = {same};
  const Vector q = count_priors(ds2, 3);
  CHECK(q(0) == doctest::Approx(1.0 / 8));
  CHECK(q(2) == doctest::Approx(1.0 / 8));
  CHECK(q(1) == doctest::Approx(6.0 / 8));

  SUBCASE("fs = 3 counts middle labels only") {
    const Corpus c = small_corpus(10);
    const Vector p3 = count_priors(c.utterances, c.num_states(), 3);
    std::vector<double> counts(c.num_states(), 1.0);
    double total = c.num_states();
    for (const auto& utt : c.utterances) {
      const std::size_t t_len = utt.labels.size();
      for (std::size_t j = 0; j * 3 < t_len; ++j) {
        counts[utt.labels[std::min(3 * j + 1, t_len - 1)]] += 1.0;
        total += 1.0;
      }
    }
    for (std::uint32_t s = 0; s < c.num_states(); ++s) {
      CHECK(p3(s) == doctest::Approx(counts[s] / total).epsilon(1e-14));
    }
    CHECK(p3.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p3.minCoeff() > 0.0);
  }
}

TEST_CASE("transition estimates") {
  AlignedUtterance u;
  u.labels = {0, 0, 0, 1, 2, 2};
  const std::vector<AlignedUtterance> ds = {u};
  const HmmTransitions tr = estimate_transitions(ds, 4);
  CHECK(tr.self_loop[0] == doctest::Approx(3.0 / 5));  // 2 stays, 1 exit
  CHECK(tr.self_loop[1] == doctest::Approx(1.0 / 3));
  CHECK(tr.self_loop[2] == doctest::Approx(2.0 / 4));  // end of utterance exits
  CHECK(tr.self_loop[3] == doctest::Approx(0.5));
}

TEST_CASE("train_ce bookkeeping and determinism") {
  const Corpus c = small_corpus();
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.fs = 3;
  const ModelConfig mc{3 * c.feature_dim, 8, 1, 8, c.num_states()};
  const ModelParams init = ModelParams::glorot(mc, 1);
  const TrainResult a = train_ce(init, c.utterances, cfg);
  const TrainResult b = train_ce(init, c.utterances, cfg);
  CHECK(a.model == b.model);
  std::size_t expect = 0;
  for (const auto& u : c.utterances) expect += (u.num_frames() + 2) / 3;
  REQUIRE(a.epochs.size() == 2);
  for (const auto& e : a.epochs) {
    CHECK(e.frames_processed == expect);
    CHECK(std::isfinite(e.mean_loss));
  }
  CHECK_FALSE(a.model == init);

  SUBCASE("one epoch moves the model") {
    cfg.epochs = 1;
    CHECK_FALSE(train_ce(init, c.utterances, cfg).model == init);
  }
  SUBCASE("frame ratio bound") {
    std::size_t t1 = 0, min_t = SIZE_MAX;
    for (const auto& u : c.utterances) {
      t1 += u.num_frames();
      min_t = std::min(min_t, u.num_frames());
    }
    const double ratio = static_cast<double>(expect) / static_cast<double>(t1);
    CHECK(ratio >= 1.0 / 3);
    CHECK(ratio <= 1.0 / 3 + 1.0 / static_cast<double>(min_t));
  }
  SUBCASE("rejections") {
    cfg.epochs = 0;
    CHECK_THROWS(train_ce(init, c.utterances, cfg));
    cfg.epochs = 1;
    cfg.fs = 1;
    CHECK_THROWS(train_ce(init, c.utterances, cfg));
    CHECK_THROWS(train_ce(init, std::span<const AlignedUtterance>{}, cfg));
  }
}

TEST_CASE("train log CSV") {
  testing::TempDir dir("trainlog");
  const std::vector<EpochLog> logs = {{1, 2.5, 100, 0.25}, {2, 1.25, 100, 0.5}};
  write_train_log(dir.path() / "sub" / "log.csv", logs);
  std::ifstream in(dir.path() / "sub" / "log.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "epoch,mean_loss,frames_processed,wall_seconds");
  CHECK(row == "1,2.5,100,0.25");
}
