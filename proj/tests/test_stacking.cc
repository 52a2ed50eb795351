#include <doctest.h>

#include <random>

#include "fsr/stacking.h"
#include "helpers.h"

using namespace fsr;

TEST_CASE("non-overlapping stacking") {
  SUBCASE("exact division") {
    const RowMatrix f = testing::random_matrix(9, 4, 1);
    const auto s = stack(f, StackConfig::non_overlapping(3));
    REQUIRE(s.size() == 3);
    CHECK(s.super_frames.cols() == 12);
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) {
        CHECK(s.super_frames.row(j).segment(4 * k, 4) == f.row(3 * j + k));
      }
    }
  }
  SUBCASE("tail padding repeats the last frame") {
    const RowMatrix f = testing::random_matrix(10, 2, 2);
    const auto s = stack(f, StackConfig::non_overlapping(3));
    REQUIRE(s.size() == 4);
    for (int k = 0; k < 3; ++k) {
      CHECK(s.super_frames.row(3).segment(2 * k, 2) == f.row(9));
    }
  }
  SUBCASE("fs = 1 is the identity") {
    const RowMatrix f = testing::random_matrix(7, 5, 3);
    const auto s = stack(f, StackConfig::non_overlapping(1));
    CHECK(s.super_frames == f);
    CHECK(s.source_len == 7);
  }
  SUBCASE("empty input") {
    CHECK(stack(RowMatrix(0, 3), StackConfig::non_overlapping(3)).size() == 0);
  }
}

TEST_CASE("overlapping stacking") {
  const RowMatrix f = testing::random_matrix(6, 1, 4);
  const StackConfig cfg{3, 1};
  CHECK_FALSE(cfg.is_non_overlapping());
  const auto s = stack(f, cfg);
  REQUIRE(s.size() == 4);
  for (int j = 0; j < 4; ++j) {
    for (int k = 0; k < 3; ++k) CHECK(s.super_frames(j, k) == f(j + k, 0));
  }
}

TEST_CASE("invalid stack configs") {
  CHECK_THROWS_AS((StackConfig{3, 4}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((StackConfig{0, 0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS(stack(RowMatrix(4, 1), StackConfig{2, 0}), std::invalid_argument);
}

TEST_CASE("stacked length properties") {
  for (int fs = 1; fs <= 5; ++fs) {
    for (int step = 1; step <= fs; ++step) {
      const StackConfig cfg{fs, step};
      CHECK(stacked_length(0, cfg) == 0);
      for (std::size_t t = 1; t <= 40; ++t) {
        const std::size_t m = stacked_length(t, cfg);
        const std::size_t expect =
            t <= static_cast<std::size_t>(fs) ? 1 : (t - fs + step - 1) / step + 1;
        CHECK(m == expect);
        CHECK(m <= (t + step - 1) / step);
        if (step == fs) {
          CHECK(m == (t + fs - 1) / fs);
          CHECK(m * fs >= t);
          CHECK(m * fs - t < static_cast<std::size_t>(fs));
        }
      }
    }
  }
}

TEST_CASE("middle labels") {
  const LabelSequence six = {10, 11, 12, 13, 14, 15};
  CHECK(middle_label(six, StackConfig::non_overlapping(3)) == LabelSequence{11, 14});
  CHECK(middle_label(six, StackConfig::non_overlapping(1)) == six);
  const LabelSequence four = {0, 1, 2, 3};
  CHECK(middle_label(four, StackConfig::non_overlapping(2)) == LabelSequence{0, 2});
  // Padded super frame clamps to the last real frame.
  const LabelSequence seven = {0, 1, 2, 3, 4, 5, 6};
  CHECK(middle_label(seven, StackConfig::non_overlapping(4)) == LabelSequence{1, 5});
  CHECK(middle_label(LabelSequence{1, 2, 3, 4}, StackConfig::non_overlapping(5)) ==
        LabelSequence{3});
}

TEST_CASE("stack_with_labels") {
  const RowMatrix f = testing::random_matrix(5, 2, 9);
  const LabelSequence l = {0, 0, 1, 1, 2};
  const auto s = stack_with_labels(f, l, StackConfig::non_overlapping(2));
  CHECK(s.labels == LabelSequence{0, 1, 2});
  CHECK(s.size() == 3);
  CHECK_THROWS_AS(stack_with_labels(f, LabelSequence{0, 1}, StackConfig::non_overlapping(2)),
                  std::invalid_argument);
}

TEST_CASE("unstacking at fs = 1 round-trips") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const int t = std::uniform_int_distribution<int>(1, 30)(rng);
    const RowMatrix f = testing::random_matrix(t, 3, 100 + trial);
    for (int fs : {1, 2, 3, 4}) {
      const auto s = stack(f, StackConfig::non_overlapping(fs));
      RowMatrix back(static_cast<Eigen::Index>(s.size()) * fs, 3);
      for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(s.size()); ++j) {
        for (int k = 0; k < fs; ++k) back.row(j * fs + k) = s.super_frames.row(j).segment(3 * k, 3);
      }
      CHECK(back.topRows(t) == f);
    }
  }
}
