#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <optional>
#include <vector>

#include "moehealth/errors.hpp"
#include "moehealth/metrics.hpp"
#include "moehealth/rng.hpp"

using namespace moehealth;

namespace {

Vector vec(std::initializer_list<real_t> xs) {
  Vector v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (real_t x : xs) v[i++] = x;
  return v;
}

std::vector<int> labels(std::initializer_list<int> ys) { return std::vector<int>(ys); }

ScoredBatch batch(const Vector& scores, const std::vector<int>& ys) {
  ScoredBatch b;
  b.scores = scores;
  b.labels = Vector(static_cast<Index>(ys.size()));
  for (std::size_t i = 0; i < ys.size(); ++i) {
    b.labels[static_cast<Index>(i)] = static_cast<real_t>(ys[i]);
  }
  return b;
}

std::optional<real_t> auroc(const Vector& scores, const std::vector<int>& ys) {
  return moehealth::auroc(batch(scores, ys));
}

real_t f1(const Vector& scores, const std::vector<int>& ys) {
  return moehealth::f1(batch(scores, ys));
}

// O(n^2) oracle: fraction of positive/negative pairs ranked correctly, ties
// counting half.
real_t pairwise_auroc(const Vector& scores, const std::vector<int>& ys) {
  real_t wins = 0.0;
  long pairs = 0;
  for (Index i = 0; i < scores.size(); ++i) {
    if (ys[static_cast<std::size_t>(i)] != 1) continue;
    for (Index j = 0; j < scores.size(); ++j) {
      if (ys[static_cast<std::size_t>(j)] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / static_cast<real_t>(pairs);
}

}  // namespace

TEST_CASE("the worked four-sample example evaluates to 0.75") {
  const auto a = auroc(vec({0.1, 0.4, 0.35, 0.8}), labels({0, 0, 1, 1}));
  REQUIRE(a.has_value());
  CHECK(*a == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("a perfect ranking scores one and a reversed ranking zero") {
  const auto perfect = auroc(vec({0.1, 0.2, 0.8, 0.9}), labels({0, 0, 1, 1}));
  REQUIRE(perfect.has_value());
  CHECK(*perfect == 1.0);

  const auto reversed = auroc(vec({0.9, 0.8, 0.2, 0.1}), labels({0, 0, 1, 1}));
  REQUIRE(reversed.has_value());
  CHECK(*reversed == 0.0);
}

TEST_CASE("constant scores sit exactly at chance") {
  const auto a = auroc(vec({0.5, 0.5, 0.5, 0.5}), labels({0, 1, 0, 1}));
  REQUIRE(a.has_value());
  CHECK(*a == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("single-class batches have no defined ranking quality") {
  CHECK(!auroc(vec({0.1, 0.9}), labels({1, 1})).has_value());
  CHECK(!auroc(vec({0.1, 0.9}), labels({0, 0})).has_value());
}

TEST_CASE("the midrank statistic matches the pairwise oracle on random tied batches") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.below(199));  // up to 200 samples
    Vector scores(n);
    std::vector<int> ys(static_cast<std::size_t>(n));
    bool saw_pos = false;
    bool saw_neg = false;
    for (Index i = 0; i < n; ++i) {
      // Coarse grid forces plenty of exact ties.
      scores[i] = static_cast<real_t>(rng.below(9)) / 8.0;
      const int y = rng.bernoulli(0.35) ? 1 : 0;
      ys[static_cast<std::size_t>(i)] = y;
      saw_pos |= y == 1;
      saw_neg |= y == 0;
    }
    if (!saw_pos) ys[0] = 1;
    if (!saw_neg) ys[static_cast<std::size_t>(n - 1)] = 0;

    const auto fast = auroc(scores, ys);
    REQUIRE(fast.has_value());
    REQUIRE(std::abs(*fast - pairwise_auroc(scores, ys)) < 1e-12);
  }
}

TEST_CASE("ranking quality is invariant under strictly increasing transforms") {
  Rng rng(29);
  Vector scores(50);
  std::vector<int> ys(50);
  for (Index i = 0; i < 50; ++i) {
    scores[i] = rng.uniform01();
    ys[static_cast<std::size_t>(i)] = rng.bernoulli(0.4) ? 1 : 0;
  }
  ys[0] = 1;
  ys[1] = 0;

  Vector squashed(50);
  for (Index i = 0; i < 50; ++i) squashed[i] = 1.0 / (1.0 + std::exp(-6.0 * (scores[i] - 0.5)));

  const auto a = auroc(scores, ys);
  const auto b = auroc(squashed, ys);
  REQUIRE(a.has_value());
  REQUIRE(b.has_value());
  CHECK(*a == doctest::Approx(*b).epsilon(1e-12));
}

TEST_CASE("flipping the scores complements the ranking quality") {
  Rng rng(31);
  Vector scores(40);
  std::vector<int> ys(40);
  for (Index i = 0; i < 40; ++i) {
    scores[i] = rng.uniform01();
    ys[static_cast<std::size_t>(i)] = rng.bernoulli(0.5) ? 1 : 0;
  }
  ys[0] = 1;
  ys[1] = 0;

  const Vector flipped = Vector::Ones(40) - scores;
  const auto a = auroc(scores, ys);
  const auto b = auroc(flipped, ys);
  REQUIRE(a.has_value());
  CHECK(*a == doctest::Approx(1.0 - *b).epsilon(1e-12));
}

TEST_CASE("the worked f1 example with one hit one miss one false alarm") {
  // scores >= 0.5 predict positive: TP {0.9}, FN {0.4}, FP {0.7}, TN {0.1}.
  const real_t f = f1(vec({0.9, 0.4, 0.7, 0.1}), labels({1, 1, 0, 0}));
  CHECK(f == doctest::Approx(0.5).epsilon(1e-12));  // precision 0.5, recall 0.5
}

TEST_CASE("f1 is zero when nothing is predicted or labeled positive") {
  CHECK(f1(vec({0.1, 0.2}), labels({0, 0})) == 0.0);
  CHECK(f1(vec({0.1, 0.2}), labels({1, 1})) == 0.0);  // no predicted positives
}

TEST_CASE("f1 is one for a perfect thresholded prediction") {
  CHECK(f1(vec({0.9, 0.8, 0.1}), labels({1, 1, 0})) == 1.0);
}

TEST_CASE("the decision threshold is inclusive at one half") {
  // 0.5 predicts positive.
  CHECK(f1(vec({0.5}), labels({1})) == 1.0);
}

TEST_CASE("metrics are invariant to sample order") {
  const Vector s = vec({0.9, 0.4, 0.7, 0.1});
  const std::vector<int> y = labels({1, 1, 0, 0});
  const Vector s2 = vec({0.1, 0.7, 0.4, 0.9});
  const std::vector<int> y2 = labels({0, 0, 1, 1});
  CHECK(*auroc(s, y) == doctest::Approx(*auroc(s2, y2)).epsilon(1e-12));
  CHECK(f1(s, y) == doctest::Approx(f1(s2, y2)).epsilon(1e-12));
}

TEST_CASE("scored batches are validated") {
  CHECK_THROWS_AS(auroc(vec({0.5}), labels({1, 0})), ShapeError);
  CHECK_THROWS_AS(auroc(Vector(), {}), ValueError);
  CHECK_THROWS_AS(auroc(vec({1.5, 0.2}), labels({1, 0})), ValueError);   // score out of range
  CHECK_THROWS_AS(auroc(vec({0.5, 0.2}), labels({2, 0})), ValueError);   // label not 0/1
  CHECK_THROWS_AS(f1(vec({0.5}), labels({3})), ValueError);
}
