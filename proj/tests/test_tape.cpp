#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "moehealth/errors.hpp"
#include "moehealth/parameter.hpp"
#include "moehealth/rng.hpp"
#include "moehealth/tape.hpp"

using namespace moehealth;

namespace {

constexpr real_t kStep = 1e-6;
constexpr real_t kTol = 1e-6;

// Central finite difference of `loss` w.r.t. every entry of `p`, compared
// against the analytic gradient accumulated in p.gradient.
void check_against_fd(Parameter& p, const std::function<real_t()>& loss, const Matrix& analytic) {
  for (Index r = 0; r < p.values.rows(); ++r) {
    for (Index c = 0; c < p.values.cols(); ++c) {
      const real_t saved = p.values(r, c);
      p.values(r, c) = saved + kStep;
      const real_t up = loss();
      p.values(r, c) = saved - kStep;
      const real_t down = loss();
      p.values(r, c) = saved;
      const real_t numeric = (up - down) / (2 * kStep);
      const real_t denom = std::max({std::abs(numeric), std::abs(analytic(r, c)), 1e-6});
      CHECK(std::abs(numeric - analytic(r, c)) / denom < kTol);
    }
  }
}

Matrix random_matrix(Rng& rng, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index c = 0; c < cols; ++c) {
    for (Index r = 0; r < rows; ++r) {
      m(r, c) = rng.normal() * 0.7;
    }
  }
  return m;
}

}  // namespace

TEST_CASE("leaf deduplicates per parameter and accumulates across uses") {
  ParameterStore store;
  Parameter& p = store.create("p", 2, 1);
  p.values << 1.0, 2.0;

  Tape t;
  const NodeId a = t.leaf(p);
  const NodeId b = t.leaf(p);
  CHECK(a == b);

  // loss = sum(p) + sum(2 * p) = 3 * sum(p), so dloss/dp = 3 everywhere.
  const NodeId doubled = scale(t, a, 2.0);
  const NodeId loss = sum(t, add(t, a, doubled));
  t.backward(loss);
  CHECK(p.gradient(0, 0) == doctest::Approx(3.0));
  CHECK(p.gradient(1, 0) == doctest::Approx(3.0));
}

TEST_CASE("backward rejects non-scalar roots") {
  ParameterStore store;
  Parameter& p = store.create("p", 3, 1);
  Tape t;
  const NodeId id = t.leaf(p);
  CHECK_THROWS_AS(t.backward(id), ValueError);
}

TEST_CASE("affine chain gradients match finite differences") {
  Rng rng(11);
  ParameterStore store;
  Parameter& w = store.create("w", 3, 4);
  Parameter& b = store.create("b", 3, 1);
  w.values = random_matrix(rng, 3, 4);
  b.values = random_matrix(rng, 3, 1);
  const Vector x = random_matrix(rng, 4, 1);

  auto loss = [&]() {
    Tape t;
    return t.scalar(sum(t, affine(t, t.leaf(w), t.leaf(b), x)));
  };
  Tape t;
  t.backward(sum(t, affine(t, t.leaf(w), t.leaf(b), x)));
  check_against_fd(w, loss, w.gradient);
  check_against_fd(b, loss, b.gradient);
}

TEST_CASE("relu sigmoid softmax gradients match finite differences") {
  Rng rng(13);
  ParameterStore store;
  Parameter& w = store.create("w", 4, 3);
  Parameter& b = store.create("b", 4, 1);
  w.values = random_matrix(rng, 4, 3);
  b.values = random_matrix(rng, 4, 1);
  const Vector x = random_matrix(rng, 3, 1);
  // Weight the output entries unevenly so softmax gradients are nonzero.
  Parameter& fixed = store.create("fixed", 1, 4);
  fixed.values = random_matrix(rng, 4, 1).transpose();
  Parameter& zero = store.create("zero", 1, 1);

  auto build = [&](Tape& t) {
    const NodeId z = affine(t, t.leaf(w), t.leaf(b), x);
    const NodeId path = add(t, relu(t, z), add(t, sigmoid(t, z), softmax(t, z)));
    return sum(t, affine(t, t.leaf(fixed), t.leaf(zero), path));
  };
  auto loss = [&]() {
    Tape t;
    return t.scalar(build(t));
  };

  Tape t;
  t.backward(build(t));
  check_against_fd(w, loss, w.gradient);
  check_against_fd(b, loss, b.gradient);
}

TEST_CASE("concat routes gradients back to each part") {
  Rng rng(17);
  ParameterStore store;
  Parameter& a = store.create("a", 2, 1);
  Parameter& b = store.create("b", 3, 1);
  a.values = random_matrix(rng, 2, 1);
  b.values = random_matrix(rng, 3, 1);
  Parameter& fixed = store.create("fixed", 1, 5);
  fixed.values = random_matrix(rng, 5, 1).transpose();
  Parameter& zero = store.create("zero", 1, 1);

  auto build = [&](Tape& t) {
    const NodeId joined = concat(t, {t.leaf(a), t.leaf(b)});
    return sum(t, affine(t, t.leaf(fixed), t.leaf(zero), joined));
  };
  auto loss = [&]() {
    Tape t;
    return t.scalar(build(t));
  };

  Tape t;
  t.backward(build(t));
  check_against_fd(a, loss, a.gradient);
  check_against_fd(b, loss, b.gradient);

  // The forward value is the stacked vector.
  Tape t2;
  const NodeId joined = concat(t2, {t2.leaf(a), t2.leaf(b)});
  CHECK(t2.value(joined).rows() == 5);
  CHECK(t2.value(joined)(0, 0) == a.values(0, 0));
  CHECK(t2.value(joined)(4, 0) == b.values(2, 0));
}

TEST_CASE("scale and sum behave linearly") {
  ParameterStore store;
  Parameter& p = store.create("p", 3, 1);
  p.values << 1.0, -2.0, 4.0;

  Tape t;
  const NodeId s = sum(t, scale(t, t.leaf(p), 0.5));
  CHECK(t.scalar(s) == doctest::Approx(0.5 * (1.0 - 2.0 + 4.0)));
  t.backward(s);
  CHECK(p.gradient(0, 0) == doctest::Approx(0.5));
  CHECK(p.gradient(2, 0) == doctest::Approx(0.5));
}

TEST_CASE("gradients accumulate across two tapes until cleared") {
  ParameterStore store;
  Parameter& p = store.create("p", 2, 1);
  p.values << 1.0, 1.0;

  for (int pass = 0; pass < 2; ++pass) {
    Tape t;
    t.backward(sum(t, t.leaf(p)));
  }
  CHECK(p.gradient(0, 0) == doctest::Approx(2.0));
  store.zero_gradients();
  CHECK(p.gradient(0, 0) == 0.0);
}

TEST_CASE("boundary margin reports the distance to the nearest relu kink") {
  ParameterStore store;
  Parameter& p = store.create("p", 3, 1);
  p.values << -0.2, 0.05, 1.5;

  Tape t;
  relu(t, t.leaf(p));
  CHECK(t.min_boundary_margin() == doctest::Approx(0.05));

  Tape smooth;
  sigmoid(smooth, smooth.leaf(p));
  CHECK(std::isinf(smooth.min_boundary_margin()));
}

TEST_CASE("scalar accessor rejects non-scalar nodes") {
  ParameterStore store;
  Parameter& p = store.create("p", 2, 1);
  Tape t;
  const NodeId id = t.leaf(p);
  CHECK_THROWS_AS(t.scalar(id), ShapeError);
}
