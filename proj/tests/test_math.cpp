#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "moehealth/errors.hpp"
#include "moehealth/math.hpp"

using namespace moehealth;

namespace {

Vector vec(std::initializer_list<real_t> xs) {
  Vector v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (real_t x : xs) v[i++] = x;
  return v;
}

}  // namespace

TEST_CASE("linear_forward computes W*x + b") {
  Matrix w(2, 3);
  w << 1, 2, 3, 4, 5, 6;
  const Vector b = vec({0.5, -0.5});
  const Vector x = vec({1, 0, -1});

  const Vector y = linear_forward(w, b, x);
  REQUIRE(y.size() == 2);
  CHECK(y[0] == doctest::Approx(1 * 1 + 2 * 0 + 3 * -1 + 0.5));
  CHECK(y[1] == doctest::Approx(4 * 1 + 5 * 0 + 6 * -1 - 0.5));
}

TEST_CASE("linear_forward rejects mismatched shapes") {
  Matrix w(2, 3);
  w.setZero();
  const Vector b2 = Vector::Zero(2);
  const Vector b3 = Vector::Zero(3);
  const Vector x3 = Vector::Zero(3);
  const Vector x2 = Vector::Zero(2);

  CHECK_THROWS_AS(linear_forward(w, b2, x2), ShapeError);
  CHECK_THROWS_AS(linear_forward(w, b3, x3), ShapeError);
  CHECK_NOTHROW(linear_forward(w, b2, x3));
}

TEST_CASE("softmax matches the worked four-logit example") {
  const Vector p = softmax(vec({2.0, 1.0, 0.0, -1.0}));
  REQUIRE(p.size() == 4);
  CHECK(p[0] == doctest::Approx(0.6439).epsilon(1e-3));
  CHECK(p[1] == doctest::Approx(0.2369).epsilon(1e-3));
  CHECK(p[2] == doctest::Approx(0.0871).epsilon(1e-3));
  CHECK(p[3] == doctest::Approx(0.0321).epsilon(1e-3));
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax entries are positive and sum to one") {
  const Vector p = softmax(vec({-3.0, 0.0, 5.5, 2.25, -1.0}));
  CHECK(p.minCoeff() > 0.0);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax is invariant to a constant shift of the logits") {
  const Vector base = vec({0.3, -1.2, 2.7, 0.0});
  const Vector a = softmax(base);
  const Vector b = softmax(base.array() + 123.456);
  for (Index i = 0; i < a.size(); ++i) {
    CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("softmax stays finite for extreme logits") {
  const Vector p = softmax(vec({1000.0, 0.0, -1000.0}));
  CHECK(p.allFinite());
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("softmax rejects empty and non-finite input") {
  CHECK_THROWS_AS(softmax(Vector()), ValueError);
  CHECK_THROWS_AS(softmax(vec({1.0, std::numeric_limits<real_t>::quiet_NaN()})), ValueError);
  CHECK_THROWS_AS(softmax(vec({1.0, std::numeric_limits<real_t>::infinity()})), ValueError);
}

TEST_CASE("relu clips negatives and keeps positives") {
  const Vector y = relu(vec({-2.0, 0.0, 3.5}));
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 3.5);
}

TEST_CASE("sigmoid maps 0 to one half and is bounded") {
  CHECK(sigmoid(0.0) == doctest::Approx(0.5));
  CHECK(sigmoid(30.0) < 1.0);  // beyond ~37 the double rounds to 1.0 exactly
  CHECK(sigmoid(-50.0) > 0.0);
  const Vector y = sigmoid(vec({-4.0, 0.0, 4.0}));
  CHECK(y[1] == doctest::Approx(0.5));
  CHECK(y[0] == doctest::Approx(1.0 - y[2]).epsilon(1e-12));
}
