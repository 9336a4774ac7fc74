#include <cmath>
#include <stdexcept>

#include "chainctl/jet.hpp"
#include "doctest.h"

using chainctl::Jet;
using chainctl::JetVec;

TEST_CASE("single generator behaves like a dual number") {
  JetVec x{Jet(2.0)};
  JetVec dx{Jet(1.0)};
  const JetVec xp = chainctl::perturb(x, dx);
  REQUIRE(xp[0].generators() == 1);
  const Jet y = xp[0] * xp[0] * xp[0];
  CHECK(y.value() == doctest::Approx(8.0));
  CHECK(y.derivative(0).value() == doctest::Approx(12.0));
}

TEST_CASE("nested generators give mixed partials") {
  // f(x) = exp(x) / x; second directional derivative along 1, 1.
  const double x0 = 0.7;
  JetVec x{Jet(x0)};
  JetVec one{Jet(1.0)};
  JetVec a = chainctl::perturb(x, one);
  JetVec b = chainctl::perturb(a, JetVec{chainctl::Jet::constant(1.0, 1)});
  const Jet f = chainctl::exp(b[0]) / b[0];
  const double d2 = f.derivative(1).derivative(0).value();
  const double exact = std::exp(x0) * (1 / x0 - 2 / (x0 * x0) + 2 / (x0 * x0 * x0));
  CHECK(d2 == doctest::Approx(exact).epsilon(1e-13));
}

TEST_CASE("sqrt and reciprocal") {
  JetVec a = chainctl::perturb(JetVec{Jet(4.0)}, JetVec{Jet(1.0)});
  CHECK(chainctl::sqrt(a[0]).derivative(0).value() == doctest::Approx(0.25));
  CHECK(chainctl::reciprocal(a[0]).derivative(0).value() == doctest::Approx(-1.0 / 16));
}

TEST_CASE("compose refuses a short derivative table") {
  JetVec a = chainctl::perturb(JetVec{Jet(0.0)}, JetVec{Jet(1.0)});
  a = chainctl::perturb(a, JetVec{Jet::constant(1.0, 1)});
  const double table[2] = {1.0, 1.0};
  CHECK_THROWS_AS(Jet::compose(a[0], table), std::domain_error);
}

TEST_CASE("base_part with a generator the jet does not use") {
  const Jet c = Jet::constant(3.0, 1);
  CHECK(c.base_part(2).value() == 3.0);
  CHECK(c.derivative(2).is_zero());
}
