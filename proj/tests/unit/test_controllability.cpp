#include <cmath>
#include <random>

#include "chainctl/controllability.hpp"
#include "chainctl/errors.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace chainctl;
namespace ts = testing_support;

TEST_CASE("confining feedback closed forms") {
  const ConfiningFeedback fb = make_confining_feedback(3.0);
  CHECK(fb.u_f(0.0) == doctest::Approx(1.5));
  CHECK(fb.v_f(0.0) == doctest::Approx(-1.5));
  CHECK(fb.u_f(1e8) < 1e-6);
  CHECK(fb.v_f(-1e8) > -1e-6);
  // u_f = -U', v_f = -V' by central differences.
  for (double q : {-3.0, -0.2, 0.0, 0.7, 4.0}) {
    const double h = 1e-5;
    CHECK(fb.u_f(q) == doctest::Approx(-(fb.U(q + h) - fb.U(q - h)) / (2 * h)).epsilon(1e-8));
    CHECK(fb.v_f(q) == doctest::Approx(-(fb.V(q + h) - fb.V(q - h)) / (2 * h)).epsilon(1e-8));
  }
  CHECK_THROWS_AS(make_confining_feedback(0.0), ValidationError);
}

TEST_CASE("feedback grid audit") {
  const ConfiningFeedback fb = make_confining_feedback(0.7);
  for (double q = -1000.0; q <= 1000.0; q += 0.25) {
    CHECK(std::abs(fb.u_f(q)) <= fb.omega);
    CHECK(fb.v_f(q) >= -fb.omega);
    CHECK(fb.v_f(q) <= 0.0);
    CHECK(fb.U(q) >= fb.U_lower);
    CHECK(fb.V(q) >= fb.V_lower);
  }
}

TEST_CASE("modified hamiltonian at the origin") {
  const ConfiningFeedback fb = make_confining_feedback(1.0);
  for (int n = 1; n <= 5; ++n) {
    const ChainState zero(std::vector<double>(n, 0.0), std::vector<double>(n, 0.0));
    CHECK(modified_hamiltonian(zero, PotentialModel::toda(), fb) == doctest::Approx(n));
  }
  const ChainState s({0.3, -0.2}, {1.0, 0.5});
  CHECK(modified_hamiltonian(s, PotentialModel::toda(), fb) - total_energy(s, PotentialModel::toda()) ==
        doctest::Approx(fb.U(0.3) + fb.V(-0.2)));
}

TEST_CASE("closed loop conserves H_f and stays in the box") {
  const auto pot = PotentialModel::toda();
  const ConfiningFeedback fb = make_confining_feedback(1.0);
  std::mt19937_64 rng(41);
  for (int n = 1; n <= 4; ++n) {
    for (int trial = 0; trial < 3; ++trial) {
      const ChainState x0 = ts::gaussian_state(rng, n, 0.5);
      const double c = modified_hamiltonian(x0, pot, fb);
      const EnergyBox box = energy_box(c, n, pot, fb);
      REQUIRE_FALSE(box.empty);
      SimulationOptions opt;
      opt.step = 2e-3;
      const Trajectory tr = simulate(ControlAffineField(n, pot), x0, closed_loop_signal(fb, n), 30.0, opt);
      REQUIRE_FALSE(tr.truncated);
      double drift = 0.0;
      for (const auto& x : tr.x) {
        const ChainState s = ChainState::from_vector(x);
        drift = std::max(drift, std::abs(modified_hamiltonian(s, pot, fb) - c));
        CHECK(box.contains(s));
      }
      CHECK(drift <= 1e-6 * (1 + std::abs(c)));
    }
  }
}

TEST_CASE("energy box shape") {
  const auto pot = PotentialModel::toda();
  const ConfiningFeedback fb = make_confining_feedback(1.0);
  const EnergyBox one = energy_box(2.0, 1, pot, fb);
  CHECK(one.lower[0] == doctest::Approx(-one.b));
  CHECK(one.upper[0] == doctest::Approx(one.b));
  // U_f(-b) = 2 by symmetry of the closed forms.
  CHECK(fb.U(-one.b) == doctest::Approx(2.0).epsilon(1e-10));

  const EnergyBox three = energy_box(4.0, 3, pot, fb);
  CHECK(three.lower == std::vector<double>{-three.b, -2 * three.b, -3 * three.b});
  CHECK(three.upper[0] == doctest::Approx(3 * three.b));
  CHECK(three.momentum_bound == doctest::Approx(8.0));
  double prev = -1.0;
  for (double c = 0.5; c < 50.0; c *= 1.7) {
    const double b = energy_box(c, 3, pot, fb).b;
    CHECK(b >= prev);
    prev = b;
  }
  CHECK(energy_box(-1.0, 3, pot, fb).empty);
}

TEST_CASE("momentum bound is attained up to a factor of one") {
  // All of H_f in kinetic energy: |p|^2 = 2 c - 2 (U + V) just below the bound.
  const auto pot = PotentialModel::toda();
  const ConfiningFeedback fb = make_confining_feedback(1e-6);
  const ChainState s({0.0}, {3.0});
  const double c = modified_hamiltonian(s, pot, fb);
  const EnergyBox box = energy_box(c, 1, pot, fb);
  CHECK(9.0 <= box.momentum_bound);
  CHECK(9.0 > c);  // the bound c + B alone would be violated
}

TEST_CASE("waypoint gap") {
  CHECK(waypoint_gap(PotentialModel::toda(), 2.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::exp(waypoint_gap(PotentialModel::toda(), 0.5)) == doctest::Approx(0.25));
}

TEST_CASE("demonstration: trivial and translation") {
  const auto pot = PotentialModel::toda();
  const ChainState a = ChainState::at_rest({0.0, 0.0});
  const ControllabilityResult same = demonstrate_controllability(a, a, 2.0, pot);
  CHECK(same.success);
  CHECK(same.segments.empty());
  CHECK(same.T_total == 0.0);

  const ControllabilityResult r = demonstrate_controllability(a, ChainState::at_rest({1.0, 1.0}), 2.0, pot);
  CHECK(r.success);
  CHECK(r.endpoint_error <= 1e-5);
  CHECK(r.constraints_respected);
  CHECK(r.max_abs_u <= 2.0);
  CHECK(r.min_v >= -2.0);
  CHECK(r.max_v <= 0.0);
  for (std::size_t i = 0; i < r.trajectory.size(); ++i) {
    CHECK(std::abs(r.trajectory.u[i]) <= 2.0);
    CHECK(r.trajectory.v[i] <= 0.0);
    CHECK(r.trajectory.v[i] >= -2.0);
  }
}

TEST_CASE("demonstration: smaller budget never needs less time") {
  const auto pot = PotentialModel::toda();
  const ChainState a = ChainState::at_rest({0.0, 2.5});
  const ChainState b = ChainState::at_rest({1.0, 3.5});
  const ControllabilityResult big = demonstrate_controllability(a, b, 2.0, pot);
  const ControllabilityResult small = demonstrate_controllability(a, b, 0.2, pot);
  REQUIRE(big.success);
  REQUIRE(small.success);
  CHECK(small.T_total >= big.T_total);
}

TEST_CASE("demonstration via waypoints") {
  // Widely spaced chain: the right particle is pushed only by the weak
  // interaction, so a direct transfer within a quarter of the budget fails
  // and the route closes the gap first, translates, and reopens it.
  const auto pot = PotentialModel::toda();
  const ChainState a = ChainState::at_rest({0.0, 2.5});
  const ChainState b = ChainState::at_rest({6.0, 8.5});
  ControllabilityOptions opt;
  opt.budget = 60.0;
  const ControllabilityResult r = demonstrate_controllability(a, b, 2.0, pot, opt);
  CHECK(r.success);
  CHECK(r.segments.size() >= 3);
  CHECK(r.constraints_respected);
  CHECK(r.endpoint_error <= 1e-5);
  CHECK(r.T_total <= 60.0);
}

TEST_CASE("demonstration reports an exhausted budget") {
  const auto pot = PotentialModel::toda();
  ControllabilityOptions opt;
  opt.budget = 3.0;
  const ControllabilityResult r =
      demonstrate_controllability(ChainState::at_rest({0.0, 2.5}), ChainState::at_rest({6.0, 8.5}), 2.0, pot, opt);
  CHECK_FALSE(r.success);
  CHECK(r.endpoint_error > 0.0);
  CHECK(r.message.find("budget") != std::string::npos);
}
