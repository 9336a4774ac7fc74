#include <cmath>
#include <random>

#include "chainctl/chain_dynamics.hpp"
#include "chainctl/errors.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace chainctl;

TEST_CASE("drift matches the chain equations") {
  const ControlAffineField field(3, PotentialModel::toda());
  const ChainState s({0.1, -0.2, 0.4}, {1.0, 2.0, 3.0});
  const Eigen::VectorXd f = field.drift(s.to_vector());
  const auto e = [](double y) { return std::exp(y); };
  CHECK(f[0] == 1.0);
  CHECK(f[2] == 3.0);
  CHECK(f[3] == doctest::Approx(-e(0.1 + 0.2)));
  CHECK(f[4] == doctest::Approx(e(0.3) - e(-0.6)));
  CHECK(f[5] == doctest::Approx(e(-0.6)));
}

TEST_CASE("controls enter p_1 and p_n") {
  const ControlAffineField field(2, PotentialModel::toda());
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(4);
  const Eigen::VectorXd d = field.controlled(x, 2.0, -1.0) - field.drift(x);
  CHECK(d[2] == 2.0);
  CHECK(d[3] == -1.0);
  CHECK(d.head(2).norm() == 0.0);
}

TEST_CASE("drift jacobian agrees with finite differences") {
  std::mt19937_64 rng(11);
  const ControlAffineField field(4, PotentialModel::toda());
  const Eigen::VectorXd x = testing_support::gaussian_state(rng, 4, 0.5).to_vector();
  const Eigen::MatrixXd J = field.drift_jacobian(x);
  const testing_support::PlainField F = [&](const Eigen::VectorXd& y) { return field.drift(y); };
  for (int i = 0; i < 8; ++i) {
    const Eigen::VectorXd col = testing_support::fd_jvp(F, x, Eigen::VectorXd::Unit(8, i), 1e-4);
    CHECK((J.col(i) - col).norm() < 1e-8);
  }
}

TEST_CASE("free Toda flow conserves energy with every integrator") {
  const ControlAffineField field(3, PotentialModel::toda());
  const ChainState x0({0.3, 0.0, -0.4}, {0.5, -0.2, 0.1});
  const double H0 = total_energy(x0, PotentialModel::toda());
  for (Integrator it : {Integrator::rk4, Integrator::leapfrog, Integrator::yoshida4}) {
    SimulationOptions opt;
    opt.integrator = it;
    opt.step = 1e-3;
    const Trajectory tr = simulate(field, x0, ControlSignal(), 20.0, opt);
    REQUIRE_FALSE(tr.truncated);
    const double drift = std::abs(
        total_energy(ChainState::from_vector(tr.final_state()), PotentialModel::toda()) - H0);
    CHECK(drift < (it == Integrator::leapfrog ? 1e-5 : 1e-9));
  }
}

TEST_CASE("momentum sum changes only through the controls") {
  const ControlAffineField field(3, PotentialModel::toda());
  const ChainState x0({0.0, 0.5, 1.0}, {0.0, 0.0, 0.0});
  const Trajectory tr = simulate(field, x0, ControlSignal::constant(0.4, -0.1), 2.0);
  const Eigen::VectorXd xf = tr.final_state();
  CHECK(xf.tail(3).sum() == doctest::Approx(0.6).epsilon(1e-10));
}

TEST_CASE("piecewise-constant signals are exact on their pieces") {
  // Double integrator: u = 1 on [0, 1), -1 on [1, 2) from rest ends at rest, q = 1.
  const ControlAffineField field(1, PotentialModel::toda());
  const auto sig = ControlSignal::piecewise_constant({0.0, 1.0, 2.0}, {1.0, -1.0}, {0.0, 0.0});
  SimulationOptions opt;
  opt.step = 0.3;  // knot at 1.0 falls inside a step
  const Trajectory tr = simulate(field, ChainState::at_rest({0.0}), sig, 2.0, opt);
  CHECK(tr.final_state()[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(tr.final_state()[1]) < 1e-12);
}

TEST_CASE("overflow truncates with a gap diagnostic") {
  const ControlAffineField field(2, PotentialModel::toda());
  const ChainState x0({800.0, 0.0}, {0.0, 0.0});
  const Trajectory tr = simulate(field, x0, ControlSignal(), 1.0);
  CHECK(tr.truncated);
  CHECK(tr.diagnostic.find("q1 - q2") != std::string::npos);
}

TEST_CASE("state validation") {
  CHECK_THROWS_AS(ChainState({1.0, 2.0}, {0.0}).validate(), ValidationError);
  CHECK_THROWS_AS(ChainState({NAN}, {0.0}).validate(), ValidationError);
  CHECK_THROWS_AS(ChainState({}, {}).validate(), ValidationError);
}

TEST_CASE("cubic sampled signals reproduce cubics and respect joins") {
  auto p = [](double t) { return 1.0 - 2.0 * t + 0.5 * t * t * t; };
  // A kink at t = 1: cubic on the left, linear on the right.
  auto kinked = [&](double t) { return t <= 1.0 ? p(t) : p(1.0) + 3.0 * (t - 1.0); };
  std::vector<double> t, u, v;
  for (int i = 0; i <= 20; ++i) {
    t.push_back(0.1 * i);
    u.push_back(kinked(0.1 * i));
    v.push_back(-0.5);
  }
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  const auto joined = ControlSignal::sampled(t, u, v, Interpolation::cubic, {t[10]});
  const auto plain = ControlSignal::sampled(t, u, v, Interpolation::cubic);
  double worst_joined = 0.0, worst_plain = 0.0;
  for (double s = 0.0; s <= 2.0; s += 0.0137) {
    worst_joined = std::max(worst_joined, std::abs(joined(s, x).u - kinked(s)));
    worst_plain = std::max(worst_plain, std::abs(plain(s, x).u - kinked(s)));
    CHECK(joined(s, x).v == doctest::Approx(-0.5));
  }
  CHECK(worst_joined < 1e-12);
  CHECK(worst_plain > 1e-4);
  CHECK_THROWS_AS(ControlSignal::sampled(t, u, v, Interpolation::cubic, {0.55}), ValidationError);
}

TEST_CASE("cubic overshoot is clamped into declared bounds") {
  // Samples of a bump touching u = 1: the interpolant overshoots between them.
  std::vector<double> t{0, 1, 2, 3, 4}, u{0, 1, 1, 0, 0}, v{0, 0, 0, 0, 0};
  auto s = ControlSignal::sampled(t, u, v, Interpolation::cubic);
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  CHECK(s(1.5, x).u > 1.0);
  s.bounds = ControlBounds::rectangle(1.0);
  for (double r = 0.0; r <= 4.0; r += 0.01) CHECK(s.bounds->contains(s(r, x)));
}
