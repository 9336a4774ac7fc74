#include <cmath>
#include <random>

#include "chainctl/errors.hpp"
#include "chainctl/lie_engine.hpp"
#include "chainctl/linearization.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace chainctl;
namespace ts = testing_support;

TEST_CASE("kronecker indices") {
  CHECK(kronecker_indices(4) == KroneckerIndices{4, 4});
  CHECK(kronecker_indices(3) == KroneckerIndices{4, 2});
  CHECK(kronecker_indices(2) == KroneckerIndices{2, 2});
  CHECK(kronecker_indices(5) == KroneckerIndices{6, 4});
  CHECK_THROWS_AS(kronecker_indices(1), ValidationError);
}

TEST_CASE("flat coordinates by hand") {
  const auto pot = PotentialModel::toda();
  const ChainState s2({0.3, -0.4}, {0.1, 0.7});
  const FlatCoordinates f2 = flat_coordinates(s2, pot);
  CHECK(f2.y == std::vector<double>{0.3, 0.1});
  CHECK(f2.z == std::vector<double>{-0.4, 0.7});

  const ChainState s({0.2, -0.1, 0.5}, {0.4, -0.3, 0.9});
  const FlatCoordinates f = flat_coordinates(s, pot);
  const double a = std::exp(0.2 + 0.1), b = std::exp(-0.1 - 0.5);
  REQUIRE(f.y.size() == 4);
  REQUIRE(f.z.size() == 2);
  CHECK(f.y[0] == -0.1);
  CHECK(f.y[1] == -0.3);
  CHECK(f.y[2] == doctest::Approx(a - b).epsilon(1e-14));
  CHECK(f.y[3] == doctest::Approx(a * (0.4 + 0.3) - b * (-0.3 - 0.9)).epsilon(1e-14));
  CHECK(f.z == std::vector<double>{0.5, 0.9});
}

TEST_CASE("two-particle chart is a permutation") {
  std::mt19937_64 rng(1);
  const FlatChart c = chart_jacobian(ts::gaussian_state(rng, 2), PotentialModel::toda());
  CHECK(std::abs(std::abs(c.jacobian.determinant()) - 1.0) < 1e-14);
  CHECK(c.nonsingular);
  const FlatChart again = chart_jacobian(c.base_point, PotentialModel::toda());
  CHECK((again.jacobian - c.jacobian).norm() == 0.0);
}

TEST_CASE("chart jacobian agrees with finite differences of the chart") {
  std::mt19937_64 rng(2);
  const auto pot = PotentialModel::toda();
  const ChainState s = ts::gaussian_state(rng, 3, 0.5);
  const FlatChart c = chart_jacobian(s, pot);
  const ts::PlainField chart = [&](const Eigen::VectorXd& x) {
    return flat_coordinates(ChainState::from_vector(x), pot).stacked();
  };
  for (int i = 0; i < 6; ++i) {
    const Eigen::VectorXd col = ts::fd_jvp(chart, s.to_vector(), Eigen::VectorXd::Unit(6, i), 1e-3);
    CHECK((c.jacobian.col(i) - col).norm() < 1e-8);
  }
}

TEST_CASE("feedback terms by hand") {
  const auto pot = PotentialModel::toda();
  const ChainState s2({0.3, -0.4}, {0.1, 0.7});
  const FeedbackTerms t = feedback_terms(s2, pot);
  CHECK(t.Y == doctest::Approx(-std::exp(0.7)));
  CHECK(t.Z == doctest::Approx(std::exp(0.7)));
  CHECK(t.lambda() == 1.0);
  CHECK(t.mu() == 1.0);
  CHECK(t.b == 0.0);
  const FeedbackTerms t3 = feedback_terms(ChainState({0.2, -0.1, 0.5}, {0.4, -0.3, 0.9}), pot);
  CHECK(t3.gamma() == 1.0);
  CHECK(t3.odd);
}

TEST_CASE("input coefficients follow the bracket leading terms") {
  // With a relative degree r, L_g L_f^{r-1} h = (-1)^{r-1} L_{ad^{r-1} g} h.
  std::mt19937_64 rng(17);
  const auto pot = PotentialModel::toda();
  for (int n = 2; n <= 5; ++n) {
    const auto [ys, zs] = flat_seeds(n);
    const KroneckerIndices k = kronecker_indices(n);
    for (int trial = 0; trial < 10; ++trial) {
      const ChainState s = ts::gaussian_state(rng, n);
      const FeedbackTerms t = feedback_terms(s, pot);
      // y seed q_ys is reached from the left at particle ys, entry 2 ys.
      const double cu = closed_form_ad(ys, s, Channel::u, AdEntry::even, pot).coefficient;
      CHECK(t.a == doctest::Approx((k.k1 % 2 == 1 ? 1 : -1) * cu).epsilon(1e-10));
      const double cv = closed_form_ad(n - zs + 1, s, Channel::v, AdEntry::even, pot).coefficient;
      CHECK(t.c == doctest::Approx((k.k2 % 2 == 1 ? 1 : -1) * cv).epsilon(1e-10));
      CHECK(std::abs(t.z_u) < 1e-12);
      if (n % 2 == 0) CHECK(t.b == 0.0);
    }
  }
}

TEST_CASE("odd chains: duality of the y chain with the u brackets") {
  std::mt19937_64 rng(19);
  const auto pot = PotentialModel::toda();
  for (int n : {3, 5}) {
    const ControlAffineField field(n, pot);
    const VectorField f = drift_vector_field(field);
    for (int trial = 0; trial < 5; ++trial) {
      const ChainState s = ts::gaussian_state(rng, n);
      const FlatChart c = chart_jacobian(s, pot);
      const auto adu = ad_chain(f, control_vector_field(field, Channel::u), s.to_vector(), n + 1);
      const auto adv = ad_chain(f, control_vector_field(field, Channel::v), s.to_vector(), n - 1);
      for (int r = 1; r <= n + 1; ++r) {
        for (int j = 0; j + r <= n + 1; ++j) {
          const double pairing = c.jacobian.row(r - 1).dot(adu[j]);
          if (j + r < n + 1) {
            CHECK(std::abs(pairing) < 1e-10);
          } else {
            CHECK(std::abs(pairing) > 1e-6);
          }
        }
      }
      for (int r = 1; r <= n - 1; ++r) {
        for (int j = 0; j + r <= n - 1; ++j) {
          const double pairing = c.jacobian.row(n + r).dot(adv[j]);
          if (j + r < n - 1) {
            CHECK(std::abs(pairing) < 1e-10);
          } else {
            CHECK(std::abs(pairing) > 1e-6);
          }
        }
      }
    }
  }
}

TEST_CASE("chart inversion round trip") {
  std::mt19937_64 rng(23);
  const auto pot = PotentialModel::toda();
  for (int n = 2; n <= 5; ++n) {
    for (int trial = 0; trial < 5; ++trial) {
      const ChainState s = ts::gaussian_state(rng, n, 0.7);
      const Eigen::VectorXd w = flat_coordinates(s, pot).stacked();
      Eigen::VectorXd seed = s.to_vector() + 1e-2 * ts::gaussian_vector(rng, 2 * n);
      const auto back = invert_chart(w, ChainState::from_vector(seed), pot);
      REQUIRE(back.has_value());
      CHECK((back->to_vector() - s.to_vector()).norm() < 1e-9);
    }
  }
}

TEST_CASE("hermite interpolation") {
  // Cubic from rest at 0 to rest at 1.
  const Eigen::VectorXd c = hermite_polynomial({0, 0}, {1, 0});
  CHECK(c.size() == 4);
  CHECK(c[2] == doctest::Approx(3.0));
  CHECK(c[3] == doctest::Approx(-2.0));
  CHECK(polynomial_derivative(c, 1, 0.5) == doctest::Approx(1.5));
  CHECK(polynomial_derivative(c, 2, 0.0) == doctest::Approx(6.0));
  CHECK(polynomial_derivative(c, 4, 0.3) == 0.0);
}

TEST_CASE("single particle: classic cubic steering") {
  const double d = 1.5, T = 2.0;
  const SteerResult r = steer_flat(ChainState::at_rest({0.0}), ChainState::at_rest({d}), T,
                                   PotentialModel::toda());
  CHECK(r.max_abs_u == doctest::Approx(6 * d / (T * T)).epsilon(1e-9));
  CHECK(r.endpoint_error < 1e-10);
  CHECK(r.max_v == 0.0);
}

TEST_CASE("steering a fixed point holds the state") {
  const auto pot = PotentialModel::toda();
  const ChainState s = ChainState::at_rest({0.2, -0.3});
  const SteerResult r = steer_flat(s, s, 1.7, pot);
  CHECK(r.endpoint_error <= 1e-8);
  const double hold = std::exp(0.5);
  CHECK(r.max_abs_u == doctest::Approx(hold));
  CHECK(r.min_v == doctest::Approx(-hold));
  CHECK(r.max_v == doctest::Approx(-hold));
}

TEST_CASE("two-particle translation") {
  const SteerResult r = steer_flat(ChainState::at_rest({0.0, 1.0}), ChainState::at_rest({0.5, 1.5}),
                                   3.0, PotentialModel::toda());
  CHECK(r.endpoint_error <= 1e-6);
  CHECK(r.doublings == 0);
}

TEST_CASE("steering honours prescribed end controls") {
  const auto pot = PotentialModel::toda();
  SteerOptions opt;
  opt.u_start = Controls{0.1, -0.2};
  opt.u_end = Controls{-0.3, -0.4};
  std::mt19937_64 rng(29);
  const ChainState a = ts::gaussian_state(rng, 3, 0.3);
  const ChainState b = ChainState::from_vector(a.to_vector() + 0.2 * ts::gaussian_vector(rng, 6));
  const SteerResult r = steer_flat(a, b, 5.0, pot, opt);
  CHECK(r.endpoint_error <= 1e-6);
  const Controls c0 = r.signal(0.0, a.to_vector());
  const Controls c1 = r.signal(r.T, b.to_vector());
  CHECK(c0.u == doctest::Approx(0.1).epsilon(1e-8));
  CHECK(c0.v == doctest::Approx(-0.2).epsilon(1e-8));
  CHECK(c1.u == doctest::Approx(-0.3).epsilon(1e-8));
  CHECK(c1.v == doctest::Approx(-0.4).epsilon(1e-8));
}

TEST_CASE("vanishing stiffness is reported") {
  // Three particles: alpha = phi'(q_1 - q_2), zero inside the dead zone.
  const ChainState a = ChainState::at_rest({0.0, 0.2, 0.0});
  CHECK_THROWS_AS(steer_flat(a, ChainState::at_rest({0.1, 0.3, 0.1}), 2.0, PotentialModel::deadzone()),
                  NumericalError);
}

TEST_CASE("normal form along a free trajectory") {
  const auto pot = PotentialModel::toda();
  const ControlAffineField field(2, pot);
  const Trajectory tr = simulate(field, ChainState({0.1, -0.2}, {0.3, 0.0}), ControlSignal(), 5.0);
  const NormalFormReport rep = verify_normal_form(tr, pot);
  CHECK(rep.max_chain_residual <= 1e-4);
  CHECK(rep.max_top_residual <= 1e-4);
  CHECK(rep.min_abs_product == 1.0);
}

TEST_CASE("normal form under bang-bang controls, switches excluded") {
  const auto pot = PotentialModel::toda();
  const ControlAffineField field(3, pot);
  const std::vector<double> knots{0.0, 1.3, 2.9, 5.0};
  const auto sig = ControlSignal::piecewise_constant(knots, {1.0, -1.0, 1.0}, {-1.0, 0.0, -1.0});
  const Trajectory tr = simulate(field, ChainState({0.1, -0.2, 0.0}, {0.3, 0.0, -0.1}), sig, 5.0);
  const NormalFormReport rep = verify_normal_form(tr, pot, {1.3, 2.9});
  CHECK(rep.max_chain_residual <= 1e-4);
  CHECK(rep.max_top_residual <= 1e-4);
  CHECK(rep.samples_excluded >= 2);
  const NormalFormReport raw = verify_normal_form(tr, pot);
  CHECK(raw.max_top_residual > 0.1);
}

TEST_CASE("endpoint map jacobian: finite-difference oracle and constant rank") {
  const auto pot = PotentialModel::toda();
  const ChainState x0({0.0, 0.5}, {0.1, -0.1});
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const int N = 6;
  std::vector<double> u(N), v(N);
  for (int i = 0; i < N; ++i) {
    u[i] = U(rng);
    v[i] = U(rng);
  }
  const double T = 2.0;
  const Eigen::MatrixXd J = endpoint_map_jacobian(x0, u, v, T, pot, 50);
  const ControlAffineField field(2, pot);
  auto endpoint = [&](const std::vector<double>& uu, const std::vector<double>& vv) {
    std::vector<double> knots;
    for (int i = 0; i <= N; ++i) knots.push_back(T * i / N);
    SimulationOptions o;
    o.step = T / N / 50;
    return simulate(field, x0, ControlSignal::piecewise_constant(knots, uu, vv), T, o).final_state();
  };
  const double h = 1e-5;
  for (int i = 0; i < N; ++i) {
    auto up = u, um = u;
    up[i] += h;
    um[i] -= h;
    const Eigen::VectorXd col = (endpoint(up, v) - endpoint(um, v)) / (2 * h);
    CHECK((col - J.col(i)).norm() < 1e-7);
  }
  CHECK(distribution_rank({J.col(0), J.col(1), J.col(2), J.col(3), J.col(4), J.col(5), J.col(6),
                           J.col(7), J.col(8), J.col(9), J.col(10), J.col(11)},
                          1e-6) == 4);
}
