#include <cmath>
#include <random>

#include "chainctl/errors.hpp"
#include "chainctl/lie_engine.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace chainctl;
namespace ts = testing_support;

namespace {

std::vector<Eigen::VectorXd> fd_ad_chain(const ControlAffineField& field, Channel c, const Eigen::VectorXd& x,
                                         int m) {
  // Finite-difference nesting loses about three digits per level; keep m small.
  ts::PlainField f = [&field](const Eigen::VectorXd& y) { return field.drift(y); };
  const Eigen::VectorXd e = field.control_direction(c);
  ts::PlainField g = [e](const Eigen::VectorXd&) { return e; };
  std::vector<Eigen::VectorXd> out;
  for (int j = 0; j < m; ++j) {
    out.push_back(g(x));
    g = ts::fd_bracket(f, g, 1e-3);
  }
  return out;
}

Eigen::VectorXd coordinate(int n, CoordinateDirection d) {
  return Eigen::VectorXd::Unit(2 * n, d.index(n));
}

}  // namespace

TEST_CASE("first brackets by hand") {
  const ControlAffineField field(2, PotentialModel::toda());
  const VectorField f = drift_vector_field(field);
  const auto chain = ad_chain(f, control_vector_field(field, Channel::u), Eigen::VectorXd::Zero(4), 4);
  CHECK((chain[0] - Eigen::Vector4d(0, 0, 1, 0)).norm() == 0.0);
  CHECK((chain[1] - Eigen::Vector4d(-1, 0, 0, 0)).norm() < 1e-15);
  CHECK((chain[2] - Eigen::Vector4d(0, 0, -1, 1)).norm() < 1e-14);
  CHECK((chain[3] - Eigen::Vector4d(1, -1, 0, 0)).norm() < 1e-14);
}

TEST_CASE("nested jets agree with nested finite differences") {
  std::mt19937_64 rng(3);
  for (int n : {1, 2, 3}) {
    const ControlAffineField field(n, PotentialModel::toda());
    const VectorField f = drift_vector_field(field);
    for (Channel c : {Channel::u, Channel::v}) {
      const Eigen::VectorXd x = ts::gaussian_state(rng, n, 0.5).to_vector();
      const auto exact = ad_chain(f, control_vector_field(field, c), x, 3);
      const auto approx = fd_ad_chain(field, c, x, 3);
      for (int j = 0; j < 3; ++j) {
        CHECK((exact[j] - approx[j]).norm() <= 1e-5 * (1 + exact[j].norm()));
      }
    }
  }
}

TEST_CASE("jvp is exact against finite differences") {
  std::mt19937_64 rng(5);
  const ControlAffineField field(3, PotentialModel::softplus());
  const VectorField f = drift_vector_field(field);
  const Eigen::VectorXd x = ts::gaussian_vector(rng, 6);
  const Eigen::VectorXd v = ts::gaussian_vector(rng, 6);
  const ts::PlainField F = [&](const Eigen::VectorXd& y) { return field.drift(y); };
  CHECK((f.jvp(x, v) - ts::fd_jvp(F, x, v, 1e-3)).norm() < 1e-9);
}

TEST_CASE("closed-form leading terms match the bracket engine") {
  std::mt19937_64 rng(7);
  for (int n = 1; n <= 5; ++n) {
    const auto pot = PotentialModel::toda();
    const ControlAffineField field(n, pot);
    const VectorField f = drift_vector_field(field);
    for (int trial = 0; trial < 5; ++trial) {
      const ChainState s = ts::gaussian_state(rng, n);
      for (Channel c : {Channel::u, Channel::v}) {
        const auto chain = ad_chain(f, control_vector_field(field, c), s.to_vector(), 2 * n);
        for (int k = 1; k <= n; ++k) {
          for (AdEntry e : {AdEntry::odd, AdEntry::even}) {
            const ClosedFormAd cf = closed_form_ad(k, s, c, e, pot);
            std::vector<Eigen::VectorXd> basis;
            for (const auto& d : cf.residual_basis) basis.push_back(coordinate(n, d));
            const int entry = e == AdEntry::odd ? 2 * k - 1 : 2 * k;
            const Eigen::VectorXd& vec = chain[entry - 1];
            const double lead = leading_coefficient(vec, basis, coordinate(n, cf.direction));
            CHECK(lead == doctest::Approx(cf.coefficient).epsilon(1e-9));
            // Nothing outside the residual subspace and the leading direction.
            Eigen::VectorXd rest = vec - lead * coordinate(n, cf.direction);
            for (const auto& d : cf.residual_basis) rest[d.index(n)] = 0.0;
            CHECK(rest.norm() <= 1e-9 * (1 + vec.norm()));
          }
        }
      }
    }
  }
}

TEST_CASE("odd entries carry +mu, even entries -mu, independent of k") {
  // The sign of the d/dp_k coefficient does not alternate with k.
  const auto pot = PotentialModel::toda();
  const ChainState s = ChainState::at_rest({0.0, -1.0});
  const ClosedFormAd a = closed_form_ad(2, s, Channel::u, AdEntry::odd, pot);
  CHECK(a.coefficient == doctest::Approx(std::exp(1.0)));
  CHECK(a.direction == CoordinateDirection{true, 2});
  const ClosedFormAd b = closed_form_ad(2, s, Channel::u, AdEntry::even, pot);
  CHECK(b.coefficient == doctest::Approx(-std::exp(1.0)));
}

TEST_CASE("rank profile of the Toda chain matches the coordinate prediction") {
  std::mt19937_64 rng(13);
  for (int n = 1; n <= 5; ++n) {
    const RankProfile want = predicted_rank_profile(n);
    for (int trial = 0; trial < 10; ++trial) {
      const RankProfile got = delta_rank_profile(ts::gaussian_state(rng, n), PotentialModel::toda());
      CHECK(got == want);
    }
    CHECK(want.delta.back() == 2 * n);
  }
}

TEST_CASE("predicted profile closed forms") {
  const RankProfile p = predicted_rank_profile(4);
  for (int m = 1; m <= 8; ++m) {
    CHECK(p.lambda[m - 1] == m);
    CHECK(p.xi[m - 1] == m);
    CHECK(p.delta[m - 1] == std::min(2 * m, 8));
  }
  CHECK(predicted_rank_profile(1).delta == std::vector<int>{1, 2});
}

TEST_CASE("dead zone drops the rank") {
  const ChainState s = ChainState::at_rest({0.0, 0.2, 0.1});
  const RankProfile got = delta_rank_profile(s, PotentialModel::deadzone());
  CHECK(got.delta.back() < 6);
  CHECK(got.lambda.back() == 2);
}

TEST_CASE("lie derivatives of coordinates") {
  const ControlAffineField field(2, PotentialModel::toda());
  const VectorField f = drift_vector_field(field);
  const Eigen::Vector4d x(0.3, -0.1, 0.7, 0.2);
  CHECK(lie_derivative(ScalarField::coordinate(0), f).eval(x) == doctest::Approx(0.7));
  const ScalarField l2 = lie_derivative(lie_derivative(ScalarField::coordinate(0), f), f);
  CHECK(l2.eval(x) == doctest::Approx(-std::exp(0.4)));
  const Eigen::VectorXd grad = l2.gradient(x);
  CHECK(grad[0] == doctest::Approx(-std::exp(0.4)));
  CHECK(grad[1] == doctest::Approx(std::exp(0.4)));
}

TEST_CASE("involutivity") {
  const ControlAffineField field(2, PotentialModel::toda());
  const Eigen::VectorXd x = Eigen::Vector4d(0.1, 0.2, 0.3, 0.4);
  const VectorField gu = control_vector_field(field, Channel::u);
  const VectorField f = drift_vector_field(field);
  CHECK(involutivity_check({gu, bracket(f, gu)}, x).involutive);
  const InvolutivityReport r = involutivity_check({gu, f}, x);
  CHECK_FALSE(r.involutive);
  CHECK(r.rank == 2);
}

TEST_CASE("ad_chain argument checks") {
  const ControlAffineField field(2, PotentialModel::toda());
  const VectorField f = drift_vector_field(field);
  const VectorField g = control_vector_field(field, Channel::u);
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(4);
  CHECK_THROWS_AS(ad_chain(f, g, x, 0), ValidationError);
  CHECK_THROWS_AS(ad_chain(f, g, x, 8), ValidationError);
  CHECK_NOTHROW(ad_chain(f, g, x, 7));
}

TEST_CASE("distribution rank is scale invariant") {
  std::vector<Eigen::VectorXd> v{Eigen::Vector3d(1e-6, 0, 0), Eigen::Vector3d(0, 1e6, 0),
                                 Eigen::Vector3d(1, 1, 0)};
  CHECK(distribution_rank(v) == 2);
  v.push_back(Eigen::Vector3d::Zero());
  CHECK(distribution_rank(v) == 2);
}
