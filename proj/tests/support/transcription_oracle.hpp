#pragma once

// Direct transcription of the minimum-time problem: N piecewise-constant
// segments per channel, T found by bisection on feasibility. Bounds are
// handled by the substitution u = omega sin a, v = -(omega/2)(1 - sin b),
// so the inner solve is unconstrained Gauss-Newton on the endpoint error.
// Any control it produces is admissible, so its T can only sit above the
// true minimum.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "chainctl/chain_dynamics.hpp"
#include "chainctl/linearization.hpp"

namespace testing_support {

struct TranscriptionResult {
  double T = 0.0;
  double endpoint_error = 0.0;
  std::vector<double> u, v;
};

class TranscriptionOracle {
 public:
  TranscriptionOracle(chainctl::ChainState x0, chainctl::ChainState x1, double omega,
                      chainctl::PotentialModel pot, int segments = 40, int substeps = 10)
      : x0_(std::move(x0)), x1_(std::move(x1)), omega_(omega), pot_(std::move(pot)),
        N_(segments), sub_(substeps), a_(Eigen::VectorXd::Zero(2 * segments)) {}

  // Feasible to `tol` at horizon T (warm-started from the last call).
  bool feasible(double T, double tol, int iters = 60) {
    Eigen::VectorXd a = a_;
    double lambda = 1e-3;
    double err = residual(a, T).norm();
    for (int it = 0; it < iters && err > tol; ++it) {
      const Eigen::VectorXd r = residual(a, T);
      const Eigen::MatrixXd J = jacobian(a, T);
      bool moved = false;
      for (int k = 0; k < 10; ++k) {
        const Eigen::MatrixXd A = J * J.transpose() +
                                  lambda * Eigen::MatrixXd::Identity(J.rows(), J.rows());
        const Eigen::VectorXd d = -J.transpose() * A.ldlt().solve(r);
        const Eigen::VectorXd b = a + d;
        const double e = residual(b, T).norm();
        if (e < err) {
          a = b;
          err = e;
          lambda = std::max(lambda / 5.0, 1e-12);
          moved = true;
          break;
        }
        lambda *= 10.0;
      }
      if (!moved) break;
    }
    if (err <= tol) {
      a_ = a;
      last_error_ = err;
      return true;
    }
    return false;
  }

  // Smallest feasible T in [lo, hi] to relative `rel`; hi must be feasible.
  TranscriptionResult solve(double lo, double hi, double tol = 1e-8, double rel = 1e-4) {
    TranscriptionResult out;
    if (!feasible(hi, tol)) return out;
    Eigen::VectorXd best = a_;
    double best_err = last_error_;
    while (hi - lo > rel * hi) {
      const double mid = 0.5 * (lo + hi);
      if (feasible(mid, tol)) {
        hi = mid;
        best = a_;
        best_err = last_error_;
      } else {
        lo = mid;
        a_ = best;
      }
    }
    out.T = hi;
    out.endpoint_error = best_err;
    controls(best, out.u, out.v);
    return out;
  }

 private:
  void controls(const Eigen::VectorXd& a, std::vector<double>& u, std::vector<double>& v) const {
    u.resize(N_);
    v.resize(N_);
    for (int i = 0; i < N_; ++i) {
      u[i] = omega_ * std::sin(a[i]);
      v[i] = -0.5 * omega_ * (1.0 - std::sin(a[N_ + i]));
    }
  }

  Eigen::VectorXd residual(const Eigen::VectorXd& a, double T) const {
    std::vector<double> u, v;
    controls(a, u, v);
    std::vector<double> knots(N_ + 1);
    for (int i = 0; i <= N_; ++i) knots[i] = T * i / N_;
    const chainctl::ControlAffineField field(x0_.n(), pot_);
    chainctl::SimulationOptions so;
    so.step = T / (N_ * sub_);
    const auto tr = chainctl::simulate(field, x0_,
                                       chainctl::ControlSignal::piecewise_constant(knots, u, v),
                                       T, so);
    return tr.final_state() - x1_.to_vector();
  }

  Eigen::MatrixXd jacobian(const Eigen::VectorXd& a, double T) const {
    std::vector<double> u, v;
    controls(a, u, v);
    Eigen::MatrixXd J = chainctl::endpoint_map_jacobian(x0_, u, v, T, pot_, sub_);
    for (int i = 0; i < N_; ++i) {
      J.col(i) *= omega_ * std::cos(a[i]);
      J.col(N_ + i) *= 0.5 * omega_ * std::cos(a[N_ + i]);
    }
    return J;
  }

  chainctl::ChainState x0_, x1_;
  double omega_;
  chainctl::PotentialModel pot_;
  int N_, sub_;
  Eigen::VectorXd a_;
  double last_error_ = 0.0;
};

}  // namespace testing_support
