#pragma once

// Shared helpers for the test binaries: seeded random states and plain
// finite-difference oracles that do not touch the jet machinery.

#include <Eigen/Dense>
#include <functional>
#include <random>
#include <vector>

#include "chainctl/chain_dynamics.hpp"

namespace testing_support {

inline chainctl::ChainState gaussian_state(std::mt19937_64& rng, int n, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  std::vector<double> q(n), p(n);
  for (auto& v : q) v = g(rng);
  for (auto& v : p) v = g(rng);
  return {q, p};
}

inline Eigen::VectorXd gaussian_vector(std::mt19937_64& rng, int dim, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = g(rng);
  return v;
}

using PlainField = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Fourth-order central difference of F along v.
inline Eigen::VectorXd fd_jvp(const PlainField& F, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& v, double h) {
  return (-F(x + 2 * h * v) + 8 * F(x + h * v) - 8 * F(x - h * v) + F(x - 2 * h * v)) /
         (12 * h);
}

// [F, G] = DG F - DF G by finite differences.
inline PlainField fd_bracket(PlainField F, PlainField G, double h) {
  return [F, G, h](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return fd_jvp(G, x, F(x), h) - fd_jvp(F, x, G(x), h);
  };
}

}  // namespace testing_support
