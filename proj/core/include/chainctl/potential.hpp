#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "chainctl/jet.hpp"

namespace chainctl {

/// Nearest-neighbour interaction potential Phi(y), y = q_k - q_{k+1}.
///
/// The model exposes the derivative tower Phi^{(j)}(y): order 0 is the
/// potential, order 1 the force phi = Phi', order 2 the stiffness phi'.
/// Iterated brackets need higher orders; built-in potentials supply all
/// orders, user triples only orders 0..2.
class PotentialModel {
 public:
  /// Returns Phi^{(order)}(y).
  using DerivativeFn = std::function<double(int order, double y)>;

  PotentialModel(std::string name, DerivativeFn derivative, int max_order,
                 double lower_bound, bool nonvanishing_stiffness);

  /// Phi(y) = exp(y).
  static PotentialModel toda();
  /// Phi(y) = scale * log(1 + exp(y)).
  static PotentialModel softplus(double scale = 1.0);
  /// phi(y) = sign(y) (|y| - 1)^3 outside [-1, 1], zero inside; phi' vanishes
  /// on the dead zone, violating the nonvanishing-stiffness assumption.
  static PotentialModel deadzone();
  /// User potential from (Phi, phi, phi'). Higher derivatives unavailable.
  static PotentialModel from_triple(std::string name, std::function<double(double)> phi0,
                                    std::function<double(double)> phi1,
                                    std::function<double(double)> phi2,
                                    double lower_bound, bool nonvanishing_stiffness);
  /// Built-in by name: "toda", "softplus", "deadzone".
  static PotentialModel by_name(const std::string& name);

  const std::string& name() const { return name_; }
  int max_order() const { return max_order_; }
  /// B >= 0 with Phi >= -B.
  double lower_bound() const { return lower_bound_; }
  bool asserts_nonvanishing_stiffness() const { return nonvanishing_; }

  double derivative(int order, double y) const;
  double energy(double y) const { return derivative(0, y); }
  double force(double y) const { return derivative(1, y); }
  double stiffness(double y) const { return derivative(2, y); }

  /// phi(y) on a jet argument (needs derivatives up to the nilpotency order).
  Jet force(const Jet& y) const;

  /// Central-difference consistency of (Phi, phi, phi') on `grid`, plus the
  /// nonvanishing-stiffness flag when asserted. Returns an empty string when
  /// every check passes, otherwise a description of the first failure.
  std::string check_consistency(const std::vector<double>& grid, double tol = 1e-6,
                                double h = 1e-5) const;

 private:
  std::string name_;
  DerivativeFn derivative_;
  int max_order_;
  double lower_bound_;
  bool nonvanishing_;
};

}  // namespace chainctl
