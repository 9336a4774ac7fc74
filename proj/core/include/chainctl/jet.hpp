#pragma once

// Truncated multivariate Taylor numbers in a set of nilpotent generators.
//
// A Jet with k generators e_0..e_{k-1} (e_i^2 = 0, commuting) stores one
// coefficient per subset of generators, indexed by bit mask. Nesting
// directional derivatives maps to adding one generator per level, so an
// iterated Lie bracket of depth m is evaluated exactly on 2^m coefficients
// with 3^m multiplication cost.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace chainctl {

class Jet {
 public:
  Jet() : coeffs_(1, 0.0) {}
  Jet(double value) : coeffs_(1, value) {}  // NOLINT(google-explicit-constructor)

  /// Constant with `gens` generators (all infinitesimal parts zero).
  static Jet constant(double value, int gens);

  int generators() const { return gens_; }
  std::size_t size() const { return coeffs_.size(); }
  double value() const { return coeffs_[0]; }
  double coeff(std::uint32_t mask) const {
    return mask < coeffs_.size() ? coeffs_[mask] : 0.0;
  }
  double& coeff_ref(std::uint32_t mask) { return coeffs_[mask]; }
  std::span<const double> coeffs() const { return coeffs_; }

  bool is_finite() const;
  bool is_zero() const;

  /// Same number, seen as a Jet in `gens` >= generators() generators.
  Jet promoted(int gens) const;

  /// Part of the jet free of generator `gen`, which must be the highest
  /// generator in use (jets with fewer generators do not depend on it).
  Jet base_part(int gen) const;
  /// Coefficient of generator `gen` (same restriction as base_part).
  Jet derivative(int gen) const;

  Jet& operator+=(const Jet& o);
  Jet& operator-=(const Jet& o);
  Jet& operator*=(const Jet& o);
  Jet& operator*=(double s);

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator*(const Jet& a, const Jet& b);
  friend Jet operator*(Jet a, double s) { return a *= s; }
  friend Jet operator*(double s, Jet a) { return a *= s; }
  friend Jet operator/(const Jet& a, const Jet& b);
  Jet operator-() const;

  /// f(a) from the derivative table derivs[j] = f^{(j)}(a.value()).
  /// Throws std::domain_error if the table is too short for the nilpotent
  /// part actually present.
  static Jet compose(const Jet& a, std::span<const double> derivs);

 private:
  Jet(std::vector<double> c, int gens) : coeffs_(std::move(c)), gens_(gens) {}

  std::vector<double> coeffs_;
  int gens_ = 0;
};

Jet exp(const Jet& a);
Jet sqrt(const Jet& a);
Jet reciprocal(const Jet& a);

using JetVec = std::vector<Jet>;

/// Largest generator count among the entries.
int generators(const JetVec& v);

/// x + e_k * v, where k = max generator count of (x, v); result has k+1
/// generators.
JetVec perturb(const JetVec& x, const JetVec& v);

std::vector<double> values(const JetVec& v);
JetVec constants(std::span<const double> x);

}  // namespace chainctl
