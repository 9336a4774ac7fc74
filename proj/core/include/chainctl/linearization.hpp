#pragma once

// Flat outputs of the chain and steering through them.
//
// Seeds: for even n = 2l, y_1 = q_l and z_1 = q_{l+1}; for odd n = 2l + 1,
// y_1 = q_{l+1} and z_1 = q_{l+2}. Every further entry is the Lie derivative
// of the previous one along the drift, y_{j+1} = L_f y_j. In these
// coordinates the controlled chain reads
//
//   y_1^{(k1)} = Y + a u + b v,    z_1^{(k2)} = Z + c v
//
// with b = 0 for even n. A single particle is handled as the chart (q_1, p_1)
// driven through u alone.

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "chainctl/chain_dynamics.hpp"

namespace chainctl {

struct KroneckerIndices {
  int k1 = 0;
  int k2 = 0;
  bool operator==(const KroneckerIndices&) const = default;
};

/// Chain lengths (n, n) for even n, (n + 1, n - 1) for odd n. Requires n >= 2.
KroneckerIndices kronecker_indices(int n);

/// Seed particle indices (1-based) of y_1 and z_1; z seed is 0 when n = 1.
std::pair<int, int> flat_seeds(int n);

struct FlatCoordinates {
  std::vector<double> y;
  std::vector<double> z;
  /// (y, z) stacked.
  Eigen::VectorXd stacked() const;
};

FlatCoordinates flat_coordinates(const ChainState& x, const PotentialModel& potential);

struct FlatChart {
  ChainState base_point;
  std::vector<double> y;
  std::vector<double> z;
  Eigen::MatrixXd jacobian;  // rows (y, z), columns (q, p)
  double condition_number = 0.0;
  bool nonsingular = false;  // sigma_min > 1e-10 sigma_max
};

FlatChart chart_jacobian(const ChainState& x, const PotentialModel& potential);

struct FeedbackTerms {
  bool odd = false;
  double Y = 0.0;
  double Z = 0.0;
  double a = 0.0;  // lambda (even) or alpha (odd): d y_last / d p_1
  double b = 0.0;  // beta: d y_last / d p_n, zero for even n
  double c = 0.0;  // mu (even) or gamma (odd): d z_last / d p_n
  double z_u = 0.0;  // d z_last / d p_1, zero by construction
  bool has_z = true;  // false for the single-particle chart

  double lambda() const { return a; }
  double alpha() const { return a; }
  double beta() const { return b; }
  double mu() const { return c; }
  double gamma() const { return c; }
  /// lambda mu or alpha gamma (a alone for n = 1).
  double product() const;
};

FeedbackTerms feedback_terms(const ChainState& x, const PotentialModel& potential);

/// Controls realizing the flat top derivatives (ubar, vbar) at x: v from the
/// z chain first, then u from the y chain. Throws NumericalError when the
/// relevant coefficient is below `eps`.
Controls controls_from_flat(const FeedbackTerms& terms, int n, double ubar, double vbar,
                            double eps = 1e-12);

struct NormalFormReport {
  double max_chain_residual = 0.0;  // max |d/dt y_j - y_{j+1}|, |d/dt z_j - z_{j+1}|
  double max_top_residual = 0.0;    // top rows against Y + a u + b v, Z + c v
  double min_abs_product = 0.0;     // min |lambda mu| or |alpha gamma| over samples
  int samples_used = 0;
  int samples_excluded = 0;
};

/// Central-difference check of the normal form along a trajectory. Samples
/// whose stencil straddles any time in `switch_times` (within `window` / 2)
/// are excluded.
NormalFormReport verify_normal_form(const Trajectory& trajectory, const PotentialModel& potential,
                                    const std::vector<double>& switch_times = {},
                                    double window = -1.0);

/// Chart inverse by damped Newton from `seed`. Returns nullopt when the
/// iteration stalls or leaves the chart.
std::optional<ChainState> invert_chart(const Eigen::VectorXd& target, const ChainState& seed,
                                       const PotentialModel& potential, double tol = 1e-12,
                                       int max_iter = 60);

struct SteerOptions {
  double step = 1e-2;  // control sampling step (samples every half step, cubic interpolation)
  int max_doublings = 1;
  /// Endpoint error that triggers re-sampling at half the step.
  double tolerance = 1e-6;
  int max_refinements = 3;
  /// Prescribed controls at the two ends; the flat polynomials then also
  /// match the top derivative there (degree + 2).
  std::optional<Controls> u_start;
  std::optional<Controls> u_end;
};

struct SteerResult {
  double T = 0.0;
  int doublings = 0;
  ControlSignal signal;
  Trajectory trajectory;  // re-simulated with RK4
  double endpoint_error = 0.0;
  double max_abs_u = 0.0;
  double min_v = 0.0;
  double max_v = 0.0;
};

/// Two-point steering through polynomial flat outputs. Throws
/// ConvergenceError when chart inversion fails even after the permitted T
/// doublings, NumericalError on a vanishing decoupling coefficient.
SteerResult steer_flat(const ChainState& x0, const ChainState& x1, double T,
                       const PotentialModel& potential, const SteerOptions& options = {});

/// Coefficients of the polynomial P on s in [0, 1] with P^{(j)}(0) = left[j]
/// and P^{(j)}(1) = right[j]; degree |left| + |right| - 1.
Eigen::VectorXd hermite_polynomial(const std::vector<double>& left,
                                   const std::vector<double>& right);
/// d^order/ds^order of the monomial-basis polynomial at s.
double polynomial_derivative(const Eigen::VectorXd& coeffs, int order, double s);

/// d x(T) / d (u_1..u_N, v_1..v_N) for piecewise-constant controls on N
/// equal segments, by forward sensitivity integration (RK4, `substeps` per
/// segment).
Eigen::MatrixXd endpoint_map_jacobian(const ChainState& x0, const std::vector<double>& u,
                                      const std::vector<double>& v, double T,
                                      const PotentialModel& potential, int substeps = 20);

}  // namespace chainctl
