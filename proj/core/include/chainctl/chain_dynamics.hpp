#pragma once

// Particle chain on a line with nearest-neighbour interaction, controlled by
// forces u on the first particle and v on the last one:
//
//   dq_k/dt = p_k
//   dp_k/dt = phi(q_{k-1} - q_k) - phi(q_k - q_{k+1})    (free ends)
//   dp_1/dt += u,  dp_n/dt += v
//
// States are packed as x = (q_1..q_n, p_1..p_n).

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "chainctl/jet.hpp"
#include "chainctl/potential.hpp"

namespace chainctl {

struct ChainState {
  std::vector<double> q;
  std::vector<double> p;

  ChainState() = default;
  ChainState(std::vector<double> q_, std::vector<double> p_);

  /// Rest state (p = 0) at positions q.
  static ChainState at_rest(std::vector<double> q);
  static ChainState from_vector(const Eigen::VectorXd& x);

  int n() const { return static_cast<int>(q.size()); }
  Eigen::VectorXd to_vector() const;

  /// Throws ValidationError unless n >= 1, |q| == |p| and all entries finite.
  void validate() const;
};

/// Index helpers into the packed state.
inline int q_index(int /*n*/, int k) { return k; }
inline int p_index(int n, int k) { return n + k; }

enum class Channel { u, v };

struct Controls {
  double u = 0.0;
  double v = 0.0;
};

struct ControlBounds {
  double u_lo, u_hi, v_lo, v_hi;
  /// The rectangle u in [-omega, omega], v in [-omega, 0].
  static ControlBounds rectangle(double omega) { return {-omega, omega, -omega, 0.0}; }
  bool contains(const Controls& c, double slack = 0.0) const {
    return c.u >= u_lo - slack && c.u <= u_hi + slack && c.v >= v_lo - slack &&
           c.v <= v_hi + slack;
  }
};

/// Drift f and the constant control fields g^u = d/dp_1, g^v = d/dp_n.
class ControlAffineField {
 public:
  ControlAffineField(int n, PotentialModel potential);

  int n() const { return n_; }
  int dim() const { return 2 * n_; }
  const PotentialModel& potential() const { return potential_; }

  /// f(x) written into `out`; throws OverflowError on a non-finite force.
  void drift_into(const double* x, double* out) const;
  Eigen::VectorXd drift(const Eigen::VectorXd& x) const;
  Eigen::VectorXd controlled(const Eigen::VectorXd& x, double u, double v) const;
  /// f on jets, for exact derivatives of any order.
  JetVec drift(const JetVec& x) const;

  /// Unit vector of channel `c` in R^{2n}.
  Eigen::VectorXd control_direction(Channel c) const;
  int control_index(Channel c) const { return c == Channel::u ? n_ : 2 * n_ - 1; }

  /// Jacobian Df(x), dense.
  Eigen::MatrixXd drift_jacobian(const Eigen::VectorXd& x) const;

 private:
  int n_;
  PotentialModel potential_;
};

Eigen::VectorXd drift_field(const ChainState& state, const PotentialModel& potential);
Eigen::VectorXd controlled_field(const ChainState& state, const PotentialModel& potential,
                                 double u, double v);

double kinetic_energy(const ChainState& state);
double potential_energy(const ChainState& state, const PotentialModel& potential);
/// H(q, p) = 1/2 sum p_k^2 + sum Phi(q_j - q_{j+1}).
double total_energy(const ChainState& state, const PotentialModel& potential);

enum class Interpolation {
  linear,
  cubic,  // four-point Lagrange; values clamped into `bounds` when declared
};

/// Control input as a function of time (and optionally state).
class ControlSignal {
 public:
  using FeedbackFn = std::function<Controls(double t, const Eigen::VectorXd& x)>;

  ControlSignal();  // u = v = 0

  static ControlSignal constant(double u, double v);
  /// Value (u[i], v[i]) on [knots[i], knots[i+1]); knots strictly increasing,
  /// |u| = |v| = |knots| - 1. Beyond the last knot the last value holds.
  static ControlSignal piecewise_constant(std::vector<double> knots, std::vector<double> u,
                                          std::vector<double> v);
  /// Interpolation through samples (t[i], u[i], v[i]). Cubic stencils do
  /// not reach across `joins` (sample times where the control may kink).
  static ControlSignal sampled(std::vector<double> t, std::vector<double> u,
                               std::vector<double> v,
                               Interpolation interpolation = Interpolation::linear,
                               const std::vector<double>& joins = {});
  static ControlSignal feedback(FeedbackFn fn);

  /// Control at time t, state x. For piecewise-constant signals `t` selects
  /// the interval with right-continuity.
  Controls operator()(double t, const Eigen::VectorXd& x) const;

  /// Interior discontinuities in (t0, t1), ascending.
  std::vector<double> breakpoints(double t0, double t1) const;
  bool is_piecewise_constant() const { return kind_ == Kind::piecewise; }
  bool is_zero() const { return kind_ == Kind::zero; }
  bool depends_on_state() const { return kind_ == Kind::feedback; }
  Interpolation interpolation() const { return interpolation_; }

  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& u_values() const { return u_; }
  const std::vector<double>& v_values() const { return v_; }

  std::optional<ControlBounds> bounds;

 private:
  enum class Kind { zero, piecewise, sampled, feedback };
  Kind kind_ = Kind::zero;
  Interpolation interpolation_ = Interpolation::linear;
  std::vector<double> knots_;
  std::vector<std::size_t> joins_;  // knot indices, with 0 and the last index
  std::vector<double> u_;
  std::vector<double> v_;
  FeedbackFn fn_;
};

struct Trajectory {
  int n = 0;
  std::vector<double> t;
  std::vector<Eigen::VectorXd> x;
  std::vector<double> u;  // applied control at each sample (right-continuous)
  std::vector<double> v;
  bool truncated = false;
  std::string diagnostic;

  std::size_t size() const { return t.size(); }
  const Eigen::VectorXd& final_state() const { return x.back(); }
};

enum class Integrator {
  rk4,       // classical Runge-Kutta, any control
  leapfrog,  // kick-drift-kick, zero control only
  yoshida4,  // fourth-order composition of leapfrog, zero control only
};

struct SimulationOptions {
  double step = 1e-3;
  Integrator integrator = Integrator::rk4;
  /// Also record states at control breakpoints inside a step.
  bool record_breakpoints = false;
};

/// Fixed-step integration on the grid t_i = min(i * step, T). Steps are split
/// at breakpoints of piecewise-constant signals. Overflow stops the run and
/// returns the samples so far with `truncated` set.
Trajectory simulate(const ControlAffineField& field, const ChainState& x0,
                    const ControlSignal& signal, double T, const SimulationOptions& options = {});

/// One classical RK4 step of size h for constant-in-step evaluation of `signal`.
Eigen::VectorXd rk4_step(const ControlAffineField& field, const Eigen::VectorXd& x, double t,
                         double h, const ControlSignal& signal);

}  // namespace chainctl
