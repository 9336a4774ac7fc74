#pragma once

// Confining feedback and constrained steering.
//
// With u = u_f(q_1) + u_o and v = v_f(q_n), u_f = -U_f', v_f = -V_f', the
// closed loop at u_o = 0 is the Hamiltonian flow of
//
//   H_f = H + U_f(q_1) + V_f(q_n),
//
// whose sublevel sets are compact once U_f grows at -inf and V_f at +inf.

#include <functional>
#include <string>
#include <vector>

#include "chainctl/chain_dynamics.hpp"
#include "chainctl/linearization.hpp"

namespace chainctl {

struct ConfiningFeedback {
  double omega = 1.0;
  /// U_f(q) = (omega/2)(sqrt(1+q^2) - q), V_f(q) = (omega/2)(sqrt(1+q^2) + q).
  double U(double q) const;
  double V(double q) const;
  double u_f(double q) const;  // -U_f'(q), in (0, omega)
  double v_f(double q) const;  // -V_f'(q), in (-omega, 0)
  /// Stored lower bounds of U_f and V_f.
  double U_lower = 0.0;
  double V_lower = 0.0;
};

ConfiningFeedback make_confining_feedback(double omega);

double modified_hamiltonian(const ChainState& x, const PotentialModel& potential,
                            const ConfiningFeedback& feedback);

/// Closed-loop signal u = u_f(q_1) + u_o(t), v = v_f(q_n).
ControlSignal closed_loop_signal(const ConfiningFeedback& feedback, int n,
                                 std::function<double(double)> u_o = {});

struct EnergyBox {
  double c = 0.0;
  double b = 0.0;  // gap bound; negative means the sublevel set is empty
  double B = 0.0;  // potential lower bound, Phi >= -B
  std::vector<double> lower;  // q_k >= -k b
  std::vector<double> upper;  // q_k <= (n+1-k) b
  double momentum_bound = 0.0;  // |p|^2 <= 2 (c + (n-1) B)
  bool empty = false;

  bool contains(const ChainState& x, double slack = 0.0) const;
};

/// Box around {H_f <= c} for n particles. Each of the n+1 confining terms is
/// bounded by c minus the lower bounds of the others; the gap bound comes
/// from bisection on the monotone tail of each term.
EnergyBox energy_box(double c, int n, const PotentialModel& potential,
                     const ConfiningFeedback& feedback);

/// Holding controls at a rest state with equal gaps g: (phi(g), -phi(g)).
/// The waypoint gap solves phi(g*) = omega / 2.
double waypoint_gap(const PotentialModel& potential, double omega);

struct ControllabilityOptions {
  double budget = 200.0;      // total time allowed
  double initial_T = 1.0;     // first segment duration tried
  double growth = 1.5;        // duration factor between attempts
  double max_leg = 1.0;       // longest rigid translation between waypoints
  double tolerance = 1e-5;    // endpoint error for success
  double step = 1e-2;         // control sampling step
};

struct Segment {
  ChainState from;
  ChainState to;
  double T = 0.0;
  double endpoint_error = 0.0;
};

struct ControllabilityResult {
  bool success = false;
  std::string message;
  double omega = 0.0;
  double T_total = 0.0;
  double endpoint_error = 0.0;  // after chained re-simulation from x0
  double max_abs_u = 0.0;
  double min_v = 0.0;
  double max_v = 0.0;
  bool constraints_respected = true;
  double max_abs_u_o = 0.0;  // |u - u_f(q_1)| along the trajectory
  double max_abs_v_gap = 0.0;  // |v - v_f(q_n)|
  std::vector<Segment> segments;
  ControlSignal signal;  // sampled, whole horizon
  Trajectory trajectory;
};

/// Chains flat-steering segments (direct, or via holdable rest waypoints)
/// whose controls stay in u in [-omega, omega], v in [-omega, 0]. Only
/// segments meeting the bounds at every control sample are emitted.
ControllabilityResult demonstrate_controllability(const ChainState& x0, const ChainState& x1,
                                                  double omega, const PotentialModel& potential,
                                                  const ControllabilityOptions& options = {});

}  // namespace chainctl
