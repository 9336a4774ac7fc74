#pragma once

// Minimum-time transfer under u in [-omega, omega], v in [-omega, 0].
//
// Candidates are bang-bang schedules. The solver fits switching times and the
// horizon to the endpoint condition, then recovers an adjoint from the
// endpoint sensitivities and checks the maximum principle along the
// resulting extremal:
//
//   Pi(x, psi, u, v) = <psi, f(x)> + psi_{p_1} u + psi_{p_n} v,
//   dx/dt = dPi/dpsi,  dpsi/dt = -dPi/dx,  sigma^u = psi_{p_1}, sigma^v = psi_{p_n}.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chainctl/chain_dynamics.hpp"

namespace chainctl {

struct AdjointState {
  std::vector<double> psi_q;
  std::vector<double> psi_p;

  AdjointState() = default;
  AdjointState(std::vector<double> q, std::vector<double> p);
  static AdjointState from_vector(const Eigen::VectorXd& v);
  Eigen::VectorXd to_vector() const;
  int n() const { return static_cast<int>(psi_q.size()); }
};

double pmp_hamiltonian(const ChainState& x, const AdjointState& psi, double u, double v,
                       const PotentialModel& potential);
double pmp_hamiltonian(const ControlAffineField& field, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& psi, double u, double v);

/// Bang values alternate at every switch: u between -omega and +omega, v
/// between 0 and -omega.
struct SwitchingSchedule {
  double omega = 1.0;
  double T = 0.0;
  double u0 = 1.0;
  double v0 = 0.0;
  std::vector<double> u_switches;
  std::vector<double> v_switches;

  /// Right-continuous control at t.
  Controls at(double t) const;
  /// Value of channel u (v) after `k` switches.
  double u_value(int k) const;
  double v_value(int k) const;
  /// All switching times of both channels, ascending, duplicates merged.
  std::vector<double> all_switches() const;
  ControlSignal signal() const;
  /// Throws ValidationError unless times are strictly increasing in (0, T)
  /// and the initial values are vertices.
  void validate() const;
};

struct ExtremalTrajectory {
  int n = 0;
  std::vector<double> t;
  std::vector<Eigen::VectorXd> x;
  std::vector<Eigen::VectorXd> psi;
  std::vector<double> u;
  std::vector<double> v;
  bool truncated = false;
  std::string diagnostic;
  std::size_t size() const { return t.size(); }
};

/// Coupled state/adjoint integration (RK4, steps split at switches). Samples
/// at a switch carry the control after it.
ExtremalTrajectory extremal_flow(const ChainState& x0, const AdjointState& psi0,
                                 const SwitchingSchedule& schedule,
                                 const PotentialModel& potential, double step = 1e-3);

struct SwitchingSeries {
  std::vector<double> t;
  std::vector<double> sigma_u;
  std::vector<double> sigma_v;
  std::vector<double> zeros_u;  // sign-change locations
  std::vector<double> zeros_v;
};

/// sigma^u = psi_{p_1}, sigma^v = psi_{p_n}; zero crossings located by
/// bisection on the cubic Hermite interpolant (d sigma/dt = -psi_q).
SwitchingSeries switching_functions(const ExtremalTrajectory& traj);

/// Maximizer of Pi over the rectangle: u = omega sign(sigma_u), v = 0 for
/// sigma_v > 0 and -omega for sigma_v < 0. Zero selects `fallback`.
Controls bang_from_sign(double sigma_u, double sigma_v, double omega,
                        Controls fallback = {0.0, 0.0});

struct ExtremalCertificate {
  double residual = 0.0;        // min over grid of Pi(applied) - max_vertex Pi, <= 0
  double transversality = 0.0;  // Pi at T
  double hamiltonian_spread = 0.0;  // max |Pi(t) - Pi(0)|
  int switches_u = 0;
  int switches_v = 0;
  int sign_violations = 0;  // grid points where bang_from_sign disagrees
  int grid_points = 0;
  double sign_consistency = 1.0;
  bool singular_flag = false;
  double psi_min_norm = 0.0;
  bool pass = false;
  std::string note;
};

struct MinTimeOptions {
  int switch_cap = -1;          // per channel; < 0 selects 4n
  int starts = 4;               // multi-start count per profile
  int extra_switches = 1;       // profiles with up to 2n - 1 + extra switches in total
  std::uint64_t seed = 1;
  double step = 1e-3;           // integration step
  double search_step = 1e-2;    // coarser step for the candidate search
  double endpoint_tol = 1e-6;
  double certificate_tol = 1e-6;
  double hamiltonian_tol = 1e-5;
  int max_iterations = 80;
  /// Upper bound on T; when absent it is taken from flat steering.
  std::optional<double> T_hi;
  /// Use channel u only (v = 0); forced for n = 1.
  bool u_only = false;
};

struct MinTimeResult {
  SwitchingSchedule schedule;
  ExtremalCertificate certificate;
  double T_hi = 0.0;             // feasibility bound
  double endpoint_error = 0.0;   // re-simulated
  AdjointState psi0;
  AdjointState psiT;
  int candidates = 0;            // converged schedules examined
  std::string message;
};

/// Throws ConvergenceError when no schedule meets the endpoint tolerance.
MinTimeResult solve_min_time(const ChainState& x0, const ChainState& x1, double omega,
                             const PotentialModel& potential, const MinTimeOptions& options = {});

/// Certificate of `schedule` with terminal adjoint psi_T (normalized inside).
ExtremalCertificate certify(const ChainState& x0, const SwitchingSchedule& schedule,
                            const Eigen::VectorXd& psi_T, const PotentialModel& potential,
                            const MinTimeOptions& options, Eigen::VectorXd* psi0_out = nullptr);

/// d x(T) / d (T, switching times): column 0 is dx/dT, then u switches, then
/// v switches. Also returns x(T).
Eigen::MatrixXd schedule_sensitivity(const ChainState& x0, const SwitchingSchedule& schedule,
                                     const PotentialModel& potential, double step,
                                     Eigen::VectorXd* xT = nullptr);

struct SwitchingAuditOptions {
  double window = 0.5;        // zero-count window length
  double eps = 1e-9;          // |sigma| below eps * max|sigma| counts as vanishing
  double singular_length = 0.05;  // flag a vanishing stretch longer than this
  double exclusion = -1.0;    // half-width around switches; < 0 selects 2 steps
};

struct SwitchingAudit {
  Channel channel = Channel::u;
  std::vector<double> row_residual;  // max over grid, per k = 0..2n-2
  int max_window_zeros = 0;
  int total_zeros = 0;
  double longest_vanishing = 0.0;
  bool singular_flag = false;
};

/// sigma_k = <psi, ad^k f g^rho>, k = 0..2n-1, along the extremal; compares
/// central differences of sigma_k with sigma_{k+1} + sum_j (u a^u_{kj} +
/// v a^v_{kj}) sigma_j where a are least-squares coefficients of
/// [g^u, ad^k f g^rho], [g^v, ad^k f g^rho] in span{ad^j f g^rho, j <= k}.
SwitchingAudit switching_system_audit(const ExtremalTrajectory& traj, Channel channel,
                                      const PotentialModel& potential,
                                      const std::vector<double>& switch_times = {},
                                      const SwitchingAuditOptions& options = {});

struct SwitchingCountAudit {
  int max_u = 0;
  int max_v = 0;
  std::vector<std::size_t> alarms;  // instances above the threshold
};

SwitchingCountAudit switching_count_audit(const std::vector<SwitchingSchedule>& batch,
                                          int alarm_threshold);

}  // namespace chainctl
