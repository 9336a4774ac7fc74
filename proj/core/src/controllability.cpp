#include "chainctl/controllability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "chainctl/errors.hpp"

namespace chainctl {

double ConfiningFeedback::U(double q) const { return 0.5 * omega * (std::hypot(1.0, q) - q); }
double ConfiningFeedback::V(double q) const { return 0.5 * omega * (std::hypot(1.0, q) + q); }
double ConfiningFeedback::u_f(double q) const {
  return 0.5 * omega * (1.0 - q / std::hypot(1.0, q));
}
double ConfiningFeedback::v_f(double q) const {
  return -0.5 * omega * (1.0 + q / std::hypot(1.0, q));
}

ConfiningFeedback make_confining_feedback(double omega) {
  if (!(omega > 0.0) || !std::isfinite(omega)) {
    throw ValidationError("confining feedback: omega must be > 0");
  }
  ConfiningFeedback fb;
  fb.omega = omega;
  fb.U_lower = 0.0;
  fb.V_lower = 0.0;
  return fb;
}

double modified_hamiltonian(const ChainState& x, const PotentialModel& potential,
                            const ConfiningFeedback& feedback) {
  const double H = total_energy(x, potential);
  return H + feedback.U(x.q.front()) + feedback.V(x.q.back());
}

ControlSignal closed_loop_signal(const ConfiningFeedback& feedback, int n,
                                 std::function<double(double)> u_o) {
  if (n < 1) throw ValidationError("closed_loop_signal: n must be >= 1");
  ControlSignal s = ControlSignal::feedback(
      [feedback, n, u_o](double t, const Eigen::VectorXd& x) -> Controls {
        const double extra = u_o ? u_o(t) : 0.0;
        return {feedback.u_f(x[q_index(n, 0)]) + extra, feedback.v_f(x[q_index(n, n - 1)])};
      });
  return s;
}

namespace {

// sup { y : F(y) <= L } for F increasing on its right tail; nullopt if the
// set looks empty.
std::optional<double> tail_bound(const std::function<double(double)>& F, double L) {
  double hi = 1.0;
  while (!(F(hi) > L)) {
    hi *= 2.0;
    if (hi > 1e12) return std::numeric_limits<double>::infinity();
  }
  double lo = hi - 1.0;
  double width = 1.0;
  while (!(F(lo) <= L)) {
    width *= 2.0;
    lo = hi - width;
    if (lo < -1e12) return std::nullopt;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (F(mid) <= L ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace

bool EnergyBox::contains(const ChainState& x, double slack) const {
  if (empty) return false;
  for (std::size_t k = 0; k < x.q.size(); ++k) {
    if (x.q[k] < lower[k] - slack || x.q[k] > upper[k] + slack) return false;
  }
  double p2 = 0.0;
  for (double p : x.p) p2 += p * p;
  return p2 <= momentum_bound + slack;
}

EnergyBox energy_box(double c, int n, const PotentialModel& potential,
                     const ConfiningFeedback& feedback) {
  if (n < 1) throw ValidationError("energy_box: n must be >= 1");
  if (!std::isfinite(c)) throw ValidationError("energy_box: level must be finite");
  EnergyBox box;
  box.c = c;
  box.B = potential.lower_bound();
  const double B = box.B;
  const double UL = feedback.U_lower, VL = feedback.V_lower;

  std::vector<std::optional<double>> bounds;
  bounds.push_back(tail_bound([&](double y) { return feedback.U(-y); }, c + (n - 1) * B - VL));
  bounds.push_back(tail_bound([&](double y) { return feedback.V(y); }, c + (n - 1) * B - UL));
  if (n > 1) {
    bounds.push_back(
        tail_bound([&](double y) { return potential.energy(y); }, c + (n - 2) * B - UL - VL));
  }
  box.b = -std::numeric_limits<double>::infinity();
  for (const auto& b : bounds) {
    if (!b) {
      box.empty = true;
      continue;
    }
    box.b = std::max(box.b, *b);
  }
  box.momentum_bound = 2.0 * (c + (n - 1) * B - UL - VL);
  if (box.b < 0.0 || box.momentum_bound < 0.0) box.empty = true;
  for (int k = 1; k <= n; ++k) {
    box.lower.push_back(-k * box.b);
    box.upper.push_back((n + 1 - k) * box.b);
  }
  return box;
}

double waypoint_gap(const PotentialModel& potential, double omega) {
  const double target = 0.5 * omega;
  double lo = -1.0, hi = 1.0;
  for (int i = 0; i < 200 && !(potential.force(lo) < target); ++i) lo *= 2.0;
  for (int i = 0; i < 200 && !(potential.force(hi) > target); ++i) hi *= 2.0;
  if (!(potential.force(lo) < target) || !(potential.force(hi) > target)) {
    throw NumericalError("no holdable waypoint: phi(g) = omega/2 has no solution");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (potential.force(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

struct Leg {
  ChainState from, to;
  Controls c_from, c_to;
};

Controls clamped_hold(const ChainState& x, const PotentialModel& pot, double omega) {
  const int n = x.n();
  if (n == 1) return {0.0, 0.0};
  const double u = pot.force(x.q[0] - x.q[1]);
  const double v = -pot.force(x.q[n - 2] - x.q[n - 1]);
  return {std::clamp(u, -omega, omega), std::clamp(v, -omega, 0.0)};
}

bool within_bounds(const ControlSignal& s, double omega) {
  const ControlBounds b = ControlBounds::rectangle(omega);
  for (std::size_t i = 0; i < s.u_values().size(); ++i) {
    if (!b.contains({s.u_values()[i], s.v_values()[i]})) return false;
  }
  return true;
}

// Rigid rest configuration with gap g whose mean position is `center`.
ChainState rest_chain(int n, double g, double center) {
  std::vector<double> q(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) q[static_cast<std::size_t>(k)] = -g * k;
  double mean = 0.0;
  for (double v : q) mean += v;
  mean /= n;
  for (double& v : q) v += center - mean;
  return ChainState::at_rest(q);
}

double mean_q(const ChainState& x) {
  double s = 0.0;
  for (double v : x.q) s += v;
  return s / x.n();
}

// Shortest feasible duration found by doubling; nullopt when `limit` is hit.
std::optional<SteerResult> feasible_leg(const Leg& leg, double omega, const PotentialModel& pot,
                                        const ControllabilityOptions& opt, double limit) {
  SteerOptions so;
  so.step = opt.step;
  so.max_doublings = 0;
  so.u_start = leg.c_from;
  so.u_end = leg.c_to;
  for (double T = opt.initial_T; T <= limit; T *= opt.growth) {
    try {
      SteerResult r = steer_flat(leg.from, leg.to, T, pot, so);
      if (r.endpoint_error <= 0.1 * opt.tolerance && within_bounds(r.signal, omega)) return r;
    } catch (const NumericalError&) {
      // Left the chart, or the decoupling coefficients underflowed on a long
      // excursion; try a longer horizon.
    }
  }
  return std::nullopt;
}

}  // namespace

ControllabilityResult demonstrate_controllability(const ChainState& x0, const ChainState& x1,
                                                  double omega, const PotentialModel& pot,
                                                  const ControllabilityOptions& opt) {
  x0.validate();
  x1.validate();
  if (x0.n() != x1.n()) throw ValidationError("controllability: states of different size");
  if (!(omega > 0.0)) throw ValidationError("controllability: omega must be > 0");
  if (!(opt.budget > 0.0) || !(opt.initial_T > 0.0) || !(opt.max_leg > 0.0) ||
      !(opt.growth > 1.0)) {
    throw ValidationError("controllability: budget, initial_T, max_leg must be > 0, growth > 1");
  }
  const int n = x0.n();
  const ConfiningFeedback fb = make_confining_feedback(omega);
  ControllabilityResult res;
  res.omega = omega;

  if ((x0.to_vector() - x1.to_vector()).norm() == 0.0) {
    res.success = true;
    res.message = "start equals target";
    res.trajectory.n = n;
    res.trajectory.t = {0.0};
    res.trajectory.x = {x0.to_vector()};
    res.trajectory.u = {0.0};
    res.trajectory.v = {0.0};
    res.signal = ControlSignal::sampled({0.0}, {0.0}, {0.0});
    return res;
  }

  const Controls h0 = clamped_hold(x0, pot, omega);
  const Controls h1 = clamped_hold(x1, pot, omega);

  std::vector<SteerResult> pieces;
  std::vector<Leg> legs;
  double used = 0.0;

  // Direct transfer first, limited to a quarter of the budget.
  if (auto r = feasible_leg({x0, x1, h0, h1}, omega, pot, opt, 0.25 * opt.budget)) {
    legs.push_back({x0, x1, h0, h1});
    pieces.push_back(*r);
    used = r->T;
  } else {
    // Holdable rest waypoints: equal gaps g* with phi(g*) = omega/2.
    double g = 0.0;
    try {
      g = waypoint_gap(pot, omega);
    } catch (const NumericalError& e) {
      res.message = e.what();
      return res;
    }
    const Controls hold{0.5 * omega, n == 1 ? 0.0 : -0.5 * omega};
    const ChainState w0 = rest_chain(n, g, mean_q(x0));
    const ChainState w1 = rest_chain(n, g, mean_q(x1));
    std::vector<Leg> plan;
    plan.push_back({x0, w0, h0, n == 1 ? Controls{} : hold});
    const double D = mean_q(x1) - mean_q(x0);
    const int hops = std::max(1, static_cast<int>(std::ceil(std::abs(D) / opt.max_leg)));
    ChainState prev = w0;
    for (int i = 1; i <= hops; ++i) {
      const ChainState next = rest_chain(n, g, mean_q(x0) + D * i / hops);
      if (std::abs(D) > 0.0) plan.push_back({prev, next, n == 1 ? Controls{} : hold,
                                             n == 1 ? Controls{} : hold});
      prev = next;
    }
    plan.push_back({w1, x1, n == 1 ? Controls{} : hold, h1});
    for (const Leg& leg : plan) {
      if ((leg.from.to_vector() - leg.to.to_vector()).norm() == 0.0) continue;
      auto r = feasible_leg(leg, omega, pot, opt, opt.budget - used);
      if (!r) {
        std::ostringstream os;
        os << "time budget exhausted on a leg after " << legs.size() << " feasible legs";
        res.message = os.str();
        res.T_total = used;
        res.endpoint_error =
            ((legs.empty() ? x0 : legs.back().to).to_vector() - x1.to_vector()).norm();
        return res;
      }
      legs.push_back(leg);
      pieces.push_back(*r);
      used += r->T;
    }
  }

  // One signal for the whole chain, re-simulated open loop from x0.
  std::vector<double> ts, us, vs, joins;
  double offset = 0.0;
  double step = INFINITY;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const SteerResult& r = pieces[i];
    const auto& kt = r.signal.knots();
    for (std::size_t j = (i == 0 ? 0 : 1); j < kt.size(); ++j) {
      ts.push_back(offset + kt[j]);
      us.push_back(r.signal.u_values()[j]);
      vs.push_back(r.signal.v_values()[j]);
    }
    if (r.trajectory.t.size() > 1) step = std::min(step, r.trajectory.t[1] - r.trajectory.t[0]);
    res.segments.push_back({legs[i].from, legs[i].to, r.T, r.endpoint_error});
    offset += r.T;
    if (i + 1 < pieces.size()) joins.push_back(ts.back());
  }

  res.T_total = offset;
  res.signal = ControlSignal::sampled(ts, us, vs, Interpolation::cubic, joins);
  res.signal.bounds = ControlBounds::rectangle(omega);
  SimulationOptions so;
  so.step = std::isfinite(step) ? step : offset;
  Trajectory traj = simulate(ControlAffineField(n, pot), x0, res.signal, offset, so);
  if (traj.truncated) {
    res.message = "re-simulation overflowed: " + traj.diagnostic;
    return res;
  }
  const Eigen::VectorXd x = traj.final_state();
  res.trajectory = std::move(traj);
  res.endpoint_error = (x - x1.to_vector()).norm();
  res.max_abs_u = 0.0;
  res.min_v = vs.front();
  res.max_v = vs.front();
  const ControlBounds bounds = ControlBounds::rectangle(omega);
  for (std::size_t i = 0; i < us.size(); ++i) {
    res.max_abs_u = std::max(res.max_abs_u, std::abs(us[i]));
    res.min_v = std::min(res.min_v, vs[i]);
    res.max_v = std::max(res.max_v, vs[i]);
    if (!bounds.contains({us[i], vs[i]})) res.constraints_respected = false;
  }
  for (std::size_t i = 0; i < res.trajectory.size(); ++i) {
    const auto& xi = res.trajectory.x[i];
    res.max_abs_u_o =
        std::max(res.max_abs_u_o, std::abs(res.trajectory.u[i] - fb.u_f(xi[q_index(n, 0)])));
    res.max_abs_v_gap =
        std::max(res.max_abs_v_gap, std::abs(res.trajectory.v[i] - fb.v_f(xi[q_index(n, n - 1)])));
  }
  res.success = res.constraints_respected && res.endpoint_error <= opt.tolerance;
  std::ostringstream os;
  os << pieces.size() << (pieces.size() == 1 ? " segment" : " segments");
  if (!res.success) os << "; endpoint gap " << res.endpoint_error;
  res.message = os.str();
  return res;
}

}  // namespace chainctl
