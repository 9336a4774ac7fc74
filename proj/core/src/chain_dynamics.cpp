#include "chainctl/chain_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "chainctl/errors.hpp"

namespace chainctl {

ChainState::ChainState(std::vector<double> q_, std::vector<double> p_)
    : q(std::move(q_)), p(std::move(p_)) {}

ChainState ChainState::at_rest(std::vector<double> q) {
  std::vector<double> p(q.size(), 0.0);
  return ChainState(std::move(q), std::move(p));
}

ChainState ChainState::from_vector(const Eigen::VectorXd& x) {
  if (x.size() < 2 || x.size() % 2 != 0) {
    throw ValidationError("state vector must have even length >= 2");
  }
  const auto n = x.size() / 2;
  ChainState s;
  s.q.assign(x.data(), x.data() + n);
  s.p.assign(x.data() + n, x.data() + 2 * n);
  return s;
}

Eigen::VectorXd ChainState::to_vector() const {
  validate();
  const int nn = n();
  Eigen::VectorXd x(2 * nn);
  for (int k = 0; k < nn; ++k) {
    x[k] = q[static_cast<std::size_t>(k)];
    x[nn + k] = p[static_cast<std::size_t>(k)];
  }
  return x;
}

void ChainState::validate() const {
  if (q.empty()) throw ValidationError("chain state needs at least one particle");
  if (q.size() != p.size()) {
    throw ValidationError("chain state: q and p lengths differ");
  }
  for (std::size_t k = 0; k < q.size(); ++k) {
    if (!std::isfinite(q[k]) || !std::isfinite(p[k])) {
      throw ValidationError("chain state: non-finite entry at particle " + std::to_string(k + 1));
    }
  }
}

// --- fields ----------------------------------------------------------------

ControlAffineField::ControlAffineField(int n, PotentialModel potential)
    : n_(n), potential_(std::move(potential)) {
  if (n_ < 1) throw ValidationError("chain needs at least one particle");
}

void ControlAffineField::drift_into(const double* x, double* out) const {
  const int n = n_;
  for (int k = 0; k < n; ++k) {
    out[k] = x[n + k];
    out[n + k] = 0.0;
  }
  for (int j = 0; j + 1 < n; ++j) {
    const double gap = x[j] - x[j + 1];
    const double f = potential_.force(gap);
    if (!std::isfinite(f)) {
      std::ostringstream os;
      os << "non-finite interaction force at gap q" << j + 1 << " - q" << j + 2 << " = " << gap;
      throw OverflowError(os.str(), j + 1, gap);
    }
    out[n + j] -= f;
    out[n + j + 1] += f;
  }
}

Eigen::VectorXd ControlAffineField::drift(const Eigen::VectorXd& x) const {
  if (x.size() != dim()) throw ValidationError("drift: state dimension mismatch");
  Eigen::VectorXd out(dim());
  drift_into(x.data(), out.data());
  return out;
}

Eigen::VectorXd ControlAffineField::controlled(const Eigen::VectorXd& x, double u,
                                               double v) const {
  Eigen::VectorXd out = drift(x);
  out[n_] += u;
  out[2 * n_ - 1] += v;
  return out;
}

JetVec ControlAffineField::drift(const JetVec& x) const {
  if (static_cast<int>(x.size()) != dim()) throw ValidationError("drift: state dimension mismatch");
  const int n = n_;
  JetVec out(static_cast<std::size_t>(2 * n));
  for (int k = 0; k < n; ++k) out[static_cast<std::size_t>(k)] = x[static_cast<std::size_t>(n + k)];
  for (int k = 0; k < n; ++k) out[static_cast<std::size_t>(n + k)] = Jet(0.0);
  for (int j = 0; j + 1 < n; ++j) {
    const Jet gap = x[static_cast<std::size_t>(j)] - x[static_cast<std::size_t>(j + 1)];
    const Jet f = potential_.force(gap);
    if (!f.is_finite()) {
      std::ostringstream os;
      os << "non-finite interaction force at gap q" << j + 1 << " - q" << j + 2 << " = "
         << gap.value();
      throw OverflowError(os.str(), j + 1, gap.value());
    }
    out[static_cast<std::size_t>(n + j)] -= f;
    out[static_cast<std::size_t>(n + j + 1)] += f;
  }
  return out;
}

Eigen::VectorXd ControlAffineField::control_direction(Channel c) const {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(dim());
  e[control_index(c)] = 1.0;
  return e;
}

Eigen::MatrixXd ControlAffineField::drift_jacobian(const Eigen::VectorXd& x) const {
  const int n = n_;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  for (int k = 0; k < n; ++k) A(k, n + k) = 1.0;
  for (int j = 0; j + 1 < n; ++j) {
    const double s = potential_.stiffness(x[j] - x[j + 1]);
    // force f(g_j) enters dp_j with -1 and dp_{j+1} with +1; dg/dq_j = 1, dg/dq_{j+1} = -1
    A(n + j, j) -= s;
    A(n + j, j + 1) += s;
    A(n + j + 1, j) += s;
    A(n + j + 1, j + 1) -= s;
  }
  return A;
}

Eigen::VectorXd drift_field(const ChainState& state, const PotentialModel& potential) {
  ControlAffineField field(state.n(), potential);
  return field.drift(state.to_vector());
}

Eigen::VectorXd controlled_field(const ChainState& state, const PotentialModel& potential,
                                 double u, double v) {
  if (!std::isfinite(u) || !std::isfinite(v)) throw ValidationError("controls must be finite");
  ControlAffineField field(state.n(), potential);
  return field.controlled(state.to_vector(), u, v);
}

double kinetic_energy(const ChainState& state) {
  double s = 0.0;
  for (double pk : state.p) s += pk * pk;
  return 0.5 * s;
}

double potential_energy(const ChainState& state, const PotentialModel& potential) {
  double s = 0.0;
  for (std::size_t j = 0; j + 1 < state.q.size(); ++j) {
    const double gap = state.q[j] - state.q[j + 1];
    const double e = potential.energy(gap);
    if (!std::isfinite(e)) {
      std::ostringstream os;
      os << "non-finite potential at gap q" << j + 1 << " - q" << j + 2 << " = " << gap;
      throw OverflowError(os.str(), static_cast<int>(j) + 1, gap);
    }
    s += e;
  }
  return s;
}

double total_energy(const ChainState& state, const PotentialModel& potential) {
  state.validate();
  return kinetic_energy(state) + potential_energy(state, potential);
}

// --- control signals ---------------------------------------------------------

ControlSignal::ControlSignal() = default;

ControlSignal ControlSignal::constant(double u, double v) {
  return piecewise_constant({0.0, 1.0}, {u}, {v});
}

ControlSignal ControlSignal::piecewise_constant(std::vector<double> knots, std::vector<double> u,
                                                std::vector<double> v) {
  if (knots.size() < 2 || u.size() + 1 != knots.size() || v.size() + 1 != knots.size()) {
    throw ValidationError("piecewise-constant signal: need |u| = |v| = |knots| - 1 >= 1");
  }
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (!(knots[i] > knots[i - 1])) throw ValidationError("signal knots must increase strictly");
  }
  ControlSignal s;
  s.kind_ = Kind::piecewise;
  s.knots_ = std::move(knots);
  s.u_ = std::move(u);
  s.v_ = std::move(v);
  return s;
}

ControlSignal ControlSignal::sampled(std::vector<double> t, std::vector<double> u,
                                     std::vector<double> v, Interpolation interpolation,
                                     const std::vector<double>& joins) {
  if (t.empty() || u.size() != t.size() || v.size() != t.size()) {
    throw ValidationError("sampled signal: need |t| = |u| = |v| >= 1");
  }
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (!(t[i] > t[i - 1])) throw ValidationError("signal sample times must increase strictly");
  }
  ControlSignal s;
  s.kind_ = Kind::sampled;
  s.interpolation_ = interpolation;
  s.joins_.push_back(0);
  for (double j : joins) {
    const auto it = std::lower_bound(t.begin(), t.end(), j);
    if (it == t.end() || *it != j) throw ValidationError("signal join is not a sample time");
    const auto k = static_cast<std::size_t>(it - t.begin());
    if (k > s.joins_.back() && k + 1 < t.size()) s.joins_.push_back(k);
  }
  s.joins_.push_back(t.size() - 1);
  s.knots_ = std::move(t);
  s.u_ = std::move(u);
  s.v_ = std::move(v);
  return s;
}

ControlSignal ControlSignal::feedback(FeedbackFn fn) {
  if (!fn) throw ValidationError("feedback signal: empty function");
  ControlSignal s;
  s.kind_ = Kind::feedback;
  s.fn_ = std::move(fn);
  return s;
}

Controls ControlSignal::operator()(double t, const Eigen::VectorXd& x) const {
  switch (kind_) {
    case Kind::zero:
      return {};
    case Kind::piecewise: {
      const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
      std::ptrdiff_t i = (it - knots_.begin()) - 1;
      i = std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(u_.size()) - 1);
      return {u_[static_cast<std::size_t>(i)], v_[static_cast<std::size_t>(i)]};
    }
    case Kind::sampled: {
      if (t <= knots_.front()) return {u_.front(), v_.front()};
      if (t >= knots_.back()) return {u_.back(), v_.back()};
      const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
      const auto i = static_cast<std::size_t>(it - knots_.begin());
      // Piece [lo, hi] of knot indices holding the interval (i-1, i).
      const auto jt = std::lower_bound(joins_.begin(), joins_.end(), i);
      const std::size_t hi = *jt, lo = *(jt - 1);
      if (interpolation_ == Interpolation::linear || hi - lo < 3) {
        const double w = (t - knots_[i - 1]) / (knots_[i] - knots_[i - 1]);
        return {u_[i - 1] + w * (u_[i] - u_[i - 1]), v_[i - 1] + w * (v_[i] - v_[i - 1])};
      }
      // Stencil i-2 .. i+1, shifted inward at the ends of the piece.
      const std::size_t a = std::clamp<std::size_t>(i, lo + 2, hi - 1) - 2;
      Controls c;
      for (std::size_t j = a; j < a + 4; ++j) {
        double w = 1.0;
        for (std::size_t m = a; m < a + 4; ++m) {
          if (m != j) w *= (t - knots_[m]) / (knots_[j] - knots_[m]);
        }
        c.u += w * u_[j];
        c.v += w * v_[j];
      }
      if (bounds) {
        c.u = std::clamp(c.u, bounds->u_lo, bounds->u_hi);
        c.v = std::clamp(c.v, bounds->v_lo, bounds->v_hi);
      }
      return c;
    }
    case Kind::feedback:
      return fn_(t, x);
  }
  return {};
}

std::vector<double> ControlSignal::breakpoints(double t0, double t1) const {
  std::vector<double> out;
  if (kind_ != Kind::piecewise) return out;
  for (std::size_t i = 1; i + 1 < knots_.size(); ++i) {
    if (knots_[i] > t0 && knots_[i] < t1) out.push_back(knots_[i]);
  }
  return out;
}

// --- integration -------------------------------------------------------------

Eigen::VectorXd rk4_step(const ControlAffineField& field, const Eigen::VectorXd& x, double t,
                         double h, const ControlSignal& signal) {
  const bool frozen = signal.is_piecewise_constant();
  const double mid = t + 0.5 * h;
  auto rhs = [&](double s, const Eigen::VectorXd& y) {
    const Controls c = signal(frozen ? mid : s, y);
    return field.controlled(y, c.u, c.v);
  };
  const Eigen::VectorXd k1 = rhs(t, x);
  const Eigen::VectorXd k2 = rhs(mid, x + 0.5 * h * k1);
  const Eigen::VectorXd k3 = rhs(mid, x + 0.5 * h * k2);
  const Eigen::VectorXd k4 = rhs(t + h, x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

namespace {

void leapfrog_step(const ControlAffineField& field, Eigen::VectorXd& x, double h) {
  const int n = field.n();
  Eigen::VectorXd f(2 * n);
  field.drift_into(x.data(), f.data());
  x.tail(n) += 0.5 * h * f.tail(n);
  x.head(n) += h * x.tail(n);
  field.drift_into(x.data(), f.data());
  x.tail(n) += 0.5 * h * f.tail(n);
}

void yoshida_step(const ControlAffineField& field, Eigen::VectorXd& x, double h) {
  const double cbrt2 = std::cbrt(2.0);
  const double w1 = 1.0 / (2.0 - cbrt2);
  const double w0 = -cbrt2 / (2.0 - cbrt2);
  leapfrog_step(field, x, w1 * h);
  leapfrog_step(field, x, w0 * h);
  leapfrog_step(field, x, w1 * h);
}

}  // namespace

Trajectory simulate(const ControlAffineField& field, const ChainState& x0,
                    const ControlSignal& signal, double T, const SimulationOptions& options) {
  x0.validate();
  if (x0.n() != field.n()) throw ValidationError("simulate: state size does not match field");
  if (!(T > 0.0) || !std::isfinite(T)) throw ValidationError("simulate: horizon T must be > 0");
  if (!(options.step > 0.0)) throw ValidationError("simulate: step must be > 0");
  if (options.integrator != Integrator::rk4 && !signal.is_zero()) {
    throw ValidationError("splitting integrators apply to the uncontrolled flow only");
  }

  Trajectory traj;
  traj.n = field.n();
  Eigen::VectorXd x = x0.to_vector();
  auto record = [&](double t) {
    const Controls c = signal(t, x);
    traj.t.push_back(t);
    traj.x.push_back(x);
    traj.u.push_back(c.u);
    traj.v.push_back(c.v);
  };

  const auto steps = static_cast<long>(std::ceil(T / options.step - 1e-9));
  record(0.0);
  try {
    for (long i = 0; i < steps; ++i) {
      const double a = static_cast<double>(i) * options.step;
      const double b = (i + 1 == steps) ? T : std::min(T, static_cast<double>(i + 1) * options.step);
      if (options.integrator == Integrator::rk4) {
        double s = a;
        for (double bp : signal.breakpoints(a, b)) {
          x = rk4_step(field, x, s, bp - s, signal);
          s = bp;
          if (options.record_breakpoints) record(s);
        }
        x = rk4_step(field, x, s, b - s, signal);
      } else if (options.integrator == Integrator::leapfrog) {
        leapfrog_step(field, x, b - a);
      } else {
        yoshida_step(field, x, b - a);
      }
      if (!x.allFinite()) {
        std::ostringstream os;
        os << "state became non-finite at t=" << b;
        throw NumericalError(os.str());
      }
      record(b);
    }
  } catch (const NumericalError& e) {
    traj.truncated = true;
    traj.diagnostic = e.what();
  }
  return traj;
}

}  // namespace chainctl
