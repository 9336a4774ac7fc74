#include "chainctl/time_optimal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "chainctl/errors.hpp"
#include "chainctl/lie_engine.hpp"
#include "chainctl/linearization.hpp"

namespace chainctl {

namespace {

constexpr double kNodeEps = 1e-12;

struct Piece {
  double a, b;
  double u, v;
};

std::vector<Piece> pieces_of(const SwitchingSchedule& s) {
  std::vector<double> cuts = s.all_switches();
  std::vector<Piece> out;
  double a = 0.0;
  cuts.push_back(s.T);
  for (double b : cuts) {
    if (b - a <= 0.0) continue;
    const Controls c = s.at(0.5 * (a + b));
    out.push_back({a, b, c.u, c.v});
    a = b;
  }
  return out;
}

int steps_for(double len, double step) {
  return std::max(1, static_cast<int>(std::ceil(len / step - 1e-9)));
}

// psi' = -Df(x)^T psi, written out with the stiffness phi''.
Eigen::VectorXd adjoint_rhs(const ControlAffineField& field, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& psi) {
  const int n = field.n();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(2 * n);
  for (int k = 0; k < n; ++k) out[n + k] = -psi[k];
  for (int j = 0; j + 1 < n; ++j) {
    const double s = field.potential().stiffness(x[j] - x[j + 1]);
    if (!std::isfinite(s)) {
      std::ostringstream os;
      os << "non-finite stiffness at gap q" << j + 1 << " - q" << j + 2 << " = " << x[j] - x[j + 1];
      throw NumericalError(os.str());
    }
    const double d = s * (psi[n + j] - psi[n + j + 1]);
    out[j] += d;
    out[j + 1] -= d;
  }
  return out;
}

// One RK4 step of the coupled (x, psi) system; h may be negative.
void coupled_step(const ControlAffineField& field, Eigen::VectorXd& x, Eigen::VectorXd& psi,
                  double u, double v, double h) {
  const Eigen::VectorXd k1 = field.controlled(x, u, v);
  const Eigen::VectorXd l1 = adjoint_rhs(field, x, psi);
  const Eigen::VectorXd x2 = x + 0.5 * h * k1, p2 = psi + 0.5 * h * l1;
  const Eigen::VectorXd k2 = field.controlled(x2, u, v);
  const Eigen::VectorXd l2 = adjoint_rhs(field, x2, p2);
  const Eigen::VectorXd x3 = x + 0.5 * h * k2, p3 = psi + 0.5 * h * l2;
  const Eigen::VectorXd k3 = field.controlled(x3, u, v);
  const Eigen::VectorXd l3 = adjoint_rhs(field, x3, p3);
  const Eigen::VectorXd x4 = x + h * k3, p4 = psi + h * l3;
  const Eigen::VectorXd k4 = field.controlled(x4, u, v);
  const Eigen::VectorXd l4 = adjoint_rhs(field, x4, p4);
  x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  psi += (h / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
}

// State and Phi(T, t) together, backwards: dPsi/dt = -Psi Df.
void matrix_step(const ControlAffineField& field, Eigen::VectorXd& x, Eigen::MatrixXd& P, double u,
                 double v, double h) {
  auto rhs = [&](const Eigen::VectorXd& y, const Eigen::MatrixXd& M) {
    return Eigen::MatrixXd(-M * field.drift_jacobian(y));
  };
  const Eigen::VectorXd k1 = field.controlled(x, u, v);
  const Eigen::MatrixXd l1 = rhs(x, P);
  const Eigen::VectorXd x2 = x + 0.5 * h * k1;
  const Eigen::MatrixXd p2 = P + 0.5 * h * l1;
  const Eigen::VectorXd k2 = field.controlled(x2, u, v);
  const Eigen::MatrixXd l2 = rhs(x2, p2);
  const Eigen::VectorXd x3 = x + 0.5 * h * k2;
  const Eigen::MatrixXd p3 = P + 0.5 * h * l2;
  const Eigen::VectorXd k3 = field.controlled(x3, u, v);
  const Eigen::MatrixXd l3 = rhs(x3, p3);
  const Eigen::VectorXd x4 = x + h * k3;
  const Eigen::MatrixXd p4 = P + h * l3;
  const Eigen::VectorXd k4 = field.controlled(x4, u, v);
  const Eigen::MatrixXd l4 = rhs(x4, p4);
  x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  P += (h / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
}

Eigen::VectorXd rk4_const(const ControlAffineField& field, Eigen::VectorXd x, double u, double v,
                          double h) {
  const Eigen::VectorXd k1 = field.controlled(x, u, v);
  const Eigen::VectorXd k2 = field.controlled(x + 0.5 * h * k1, u, v);
  const Eigen::VectorXd k3 = field.controlled(x + 0.5 * h * k2, u, v);
  const Eigen::VectorXd k4 = field.controlled(x + h * k3, u, v);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Eigen::VectorXd forward_state(const ControlAffineField& field, const Eigen::VectorXd& x0,
                              const std::vector<Piece>& ps, double step) {
  Eigen::VectorXd x = x0;
  for (const Piece& pc : ps) {
    const int m = steps_for(pc.b - pc.a, step);
    const double h = (pc.b - pc.a) / m;
    for (int i = 0; i < m; ++i) x = rk4_const(field, x, pc.u, pc.v, h);
    if (!x.allFinite()) throw NumericalError("state became non-finite along the schedule");
  }
  return x;
}

// Backward adjoint transport from (x(T), psi_T) to t = 0.
Eigen::VectorXd backward_adjoint(const ControlAffineField& field, Eigen::VectorXd x,
                                 Eigen::VectorXd psi, const std::vector<Piece>& ps, double step) {
  for (auto it = ps.rbegin(); it != ps.rend(); ++it) {
    const int m = steps_for(it->b - it->a, step);
    const double h = (it->b - it->a) / m;
    for (int i = 0; i < m; ++i) coupled_step(field, x, psi, it->u, it->v, -h);
  }
  return psi;
}

double hamiltonian_at(const ControlAffineField& field, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& psi, double u, double v) {
  return psi.dot(field.controlled(x, u, v));
}

// Largest Pi over the admissible vertices.
double max_vertex_hamiltonian(const ControlAffineField& field, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& psi, double omega, bool u_only) {
  const double base = psi.dot(field.drift(x));
  const int n = field.n();
  const double su = psi[n];
  const double sv = psi[2 * n - 1];
  double best = -std::numeric_limits<double>::infinity();
  for (double u : {-omega, omega}) {
    if (u_only) {
      best = std::max(best, base + su * u);
      continue;
    }
    for (double v : {-omega, 0.0}) best = std::max(best, base + su * u + sv * v);
  }
  return best;
}

double cubic_hermite(double y0, double d0, double y1, double d1, double h, double s) {
  const double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * d0 + (-2 * s3 + 3 * s2) * y1 +
         (s3 - s2) * h * d1;
}

std::vector<double> locate_zeros(const std::vector<double>& t, const std::vector<double>& y,
                                 const std::vector<double>& dy) {
  std::vector<double> out;
  const std::size_t N = t.size();
  for (std::size_t i = 0; i + 1 < N; ++i) {
    if (y[i] == 0.0) continue;
    if (y[i + 1] == 0.0) {
      std::size_t j = i + 1;
      while (j < N && y[j] == 0.0) ++j;
      if (j < N && (y[j] > 0.0) != (y[i] > 0.0)) out.push_back(t[i + 1]);
      continue;
    }
    if ((y[i] > 0.0) == (y[i + 1] > 0.0)) continue;
    const double h = t[i + 1] - t[i];
    if (h <= 0.0) continue;
    double lo = 0.0, hi = 1.0;
    const bool pos = y[i] > 0.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double val = cubic_hermite(y[i], dy[i], y[i + 1], dy[i + 1], h, mid);
      if ((val > 0.0) == pos) lo = mid;
      else hi = mid;
    }
    out.push_back(t[i] + 0.5 * (lo + hi) * h);
  }
  return out;
}

double longest_vanishing(const std::vector<double>& t, const std::vector<double>& y, double eps) {
  double peak = 0.0;
  for (double v : y) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) return t.empty() ? 0.0 : t.back() - t.front();
  const double thr = eps * peak;
  double longest = 0.0;
  std::size_t start = 0;
  bool in = false;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool small = std::abs(y[i]) < thr;
    if (small && !in) {
      in = true;
      start = i;
    }
    if (in && (!small || i + 1 == y.size())) {
      const std::size_t end = small ? i : i - 1;
      longest = std::max(longest, t[end] - t[start]);
      in = false;
    }
  }
  return longest;
}

int max_in_window(const std::vector<double>& zeros, double window) {
  int best = 0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < zeros.size(); ++i) {
    while (zeros[i] - zeros[j] > window) ++j;
    best = std::max(best, static_cast<int>(i - j + 1));
  }
  return best;
}

}  // namespace

// ---------------------------------------------------------------------------

AdjointState::AdjointState(std::vector<double> q, std::vector<double> p)
    : psi_q(std::move(q)), psi_p(std::move(p)) {
  if (psi_q.size() != psi_p.size()) throw ValidationError("adjoint: |psi_q| != |psi_p|");
}

AdjointState AdjointState::from_vector(const Eigen::VectorXd& v) {
  if (v.size() % 2 != 0) throw ValidationError("adjoint vector must have even length");
  const int n = static_cast<int>(v.size() / 2);
  AdjointState a;
  a.psi_q.assign(v.data(), v.data() + n);
  a.psi_p.assign(v.data() + n, v.data() + 2 * n);
  return a;
}

Eigen::VectorXd AdjointState::to_vector() const {
  const int n = this->n();
  Eigen::VectorXd v(2 * n);
  for (int k = 0; k < n; ++k) {
    v[k] = psi_q[k];
    v[n + k] = psi_p[k];
  }
  return v;
}

double pmp_hamiltonian(const ControlAffineField& field, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& psi, double u, double v) {
  return hamiltonian_at(field, x, psi, u, v);
}

double pmp_hamiltonian(const ChainState& x, const AdjointState& psi, double u, double v,
                       const PotentialModel& potential) {
  x.validate();
  if (psi.n() != x.n()) throw ValidationError("pmp_hamiltonian: adjoint size does not match state");
  if (!std::isfinite(u) || !std::isfinite(v)) throw ValidationError("controls must be finite");
  ControlAffineField field(x.n(), potential);
  return hamiltonian_at(field, x.to_vector(), psi.to_vector(), u, v);
}

// ---------------------------------------------------------------------------

double SwitchingSchedule::u_value(int k) const { return (k % 2 == 0) ? u0 : -u0; }

double SwitchingSchedule::v_value(int k) const {
  if (k % 2 == 0) return v0;
  return v0 == 0.0 ? -omega : 0.0;
}

Controls SwitchingSchedule::at(double t) const {
  const auto ku = std::upper_bound(u_switches.begin(), u_switches.end(), t) - u_switches.begin();
  const auto kv = std::upper_bound(v_switches.begin(), v_switches.end(), t) - v_switches.begin();
  return {u_value(static_cast<int>(ku)), v_value(static_cast<int>(kv))};
}

std::vector<double> SwitchingSchedule::all_switches() const {
  std::vector<double> all(u_switches);
  all.insert(all.end(), v_switches.begin(), v_switches.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end(),
                        [](double a, double b) { return std::abs(a - b) <= kNodeEps; }),
            all.end());
  return all;
}

ControlSignal SwitchingSchedule::signal() const {
  std::vector<double> knots{0.0};
  for (double s : all_switches()) knots.push_back(s);
  knots.push_back(std::max(T, knots.back() + 1e-12));
  std::vector<double> u, v;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const Controls c = at(0.5 * (knots[i] + knots[i + 1]));
    u.push_back(c.u);
    v.push_back(c.v);
  }
  ControlSignal sig = ControlSignal::piecewise_constant(knots, u, v);
  sig.bounds = ControlBounds::rectangle(omega);
  return sig;
}

void SwitchingSchedule::validate() const {
  if (!(omega > 0.0) || !std::isfinite(omega)) throw ValidationError("schedule: omega must be > 0");
  if (!(T >= 0.0) || !std::isfinite(T)) throw ValidationError("schedule: T must be finite and >= 0");
  if (u0 != omega && u0 != -omega) throw ValidationError("schedule: u value must be -omega or +omega");
  if (v0 != 0.0 && v0 != -omega) throw ValidationError("schedule: v value must be -omega or 0");
  for (const auto* list : {&u_switches, &v_switches}) {
    double prev = 0.0;
    for (double s : *list) {
      if (!(s > prev) || !(s < T)) {
        throw ValidationError("schedule: switching times must be strictly increasing within (0, T)");
      }
      prev = s;
    }
  }
}

// ---------------------------------------------------------------------------

ExtremalTrajectory extremal_flow(const ChainState& x0, const AdjointState& psi0,
                                 const SwitchingSchedule& schedule,
                                 const PotentialModel& potential, double step) {
  x0.validate();
  schedule.validate();
  if (psi0.n() != x0.n()) throw ValidationError("extremal_flow: adjoint size does not match state");
  if (!(step > 0.0)) throw ValidationError("extremal_flow: step must be > 0");
  const ControlAffineField field(x0.n(), potential);

  ExtremalTrajectory tr;
  tr.n = x0.n();
  Eigen::VectorXd x = x0.to_vector();
  Eigen::VectorXd psi = psi0.to_vector();
  const auto ps = pieces_of(schedule);
  auto record = [&](double t, double u, double v) {
    tr.t.push_back(t);
    tr.x.push_back(x);
    tr.psi.push_back(psi);
    tr.u.push_back(u);
    tr.v.push_back(v);
  };
  if (ps.empty()) {
    const Controls c = schedule.at(0.0);
    record(0.0, c.u, c.v);
    return tr;
  }
  record(0.0, ps.front().u, ps.front().v);
  try {
    for (std::size_t k = 0; k < ps.size(); ++k) {
      const Piece& pc = ps[k];
      const int m = steps_for(pc.b - pc.a, step);
      const double h = (pc.b - pc.a) / m;
      for (int i = 0; i < m; ++i) {
        coupled_step(field, x, psi, pc.u, pc.v, h);
        if (!x.allFinite() || !psi.allFinite()) {
          std::ostringstream os;
          os << "extremal became non-finite at t=" << pc.a + (i + 1) * h;
          throw NumericalError(os.str());
        }
        const bool last = (i + 1 == m);
        const Piece& next = (last && k + 1 < ps.size()) ? ps[k + 1] : pc;
        record(last ? pc.b : pc.a + (i + 1) * h, next.u, next.v);
      }
    }
  } catch (const NumericalError& e) {
    tr.truncated = true;
    tr.diagnostic = e.what();
  }
  return tr;
}

SwitchingSeries switching_functions(const ExtremalTrajectory& traj) {
  SwitchingSeries s;
  const int n = traj.n;
  if (n == 0) return s;
  std::vector<double> du, dv;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const Eigen::VectorXd& psi = traj.psi[i];
    s.t.push_back(traj.t[i]);
    s.sigma_u.push_back(psi[n]);
    s.sigma_v.push_back(psi[2 * n - 1]);
    du.push_back(-psi[0]);
    dv.push_back(-psi[n - 1]);
  }
  s.zeros_u = locate_zeros(s.t, s.sigma_u, du);
  s.zeros_v = locate_zeros(s.t, s.sigma_v, dv);
  return s;
}

Controls bang_from_sign(double sigma_u, double sigma_v, double omega, Controls fallback) {
  Controls c = fallback;
  if (sigma_u > 0.0) c.u = omega;
  else if (sigma_u < 0.0) c.u = -omega;
  if (sigma_v > 0.0) c.v = 0.0;
  else if (sigma_v < 0.0) c.v = -omega;
  return c;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd schedule_sensitivity(const ChainState& x0, const SwitchingSchedule& schedule,
                                     const PotentialModel& potential, double step,
                                     Eigen::VectorXd* xT) {
  schedule.validate();
  const int n = x0.n();
  const ControlAffineField field(n, potential);
  const auto ps = pieces_of(schedule);
  const int ku = static_cast<int>(schedule.u_switches.size());
  const int kv = static_cast<int>(schedule.v_switches.size());
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(2 * n, 1 + ku + kv);

  Eigen::VectorXd x = forward_state(field, x0.to_vector(), ps, step);
  if (xT) *xT = x;
  if (ps.empty()) return S;
  S.col(0) = field.controlled(x, ps.back().u, ps.back().v);

  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(2 * n, 2 * n);
  const int iu = field.control_index(Channel::u);
  const int iv = field.control_index(Channel::v);
  auto fill = [&](double tau) {
    for (int i = 0; i < ku; ++i) {
      if (std::abs(schedule.u_switches[i] - tau) <= kNodeEps) {
        S.col(1 + i) = P.col(iu) * (schedule.u_value(i) - schedule.u_value(i + 1));
      }
    }
    for (int i = 0; i < kv; ++i) {
      if (std::abs(schedule.v_switches[i] - tau) <= kNodeEps) {
        S.col(1 + ku + i) = P.col(iv) * (schedule.v_value(i) - schedule.v_value(i + 1));
      }
    }
  };
  for (auto it = ps.rbegin(); it != ps.rend(); ++it) {
    const int m = steps_for(it->b - it->a, step);
    const double h = (it->b - it->a) / m;
    for (int i = 0; i < m; ++i) matrix_step(field, x, P, it->u, it->v, -h);
    if (it->a > 0.0) fill(it->a);
  }
  return S;
}

// ---------------------------------------------------------------------------

ExtremalCertificate certify(const ChainState& x0, const SwitchingSchedule& schedule,
                            const Eigen::VectorXd& psi_T_in, const PotentialModel& potential,
                            const MinTimeOptions& options, Eigen::VectorXd* psi0_out) {
  const int n = x0.n();
  const bool u_only = options.u_only || n == 1;
  const ControlAffineField field(n, potential);
  ExtremalCertificate cert;
  cert.switches_u = static_cast<int>(schedule.u_switches.size());
  cert.switches_v = static_cast<int>(schedule.v_switches.size());
  const double nrm = psi_T_in.norm();
  if (!(nrm > 0.0) || !std::isfinite(nrm)) {
    cert.note = "terminal adjoint is zero";
    return cert;
  }
  const Eigen::VectorXd psi_T = psi_T_in / nrm;
  const auto ps = pieces_of(schedule);
  const Eigen::VectorXd xT = forward_state(field, x0.to_vector(), ps, options.step);
  const Eigen::VectorXd psi0 = backward_adjoint(field, xT, psi_T, ps, options.step);
  if (psi0_out) *psi0_out = psi0;

  const ExtremalTrajectory tr =
      extremal_flow(x0, AdjointState::from_vector(psi0), schedule, potential, options.step);
  if (tr.truncated) {
    cert.note = "extremal truncated: " + tr.diagnostic;
    return cert;
  }
  const auto nodes = schedule.all_switches();
  auto is_node = [&](double t) {
    for (double s : nodes)
      if (std::abs(s - t) <= 1e-9) return true;
    return false;
  };

  const double pi0 = hamiltonian_at(field, tr.x.front(), tr.psi.front(), tr.u.front(), tr.v.front());
  double worst = 0.0, spread = 0.0, psi_min = std::numeric_limits<double>::infinity();
  int violations = 0, counted = 0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const Eigen::VectorXd& x = tr.x[i];
    const Eigen::VectorXd& psi = tr.psi[i];
    psi_min = std::min(psi_min, psi.norm());
    const double pi = hamiltonian_at(field, x, psi, tr.u[i], tr.v[i]);
    spread = std::max(spread, std::abs(pi - pi0));
    if (is_node(tr.t[i])) continue;
    ++counted;
    worst = std::min(worst, pi - max_vertex_hamiltonian(field, x, psi, schedule.omega, u_only));
    Controls want = bang_from_sign(psi[n], psi[2 * n - 1], schedule.omega, {tr.u[i], tr.v[i]});
    if (u_only) want.v = tr.v[i];
    if (want.u != tr.u[i] || want.v != tr.v[i]) ++violations;
  }
  // Pi just before T, with the control of the last arc.
  const Controls last = ps.empty() ? schedule.at(0.0) : Controls{ps.back().u, ps.back().v};
  cert.transversality = hamiltonian_at(field, tr.x.back(), tr.psi.back(), last.u, last.v);
  cert.residual = worst;
  cert.hamiltonian_spread = spread;
  cert.sign_violations = violations;
  cert.grid_points = counted;
  cert.sign_consistency = counted > 0 ? 1.0 - static_cast<double>(violations) / counted : 1.0;
  cert.psi_min_norm = psi_min;

  const SwitchingSeries sw = switching_functions(tr);
  const SwitchingAuditOptions ao;
  double vanish = longest_vanishing(sw.t, sw.sigma_u, ao.eps);
  if (!u_only) vanish = std::max(vanish, longest_vanishing(sw.t, sw.sigma_v, ao.eps));
  cert.singular_flag = vanish > ao.singular_length;

  std::ostringstream note;
  const double tol = options.certificate_tol;
  bool ok = true;
  if (std::abs(cert.residual) > tol) {
    ok = false;
    note << "maximality residual " << cert.residual << "; ";
  }
  if (cert.transversality < -tol) {
    ok = false;
    note << "transversality " << cert.transversality << "; ";
  }
  if (cert.hamiltonian_spread > options.hamiltonian_tol) {
    ok = false;
    note << "Pi spread " << cert.hamiltonian_spread << "; ";
  }
  if (cert.sign_consistency < 0.99) {
    ok = false;
    note << "sign consistency " << cert.sign_consistency << "; ";
  }
  if (cert.singular_flag) {
    ok = false;
    note << "switching function vanishes over " << vanish << "; ";
  }
  if (!(psi_min > 0.0)) {
    ok = false;
    note << "adjoint vanishes; ";
  }
  cert.pass = ok;
  cert.note = ok ? "extremal" : note.str();
  return cert;
}

// ---------------------------------------------------------------------------

namespace {

struct Profile {
  double u0, v0;
  int ku, kv;
};

// Decision variables: theta = log T, then per channel k arc logits (the first
// arc's logit is pinned to 0), so switching times stay ordered inside (0, T).
struct Parametrization {
  Profile prof;
  double omega;

  int size() const { return 1 + prof.ku + prof.kv; }

  static void fractions(const double* a, int k, std::vector<double>& w) {
    w.assign(k + 1, 0.0);
    double mx = 0.0;
    for (int j = 0; j < k; ++j) mx = std::max(mx, a[j]);
    w[0] = std::exp(-mx);
    double sum = w[0];
    for (int j = 0; j < k; ++j) {
      w[j + 1] = std::exp(a[j] - mx);
      sum += w[j + 1];
    }
    for (double& x : w) x /= sum;
  }

  SwitchingSchedule decode(const Eigen::VectorXd& p) const {
    SwitchingSchedule s;
    s.omega = omega;
    s.T = std::exp(p[0]);
    s.u0 = prof.u0;
    s.v0 = prof.v0;
    std::vector<double> w;
    fractions(p.data() + 1, prof.ku, w);
    double c = 0.0;
    for (int i = 0; i < prof.ku; ++i) {
      c += w[i];
      s.u_switches.push_back(s.T * c);
    }
    fractions(p.data() + 1 + prof.ku, prof.kv, w);
    c = 0.0;
    for (int i = 0; i < prof.kv; ++i) {
      c += w[i];
      s.v_switches.push_back(s.T * c);
    }
    return s;
  }

  // d(T, tau) / dp.
  Eigen::MatrixXd chain(const Eigen::VectorXd& p) const {
    const int m = size();
    const double T = std::exp(p[0]);
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(m, m);
    D(0, 0) = T;
    int row = 1;
    for (int ch = 0; ch < 2; ++ch) {
      const int k = ch == 0 ? prof.ku : prof.kv;
      const int off = ch == 0 ? 1 : 1 + prof.ku;
      std::vector<double> w;
      fractions(p.data() + off, k, w);
      double c = 0.0;
      for (int i = 1; i <= k; ++i) {
        c += w[i - 1];
        D(row, 0) = T * c;
        for (int j = 1; j <= k; ++j) D(row, off + j - 1) = T * ((j < i ? w[j] : 0.0) - c * w[j]);
        ++row;
      }
    }
    return D;
  }
};

struct Evaluation {
  Eigen::VectorXd r;
  Eigen::MatrixXd S;
  Eigen::MatrixXd J;
  bool ok = false;
};

Evaluation evaluate(const Parametrization& par, const Eigen::VectorXd& p, const ChainState& x0,
                    const Eigen::VectorXd& x1, const PotentialModel& pot, double step) {
  Evaluation e;
  try {
    const SwitchingSchedule s = par.decode(p);
    s.validate();
    Eigen::VectorXd xT;
    e.S = schedule_sensitivity(x0, s, pot, step, &xT);
    e.r = xT - x1;
    e.J = e.S * par.chain(p);
    e.ok = e.r.allFinite() && e.J.allFinite();
  } catch (const std::exception&) {
    e.ok = false;
  }
  return e;
}

void clamp_params(Eigen::VectorXd& p) {
  p[0] = std::clamp(p[0], std::log(1e-6), std::log(1e4));
  for (int i = 1; i < p.size(); ++i) p[i] = std::clamp(p[i], -30.0, 30.0);
}

// Levenberg-Marquardt on the endpoint residual; returns the final residual norm.
double restore(const Parametrization& par, Eigen::VectorXd& p, const ChainState& x0,
               const Eigen::VectorXd& x1, const PotentialModel& pot, double step, double tol,
               int max_iter, Evaluation& e) {
  e = evaluate(par, p, x0, x1, pot, step);
  if (!e.ok) return std::numeric_limits<double>::infinity();
  double lambda = 1e-3;
  const int m = par.size();
  for (int it = 0; it < max_iter; ++it) {
    const double cost = e.r.norm();
    if (e.r.lpNorm<Eigen::Infinity>() <= tol) return cost;
    const Eigen::MatrixXd JtJ = e.J.transpose() * e.J;
    const Eigen::VectorXd g = e.J.transpose() * e.r;
    bool improved = false;
    for (int tries = 0; tries < 12; ++tries) {
      Eigen::MatrixXd A = JtJ;
      for (int i = 0; i < m; ++i) A(i, i) += lambda * (1.0 + JtJ(i, i));
      Eigen::VectorXd d = -A.ldlt().solve(g);
      const double dn = d.lpNorm<Eigen::Infinity>();
      if (dn > 2.0) d *= 2.0 / dn;
      Eigen::VectorXd q = p + d;
      clamp_params(q);
      Evaluation f = evaluate(par, q, x0, x1, pot, step);
      if (f.ok && f.r.norm() < cost) {
        p = q;
        e = std::move(f);
        lambda = std::max(lambda / 4.0, 1e-12);
        improved = true;
        break;
      }
      lambda *= 5.0;
    }
    if (!improved) break;
  }
  return e.r.norm();
}

// Tangent projection of d theta onto null(J).
Eigen::VectorXd tangent_gradient(const Eigen::MatrixXd& J) {
  const int m = static_cast<int>(J.cols());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > 1e-10 * sv[0]) ++rank;
  const Eigen::MatrixXd N = svd.matrixV().rightCols(m - rank);
  return N * N.row(0).transpose();
}

// Reduce T along the solution manifold (more parameters than equations):
// predictor along the descent tangent, corrector by restoration, step length
// from a secant on the tangential slope of theta.
void descend(const Parametrization& par, Eigen::VectorXd& p, const ChainState& x0,
             const Eigen::VectorXd& x1, const PotentialModel& pot, double step, double tol,
             double alpha, int max_iter, Evaluation& e) {
  if (par.size() <= x1.size()) return;
  Eigen::VectorXd g = tangent_gradient(e.J);
  for (int it = 0; it < max_iter && alpha > 1e-9; ++it) {
    const double gn = g.norm();
    if (gn < 1e-10) return;  // stationary
    const Eigen::VectorXd d = -g / gn;
    const double s0 = -gn;  // slope of theta along d
    Eigen::VectorXd q = p + alpha * d;
    clamp_params(q);
    Evaluation f;
    restore(par, q, x0, x1, pot, step, tol, 12, f);
    if (!f.ok || f.r.lpNorm<Eigen::Infinity>() > tol || q[0] >= p[0]) {
      alpha *= 0.25;
      continue;
    }
    const Eigen::VectorXd gq = tangent_gradient(f.J);
    const double s1 = gq.dot(d);
    if (s1 < s0) {
      // concave along d: accept and stretch
      p = q;
      e = std::move(f);
      g = gq;
      alpha *= 2.0;
      continue;
    }
    const double a_star = alpha * s0 / (s0 - s1);
    if (s1 > 0.0) {
      // overshoot: try the secant point between
      Eigen::VectorXd r = p + a_star * d;
      clamp_params(r);
      Evaluation fr;
      restore(par, r, x0, x1, pot, step, tol, 12, fr);
      if (fr.ok && fr.r.lpNorm<Eigen::Infinity>() <= tol && r[0] < q[0]) {
        p = r;
        e = std::move(fr);
        g = tangent_gradient(e.J);
        alpha = std::max(a_star, 1e-9);
        continue;
      }
    }
    p = q;
    e = std::move(f);
    g = gq;
    alpha = std::clamp(a_star - alpha, 0.25 * alpha, 4.0 * alpha);
  }
}

// Drop arcs shorter than `min_arc` (two switches cancel, or a switch sits on
// an end of the horizon).
SwitchingSchedule compress(SwitchingSchedule s, double min_arc) {
  auto clean = [&](std::vector<double>& sw, double& first, auto flip) {
    bool changed = true;
    while (changed) {
      changed = false;
      if (!sw.empty() && sw.front() < min_arc) {
        first = flip(first);
        sw.erase(sw.begin());
        changed = true;
        continue;
      }
      if (!sw.empty() && s.T - sw.back() < min_arc) {
        sw.pop_back();
        changed = true;
        continue;
      }
      for (std::size_t i = 0; i + 1 < sw.size(); ++i) {
        if (sw[i + 1] - sw[i] < min_arc) {
          sw.erase(sw.begin() + static_cast<long>(i), sw.begin() + static_cast<long>(i) + 2);
          changed = true;
          break;
        }
      }
    }
  };
  const double om = s.omega;
  clean(s.u_switches, s.u0, [](double u) { return -u; });
  clean(s.v_switches, s.v0, [om](double v) { return v == 0.0 ? -om : 0.0; });
  return s;
}

Eigen::VectorXd terminal_adjoint(const Eigen::MatrixXd& S) {
  const int dim = static_cast<int>(S.rows());
  const int k = static_cast<int>(S.cols()) - 1;
  const Eigen::VectorXd xdot = S.col(0);
  Eigen::MatrixXd N;
  if (k == 0) {
    N = Eigen::MatrixXd::Identity(dim, dim);
  } else {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(S.rightCols(k), Eigen::ComputeFullU);
    N = k < dim ? Eigen::MatrixXd(svd.matrixU().rightCols(dim - k))
                : Eigen::MatrixXd(svd.matrixU().rightCols(1));
  }
  Eigen::VectorXd psi = N * (N.transpose() * xdot);
  if (psi.norm() < 1e-12 * (1.0 + xdot.norm())) psi = N.col(0);
  psi.normalize();
  if (psi.dot(xdot) < 0.0) psi = -psi;
  return psi;
}

double flat_upper_bound(const ChainState& x0, const ChainState& x1, double omega,
                        const PotentialModel& pot) {
  const ControlBounds box = ControlBounds::rectangle(omega);
  SteerOptions so;
  so.max_doublings = 0;
  for (double T = 0.5; T <= 32.0; T *= 2.0) {
    try {
      const SteerResult r = steer_flat(x0, x1, T, pot, so);
      if (r.endpoint_error <= 1e-6 && box.contains({r.max_abs_u, r.min_v}) &&
          box.contains({-r.max_abs_u, r.max_v}))
        return T;
    } catch (const NumericalError&) {
    }
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace

MinTimeResult solve_min_time(const ChainState& x0, const ChainState& x1, double omega,
                             const PotentialModel& potential, const MinTimeOptions& options) {
  x0.validate();
  x1.validate();
  if (x0.n() != x1.n()) throw ValidationError("solve_min_time: states of different size");
  if (!(omega > 0.0) || !std::isfinite(omega)) throw ValidationError("omega must be > 0");
  if (!(options.step > 0.0)) throw ValidationError("solve_min_time: step must be > 0");
  const int n = x0.n();
  const bool u_only = options.u_only || n == 1;
  MinTimeOptions opt = options;
  opt.u_only = u_only;

  MinTimeResult res;
  res.schedule.omega = omega;
  res.schedule.u0 = omega;
  res.schedule.v0 = 0.0;
  const Eigen::VectorXd a = x0.to_vector(), b = x1.to_vector();
  if ((a - b).lpNorm<Eigen::Infinity>() == 0.0) {
    res.certificate.pass = true;
    res.certificate.note = "x0 = x1";
    res.psi0 = res.psiT = AdjointState(std::vector<double>(n, 0.0), std::vector<double>(n, 0.0));
    res.message = "trivial transfer";
    return res;
  }

  res.T_hi = options.T_hi ? *options.T_hi : flat_upper_bound(x0, x1, omega, potential);
  // Starting horizons are fractions of T_ref; without a flat bound, twice a
  // double-integrator guess.
  const double T_ref = std::isfinite(res.T_hi)
                           ? res.T_hi
                           : 4.0 * n * std::sqrt((a - b).lpNorm<Eigen::Infinity>() / omega + 1e-3);
  const int cap = options.switch_cap < 0 ? 4 * n : options.switch_cap;
  const double scale = 1.0 + b.lpNorm<Eigen::Infinity>();
  const double fit_tol = 1e-10 * scale;
  const double end_tol = options.endpoint_tol * scale;

  std::vector<Profile> profiles;
  const int base = 2 * n - 1;
  for (int total = base; total <= base + std::max(0, options.extra_switches); ++total) {
    for (int ku = 0; ku <= std::min(total, cap); ++ku) {
      const int kv = total - ku;
      if (kv > cap || (u_only && kv != 0)) continue;
      for (double u0 : {omega, -omega}) {
        if (u_only) {
          profiles.push_back({u0, 0.0, ku, 0});
          continue;
        }
        for (double v0 : {0.0, -omega}) profiles.push_back({u0, v0, ku, kv});
      }
    }
  }

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double T_mult[] = {0.5, 0.25, 1.0, 0.35, 0.7, 0.18};

  // Search on a coarse grid, then polish the fastest candidates on the fine one.
  const double hs = std::max(options.step, options.search_step);
  struct Seed {
    Parametrization par;
    Eigen::VectorXd p;
  };
  std::vector<Seed> seeds;
  for (const Profile& prof : profiles) {
    const Parametrization par{prof, omega};
    for (int st = 0; st < std::max(1, options.starts); ++st) {
      Eigen::VectorXd p(par.size());
      p[0] = std::log(T_ref * T_mult[st % 6]) + (st >= 6 ? 0.3 * gauss(rng) : 0.0);
      for (int i = 1; i < p.size(); ++i) p[i] = st == 0 ? 0.0 : gauss(rng);
      Evaluation e;
      restore(par, p, x0, b, potential, hs, 1e2 * fit_tol, options.max_iterations, e);
      if (!e.ok || e.r.lpNorm<Eigen::Infinity>() > end_tol) continue;
      descend(par, p, x0, b, potential, hs, 1e2 * fit_tol, 0.05, options.max_iterations, e);
      seeds.push_back({par, p});
    }
  }
  std::sort(seeds.begin(), seeds.end(), [](const Seed& l, const Seed& r) { return l.p[0] < r.p[0]; });

  const ControlAffineField field(n, potential);
  struct Candidate {
    SwitchingSchedule s;
    double err;
  };
  auto polish = [&](const Parametrization& par, Eigen::VectorXd p) -> std::optional<Candidate> {
    Evaluation e;
    restore(par, p, x0, b, potential, options.step, fit_tol, 20, e);
    if (!e.ok || e.r.lpNorm<Eigen::Infinity>() > end_tol) return std::nullopt;
    descend(par, p, x0, b, potential, options.step, fit_tol, 1e-3, 40, e);
    const SwitchingSchedule s = compress(par.decode(p), 1e-9 * std::exp(p[0]));
    // Independent re-simulation.
    try {
      s.validate();
      SimulationOptions so;
      so.step = options.step;
      const Trajectory tr = simulate(field, x0, s.signal(), s.T, so);
      if (tr.truncated) return std::nullopt;
      const double err = (tr.final_state() - b).lpNorm<Eigen::Infinity>();
      if (err <= end_tol) return Candidate{s, err};
    } catch (const std::exception&) {
    }
    return std::nullopt;
  };

  std::optional<Candidate> best;
  int polished = 0;
  for (Seed& sd : seeds) {
    if (polished >= 8 || (best && polished >= 3)) break;
    ++polished;
    const auto c = polish(sd.par, sd.p);
    if (c && (!best || c->s.T < best->s.T)) best = c;
  }
  res.candidates = static_cast<int>(seeds.size());
  if (!best) {
    std::ostringstream os;
    os << "no bang-bang schedule met the endpoint tolerance within " << cap
       << " switches per channel; flat steering bound T_hi = " << res.T_hi;
    throw ConvergenceError(os.str());
  }

  struct Certified {
    ExtremalCertificate cert;
    Eigen::VectorXd psiT, psi0;
  };
  auto certify_schedule = [&](const SwitchingSchedule& s) {
    Certified c;
    c.psiT = terminal_adjoint(schedule_sensitivity(x0, s, potential, options.step));
    c.cert = certify(x0, s, c.psiT, potential, opt, &c.psi0);
    return c;
  };
  Certified cur = certify_schedule(best->s);

  // A failed certificate means sign(sigma) disagrees with the schedule on
  // some arc; restart from the switching structure that sigma proposes.
  for (int round = 0; round < 3 && !cur.cert.pass && cur.psi0.size() == 2 * n; ++round) {
    const ExtremalTrajectory ex =
        extremal_flow(x0, AdjointState::from_vector(cur.psi0), best->s, potential, options.step);
    if (ex.truncated) break;
    const SwitchingSeries sw = switching_functions(ex);
    auto inside = [&](const std::vector<double>& z) {
      std::vector<double> out;
      for (double t : z)
        if (t > 1e-6 * best->s.T && t < best->s.T * (1.0 - 1e-6)) out.push_back(t);
      return out;
    };
    const std::vector<double> zu = inside(sw.zeros_u);
    const std::vector<double> zv = u_only ? std::vector<double>{} : inside(sw.zeros_v);
    if (static_cast<int>(zu.size()) > cap || static_cast<int>(zv.size()) > cap) break;
    auto first_sign = [](const std::vector<double>& y) {
      for (double v : y)
        if (v != 0.0) return v > 0.0;
      return true;
    };
    Profile prof{first_sign(sw.sigma_u) ? omega : -omega,
                 u_only ? 0.0 : (first_sign(sw.sigma_v) ? 0.0 : -omega),
                 static_cast<int>(zu.size()), static_cast<int>(zv.size())};
    const Parametrization par{prof, omega};
    Eigen::VectorXd p(par.size());
    p[0] = std::log(best->s.T);
    // arc logits relative to the first arc [0, z_0]
    auto encode = [&](const std::vector<double>& z, int off) {
      for (std::size_t j = 0; j < z.size(); ++j) {
        const double next = j + 1 < z.size() ? z[j + 1] : best->s.T;
        p[off + static_cast<int>(j)] = std::log((next - z[j]) / z[0]);
      }
    };
    encode(zu, 1);
    encode(zv, 1 + prof.ku);
    clamp_params(p);
    const auto c = polish(par, p);
    if (!c || c->s.T > best->s.T * (1.0 + 1e-9)) break;
    best = c;
    cur = certify_schedule(best->s);
  }

  res.schedule = best->s;
  res.endpoint_error = best->err;
  res.certificate = cur.cert;
  res.psiT = AdjointState::from_vector(cur.psiT);
  res.psi0 = AdjointState::from_vector(cur.psi0);
  std::ostringstream os;
  os << "T* = " << res.schedule.T << " from " << res.candidates << " converged candidates";
  if (std::isfinite(res.T_hi) && res.schedule.T > res.T_hi) os << " (above flat bound " << res.T_hi << ")";
  res.message = os.str();
  return res;
}

// ---------------------------------------------------------------------------

SwitchingAudit switching_system_audit(const ExtremalTrajectory& traj, Channel channel,
                                      const PotentialModel& potential,
                                      const std::vector<double>& switch_times,
                                      const SwitchingAuditOptions& options) {
  SwitchingAudit audit;
  audit.channel = channel;
  const int n = traj.n;
  if (n == 0 || traj.size() < 3) return audit;
  const ControlAffineField field(n, potential);
  const int m = 2 * n;
  const VectorField f = drift_vector_field(field);
  const VectorField gu = control_vector_field(field, Channel::u);
  const VectorField gv = control_vector_field(field, Channel::v);
  const std::vector<VectorField> E = ad_fields(f, control_vector_field(field, channel), m);

  const std::size_t N = traj.size();
  const int idx = field.control_index(channel);
  std::vector<double> s0(N), ds0(N);
  for (std::size_t i = 0; i < N; ++i) {
    s0[i] = traj.psi[i][idx];
    ds0[i] = -traj.psi[i][idx - n];
  }
  const std::vector<double> zeros = locate_zeros(traj.t, s0, ds0);
  audit.total_zeros = static_cast<int>(zeros.size());
  audit.max_window_zeros = max_in_window(zeros, options.window);
  audit.longest_vanishing = longest_vanishing(traj.t, s0, options.eps);
  audit.singular_flag = audit.longest_vanishing > options.singular_length;

  double h = traj.t.back() / static_cast<double>(N - 1);
  const double excl = options.exclusion < 0.0 ? 2.0 * h : options.exclusion;
  audit.row_residual.assign(m - 1, 0.0);
  auto sigmas = [&](std::size_t i) {
    Eigen::VectorXd s(m);
    for (int k = 0; k < m; ++k) s[k] = traj.psi[i].dot(E[k].eval(traj.x[i]));
    return s;
  };
  const std::size_t stride = std::max<std::size_t>(1, N / 400);
  for (std::size_t i = 1; i + 1 < N; i += stride) {
    const double tl = traj.t[i - 1], tr = traj.t[i + 1];
    bool near = false;
    for (double s : switch_times)
      if (s >= tl - excl && s <= tr + excl) near = true;
    if (near || tr - tl <= 0.0) continue;
    const Eigen::VectorXd sl = sigmas(i - 1), sc = sigmas(i), sr = sigmas(i + 1);
    const Eigen::VectorXd ds = (sr - sl) / (tr - tl);
    std::vector<Eigen::VectorXd> basis;
    for (int k = 0; k + 1 < m; ++k) {
      basis.push_back(E[k].eval(traj.x[i]));
      Eigen::MatrixXd B(m, k + 1);
      for (int j = 0; j <= k; ++j) B.col(j) = basis[j];
      double model = sc[k + 1];
      for (const auto& [g, c] : {std::pair{&gu, traj.u[i]}, std::pair{&gv, traj.v[i]}}) {
        if (c == 0.0) continue;
        const Eigen::VectorXd br = lie_bracket(*g, E[k], traj.x[i]);
        const Eigen::VectorXd coef = B.completeOrthogonalDecomposition().solve(br);
        model += c * coef.dot(sc.head(k + 1));
      }
      audit.row_residual[k] = std::max(audit.row_residual[k], std::abs(ds[k] - model));
    }
  }
  return audit;
}

SwitchingCountAudit switching_count_audit(const std::vector<SwitchingSchedule>& batch,
                                          int alarm_threshold) {
  SwitchingCountAudit out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const int cu = static_cast<int>(batch[i].u_switches.size());
    const int cv = static_cast<int>(batch[i].v_switches.size());
    out.max_u = std::max(out.max_u, cu);
    out.max_v = std::max(out.max_v, cv);
    if (cu > alarm_threshold || cv > alarm_threshold) out.alarms.push_back(i);
  }
  return out;
}

}  // namespace chainctl
