#include "chainctl/linearization.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "chainctl/errors.hpp"
#include "chainctl/lie_engine.hpp"

namespace chainctl {

namespace {

// Chain lengths including the single-particle chart (2, 0).
KroneckerIndices layout(int n) {
  if (n < 1) throw ValidationError("particle count must be >= 1");
  if (n % 2 == 0) return {n, n};
  return {n + 1, n - 1};
}

struct FlatFields {
  int n;
  std::vector<ScalarField> y;
  std::vector<ScalarField> z;
  ScalarField Y;
  ScalarField Z;
};

FlatFields make_fields(int n, const PotentialModel& potential) {
  const ControlAffineField field(n, potential);
  const VectorField f = drift_vector_field(field);
  const auto [ys, zs] = flat_seeds(n);
  const KroneckerIndices k = layout(n);
  auto chain = [&](int seed, int len, const char* name) {
    std::vector<ScalarField> out;
    if (len == 0) return out;
    out.push_back(ScalarField::coordinate(q_index(n, seed - 1), std::string(name) + "1"));
    for (int j = 1; j < len; ++j) out.push_back(lie_derivative(out.back(), f));
    return out;
  };
  FlatFields ff{n, chain(ys, k.k1, "y"), chain(zs, k.k2, "z"),
                ScalarField([](const JetVec&) { return Jet(0.0); }, "0"),
                ScalarField([](const JetVec&) { return Jet(0.0); }, "0")};
  ff.Y = lie_derivative(ff.y.back(), f);
  if (!ff.z.empty()) ff.Z = lie_derivative(ff.z.back(), f);
  return ff;
}

Eigen::VectorXd eval_chart(const FlatFields& ff, const Eigen::VectorXd& x) {
  Eigen::VectorXd out(2 * ff.n);
  Eigen::Index r = 0;
  for (const auto& h : ff.y) out[r++] = h.eval(x);
  for (const auto& h : ff.z) out[r++] = h.eval(x);
  return out;
}

Eigen::MatrixXd eval_jacobian(const FlatFields& ff, const Eigen::VectorXd& x) {
  Eigen::MatrixXd J(2 * ff.n, 2 * ff.n);
  Eigen::Index r = 0;
  for (const auto& h : ff.y) J.row(r++) = h.gradient(x).transpose();
  for (const auto& h : ff.z) J.row(r++) = h.gradient(x).transpose();
  return J;
}

FeedbackTerms eval_terms(const FlatFields& ff, const Eigen::VectorXd& x) {
  const int n = ff.n;
  const Eigen::VectorXd e1 = Eigen::VectorXd::Unit(2 * n, p_index(n, 0));
  const Eigen::VectorXd en = Eigen::VectorXd::Unit(2 * n, p_index(n, n - 1));
  FeedbackTerms t;
  t.odd = n % 2 == 1;
  t.has_z = !ff.z.empty();
  t.Y = ff.Y.eval(x);
  t.a = ff.y.back().directional(x, e1);
  t.b = n == 1 ? 0.0 : ff.y.back().directional(x, en);
  if (!ff.z.empty()) {
    t.Z = ff.Z.eval(x);
    t.c = ff.z.back().directional(x, en);
    t.z_u = ff.z.back().directional(x, e1);
  }
  return t;
}

std::optional<Eigen::VectorXd> newton(const FlatFields& ff, const Eigen::VectorXd& target,
                                      Eigen::VectorXd x, double tol, int max_iter) {
  const double scale = 1.0 + target.lpNorm<Eigen::Infinity>();
  auto residual = [&](const Eigen::VectorXd& s) -> std::optional<Eigen::VectorXd> {
    try {
      Eigen::VectorXd r = eval_chart(ff, s) - target;
      if (!r.allFinite()) return std::nullopt;
      return r;
    } catch (const NumericalError&) {
      return std::nullopt;
    }
  };
  auto r = residual(x);
  if (!r) return std::nullopt;
  for (int it = 0; it < max_iter; ++it) {
    const double rn = r->norm();
    if (rn <= tol * scale) return x;
    const Eigen::MatrixXd J = eval_jacobian(ff, x);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
    if (!(std::abs(lu.determinant()) > 0.0)) return std::nullopt;
    const Eigen::VectorXd dx = lu.solve(*r);
    if (!dx.allFinite()) return std::nullopt;
    double step = 1.0;
    bool accepted = false;
    for (int k = 0; k < 30; ++k, step *= 0.5) {
      const Eigen::VectorXd trial = x - step * dx;
      const auto rt = residual(trial);
      if (rt && rt->norm() < (1.0 - 1e-4 * step) * rn) {
        x = trial;
        r = rt;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Rounding floor: accept if already close.
      return rn <= 1e3 * tol * scale ? std::optional<Eigen::VectorXd>(x) : std::nullopt;
    }
  }
  return r->norm() <= tol * scale ? std::optional<Eigen::VectorXd>(x) : std::nullopt;
}

double top_derivative(const Eigen::VectorXd& poly, int order, double s, double T) {
  return polynomial_derivative(poly, order, s) / std::pow(T, order);
}

struct SteerFailure {};

SteerResult steer_once(const FlatFields& ff, const ControlAffineField& field, const ChainState& x0,
                       const ChainState& x1, double T, const SteerOptions& opt) {
  const int n = ff.n;
  const KroneckerIndices k = layout(n);
  const Eigen::VectorXd a0 = x0.to_vector();
  const Eigen::VectorXd a1 = x1.to_vector();
  const Eigen::VectorXd w0 = eval_chart(ff, a0);
  const Eigen::VectorXd w1 = eval_chart(ff, a1);

  auto boundary = [&](int offset, int len, const Eigen::VectorXd& w) {
    std::vector<double> b;
    for (int j = 0; j < len; ++j) b.push_back(w[offset + j] * std::pow(T, j));
    return b;
  };
  std::vector<double> yl = boundary(0, k.k1, w0), yr = boundary(0, k.k1, w1);
  std::vector<double> zl = boundary(k.k1, k.k2, w0), zr = boundary(k.k1, k.k2, w1);
  auto add_top = [&](const std::optional<Controls>& c, const Eigen::VectorXd& x,
                     std::vector<double>& ys, std::vector<double>& zs) {
    if (!c) return;
    const FeedbackTerms t = eval_terms(ff, x);
    const double v = n == 1 ? 0.0 : c->v;
    ys.push_back((t.Y + t.a * c->u + t.b * v) * std::pow(T, k.k1));
    if (k.k2 > 0) zs.push_back((t.Z + t.c * v) * std::pow(T, k.k2));
  };
  add_top(opt.u_start, a0, yl, zl);
  add_top(opt.u_end, a1, yr, zr);

  const Eigen::VectorXd py = hermite_polynomial(yl, yr);
  const Eigen::VectorXd pz = k.k2 > 0 ? hermite_polynomial(zl, zr) : Eigen::VectorXd();

  const auto N = static_cast<long>(std::max(1.0, std::ceil(T / opt.step - 1e-9)));
  const double h = T / static_cast<double>(N);
  std::vector<double> ts, us, vs;
  Eigen::VectorXd x = a0, prev = a0;
  for (long m = 0; m <= 2 * N; ++m) {
    const double t = m == 2 * N ? T : 0.5 * h * static_cast<double>(m);
    const double s = t / T;
    Eigen::VectorXd target(2 * n);
    for (int j = 0; j < k.k1; ++j) target[j] = top_derivative(py, j, s, T);
    for (int j = 0; j < k.k2; ++j) target[k.k1 + j] = top_derivative(pz, j, s, T);
    if (m > 0) {
      const Eigen::VectorXd seed = m > 1 ? Eigen::VectorXd(2 * x - prev) : x;
      auto sol = newton(ff, target, seed, 1e-13, 60);
      if (!sol) sol = newton(ff, target, x, 1e-13, 60);
      if (!sol) throw SteerFailure{};
      prev = x;
      x = *sol;
    }
    const FeedbackTerms terms = eval_terms(ff, x);
    const double ubar = top_derivative(py, k.k1, s, T);
    const double vbar = k.k2 > 0 ? top_derivative(pz, k.k2, s, T) : 0.0;
    const Controls c = controls_from_flat(terms, n, ubar, vbar);
    ts.push_back(t);
    us.push_back(c.u);
    vs.push_back(c.v);
  }

  SteerResult res;
  res.T = T;
  res.signal = ControlSignal::sampled(ts, us, vs, Interpolation::cubic);
  // Off the sampling grid, so the check sees the interpolated signal.
  SimulationOptions so;
  so.step = h / 3.0;
  res.trajectory = simulate(field, x0, res.signal, T, so);
  if (res.trajectory.truncated) throw SteerFailure{};
  res.endpoint_error = (res.trajectory.final_state() - a1).norm();
  res.max_abs_u = 0.0;
  res.min_v = vs.front();
  res.max_v = vs.front();
  for (std::size_t i = 0; i < us.size(); ++i) {
    res.max_abs_u = std::max(res.max_abs_u, std::abs(us[i]));
    res.min_v = std::min(res.min_v, vs[i]);
    res.max_v = std::max(res.max_v, vs[i]);
  }
  return res;
}

}  // namespace

KroneckerIndices kronecker_indices(int n) {
  if (n < 2) {
    throw ValidationError("Kronecker indices need n >= 2 (a single particle has one effective channel)");
  }
  return layout(n);
}

std::pair<int, int> flat_seeds(int n) {
  if (n < 1) throw ValidationError("particle count must be >= 1");
  if (n == 1) return {1, 0};
  if (n % 2 == 0) return {n / 2, n / 2 + 1};
  const int l = (n - 1) / 2;
  return {l + 1, l + 2};
}

Eigen::VectorXd FlatCoordinates::stacked() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(y.size() + z.size()));
  Eigen::Index r = 0;
  for (double v : y) out[r++] = v;
  for (double v : z) out[r++] = v;
  return out;
}

FlatCoordinates flat_coordinates(const ChainState& x, const PotentialModel& potential) {
  x.validate();
  const FlatFields ff = make_fields(x.n(), potential);
  const Eigen::VectorXd w = eval_chart(ff, x.to_vector());
  FlatCoordinates out;
  for (std::size_t j = 0; j < ff.y.size(); ++j) out.y.push_back(w[static_cast<Eigen::Index>(j)]);
  for (std::size_t j = 0; j < ff.z.size(); ++j) {
    out.z.push_back(w[static_cast<Eigen::Index>(ff.y.size() + j)]);
  }
  return out;
}

FlatChart chart_jacobian(const ChainState& x, const PotentialModel& potential) {
  x.validate();
  const FlatFields ff = make_fields(x.n(), potential);
  const FlatCoordinates fc = flat_coordinates(x, potential);
  FlatChart chart;
  chart.base_point = x;
  chart.y = fc.y;
  chart.z = fc.z;
  chart.jacobian = eval_jacobian(ff, x.to_vector());
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(chart.jacobian);
  const auto& s = svd.singularValues();
  const double smax = s[0];
  const double smin = s[s.size() - 1];
  chart.condition_number = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  chart.nonsingular = smin > 1e-10 * smax;
  return chart;
}

double FeedbackTerms::product() const { return has_z ? a * c : a; }

FeedbackTerms feedback_terms(const ChainState& x, const PotentialModel& potential) {
  x.validate();
  return eval_terms(make_fields(x.n(), potential), x.to_vector());
}

Controls controls_from_flat(const FeedbackTerms& t, int n, double ubar, double vbar, double eps) {
  if (n == 1) {
    if (!(std::abs(t.a) > eps)) throw NumericalError("vanishing input coefficient of the y chain");
    return {(ubar - t.Y) / t.a, 0.0};
  }
  if (!(std::abs(t.a) > eps) || !(std::abs(t.c) > eps)) {
    std::ostringstream os;
    os << "decoupling coefficients near zero (" << t.a << ", " << t.c
       << "): nonvanishing stiffness violated";
    throw NumericalError(os.str());
  }
  Controls c;
  c.v = (vbar - t.Z) / t.c;
  c.u = (ubar - t.Y - t.b * c.v) / t.a;
  return c;
}

NormalFormReport verify_normal_form(const Trajectory& tr, const PotentialModel& potential,
                                    const std::vector<double>& switch_times, double window) {
  NormalFormReport rep;
  if (tr.size() < 3) return rep;
  const int n = tr.n;
  const FlatFields ff = make_fields(n, potential);
  const KroneckerIndices k = layout(n);
  if (window < 0.0) window = 2.0 * (tr.t[1] - tr.t[0]);

  std::vector<Eigen::VectorXd> w;
  std::vector<FeedbackTerms> terms;
  w.reserve(tr.size());
  terms.reserve(tr.size());
  for (const auto& x : tr.x) {
    w.push_back(eval_chart(ff, x));
    terms.push_back(eval_terms(ff, x));
  }
  rep.min_abs_product = std::numeric_limits<double>::infinity();
  for (const auto& t : terms) {
    rep.min_abs_product = std::min(rep.min_abs_product, std::abs(t.product()));
  }

  // Five-point stencil where the grid is uniform, three-point otherwise.
  auto five_point = [&](std::size_t i) {
    if (i < 2 || i + 2 >= tr.size()) return false;
    const double h = tr.t[i + 1] - tr.t[i];
    for (std::size_t j = i - 2; j < i + 2; ++j) {
      if (std::abs(tr.t[j + 1] - tr.t[j] - h) > 1e-9 * h) return false;
    }
    return true;
  };
  for (std::size_t i = 1; i + 1 < tr.size(); ++i) {
    const bool wide = five_point(i);
    if (!wide && tr.size() >= 5 && (i < 2 || i + 2 >= tr.size())) {
      ++rep.samples_excluded;
      continue;
    }
    const double lo = tr.t[wide ? i - 2 : i - 1], hi = tr.t[wide ? i + 2 : i + 1];
    const bool near_switch = std::any_of(switch_times.begin(), switch_times.end(), [&](double s) {
      return s >= std::min(lo, tr.t[i] - 0.5 * window) && s <= std::max(hi, tr.t[i] + 0.5 * window);
    });
    if (near_switch) {
      ++rep.samples_excluded;
      continue;
    }
    ++rep.samples_used;
    const Eigen::VectorXd d =
        wide ? Eigen::VectorXd((-w[i + 2] + 8.0 * w[i + 1] - 8.0 * w[i - 1] + w[i - 2]) / (3.0 * (hi - lo)))
             : Eigen::VectorXd((w[i + 1] - w[i - 1]) / (hi - lo));
    for (int j = 0; j + 1 < k.k1; ++j) {
      rep.max_chain_residual = std::max(rep.max_chain_residual, std::abs(d[j] - w[i][j + 1]));
    }
    for (int j = 0; j + 1 < k.k2; ++j) {
      const int r = k.k1 + j;
      rep.max_chain_residual = std::max(rep.max_chain_residual, std::abs(d[r] - w[i][r + 1]));
    }
    const FeedbackTerms& t = terms[i];
    const double v = n == 1 ? 0.0 : tr.v[i];
    const double uu = n == 1 ? tr.u[i] + tr.v[i] : tr.u[i];
    rep.max_top_residual =
        std::max(rep.max_top_residual, std::abs(d[k.k1 - 1] - (t.Y + t.a * uu + t.b * v)));
    if (k.k2 > 0) {
      rep.max_top_residual = std::max(rep.max_top_residual,
                                      std::abs(d[k.k1 + k.k2 - 1] - (t.Z + t.c * v + t.z_u * uu)));
    }
  }
  return rep;
}

std::optional<ChainState> invert_chart(const Eigen::VectorXd& target, const ChainState& seed,
                                       const PotentialModel& potential, double tol, int max_iter) {
  seed.validate();
  if (target.size() != 2 * seed.n()) throw ValidationError("invert_chart: target size mismatch");
  const FlatFields ff = make_fields(seed.n(), potential);
  const auto x = newton(ff, target, seed.to_vector(), tol, max_iter);
  if (!x) return std::nullopt;
  return ChainState::from_vector(*x);
}

SteerResult steer_flat(const ChainState& x0, const ChainState& x1, double T,
                       const PotentialModel& potential, const SteerOptions& options) {
  x0.validate();
  x1.validate();
  if (x0.n() != x1.n()) throw ValidationError("steer_flat: states of different size");
  if (!(T > 0.0) || !std::isfinite(T)) throw ValidationError("steer_flat: T must be > 0");
  if (!(options.step > 0.0)) throw ValidationError("steer_flat: step must be > 0");
  const int n = x0.n();
  const FlatFields ff = make_fields(n, potential);
  const ControlAffineField field(n, potential);
  double horizon = T;
  for (int d = 0; d <= options.max_doublings; ++d, horizon *= 2.0) {
    try {
      SteerOptions opt = options;
      SteerResult r = steer_once(ff, field, x0, x1, horizon, opt);
      for (int k = 0; k < options.max_refinements && r.endpoint_error > options.tolerance; ++k) {
        opt.step *= 0.5;
        r = steer_once(ff, field, x0, x1, horizon, opt);
      }
      r.doublings = d;
      return r;
    } catch (const SteerFailure&) {
    }
  }
  std::ostringstream os;
  os << "chart inversion did not converge up to T = " << horizon / 2.0
     << "; split the transfer with intermediate waypoints";
  throw ConvergenceError(os.str());
}

Eigen::VectorXd hermite_polynomial(const std::vector<double>& left,
                                   const std::vector<double>& right) {
  const auto L = static_cast<int>(left.size());
  const auto R = static_cast<int>(right.size());
  const int m = L + R;
  if (m == 0) throw ValidationError("hermite_polynomial: no conditions");
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd b(m);
  auto falling = [](int i, int j) {
    double f = 1.0;
    for (int r = 0; r < j; ++r) f *= i - r;
    return f;
  };
  for (int j = 0; j < L; ++j) {
    A(j, j) = falling(j, j);
    b[j] = left[static_cast<std::size_t>(j)];
  }
  for (int j = 0; j < R; ++j) {
    for (int i = j; i < m; ++i) A(L + j, i) = falling(i, j);
    b[L + j] = right[static_cast<std::size_t>(j)];
  }
  return A.fullPivLu().solve(b);
}

double polynomial_derivative(const Eigen::VectorXd& c, int order, double s) {
  double acc = 0.0;
  for (Eigen::Index i = c.size() - 1; i >= order; --i) {
    double f = 1.0;
    for (int r = 0; r < order; ++r) f *= static_cast<double>(i - r);
    acc = acc * s + f * c[i];
  }
  return acc;
}

Eigen::MatrixXd endpoint_map_jacobian(const ChainState& x0, const std::vector<double>& u,
                                      const std::vector<double>& v, double T,
                                      const PotentialModel& potential, int substeps) {
  x0.validate();
  if (u.empty() || u.size() != v.size()) {
    throw ValidationError("endpoint_map_jacobian: need equal, nonempty segment lists");
  }
  if (!(T > 0.0) || substeps < 1) throw ValidationError("endpoint_map_jacobian: bad horizon");
  const int n = x0.n();
  const int N = static_cast<int>(u.size());
  const ControlAffineField field(n, potential);
  const int iu = field.control_index(Channel::u);
  const int iv = field.control_index(Channel::v);

  Eigen::VectorXd x = x0.to_vector();
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(2 * n, 2 * N);
  const double h = T / N / substeps;
  for (int seg = 0; seg < N; ++seg) {
    const double us = u[static_cast<std::size_t>(seg)];
    const double vs = v[static_cast<std::size_t>(seg)];
    auto rhs = [&](const Eigen::VectorXd& y, const Eigen::MatrixXd& M, Eigen::VectorXd& dy,
                   Eigen::MatrixXd& dM) {
      dy = field.controlled(y, us, vs);
      dM = field.drift_jacobian(y) * M;
      dM(iu, seg) += 1.0;
      dM(iv, N + seg) += 1.0;
    };
    for (int k = 0; k < substeps; ++k) {
      Eigen::VectorXd k1, k2, k3, k4;
      Eigen::MatrixXd m1, m2, m3, m4;
      rhs(x, S, k1, m1);
      rhs(x + 0.5 * h * k1, S + 0.5 * h * m1, k2, m2);
      rhs(x + 0.5 * h * k2, S + 0.5 * h * m2, k3, m3);
      rhs(x + h * k3, S + h * m3, k4, m4);
      x += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
      S += (h / 6.0) * (m1 + 2 * m2 + 2 * m3 + m4);
    }
  }
  return S;
}

}  // namespace chainctl
