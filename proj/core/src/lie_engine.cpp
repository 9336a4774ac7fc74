#include "chainctl/lie_engine.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "chainctl/errors.hpp"

namespace chainctl {

namespace {

Eigen::VectorXd to_eigen(const JetVec& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i].value();
  return out;
}

JetVec from_eigen(const Eigen::VectorXd& x) {
  return JetVec(x.data(), x.data() + x.size());
}

JetVec base_parts(const JetVec& v, int gen) {
  JetVec out;
  out.reserve(v.size());
  for (const Jet& j : v) out.push_back(j.base_part(gen));
  return out;
}

JetVec derivatives(const JetVec& v, int gen) {
  JetVec out;
  out.reserve(v.size());
  for (const Jet& j : v) out.push_back(j.derivative(gen));
  return out;
}

bool all_finite(const JetVec& v) {
  return std::all_of(v.begin(), v.end(), [](const Jet& j) { return j.is_finite(); });
}

}  // namespace

JetVec perturb_along(const JetVec& x, const JetVec& v, int gen) {
  if (x.size() != v.size()) throw ValidationError("perturb_along: size mismatch");
  JetVec out;
  out.reserve(x.size());
  const std::size_t half = std::size_t{1} << gen;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Jet r = x[i].promoted(gen + 1);
    const Jet dv = v[i].promoted(gen);
    for (std::uint32_t m = 0; m < half; ++m) {
      r.coeff_ref(static_cast<std::uint32_t>(half) + m) += dv.coeff(m);
    }
    out.push_back(std::move(r));
  }
  return out;
}

// --- VectorField -------------------------------------------------------------

VectorField::VectorField(int dim, Fn fn, std::string label, int depth)
    : dim_(dim), fn_(std::move(fn)), label_(std::move(label)), depth_(depth) {
  if (dim_ < 1) throw ValidationError("VectorField: dimension must be positive");
  if (!fn_) throw ValidationError("VectorField: empty evaluator");
}

VectorField VectorField::constant(const Eigen::VectorXd& v, std::string label) {
  const std::vector<double> c(v.data(), v.data() + v.size());
  return VectorField(
      static_cast<int>(v.size()), [c](const JetVec&) { return JetVec(c.begin(), c.end()); },
      std::move(label));
}

VectorField VectorField::coordinate(int dim, int index, std::string label) {
  if (index < 0 || index >= dim) throw ValidationError("coordinate field index out of range");
  Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
  e[index] = 1.0;
  if (label.empty()) label = "d/dx" + std::to_string(index);
  return constant(e, std::move(label));
}

JetVec VectorField::operator()(const JetVec& x) const {
  if (static_cast<int>(x.size()) != dim_) {
    throw ValidationError("VectorField '" + label_ + "': point dimension mismatch");
  }
  return fn_(x);
}

Eigen::VectorXd VectorField::eval(const Eigen::VectorXd& x) const {
  return to_eigen((*this)(from_eigen(x)));
}

Eigen::VectorXd VectorField::jvp(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const {
  const JetVec xp = perturb_along(from_eigen(x), from_eigen(v), 0);
  return to_eigen(derivatives((*this)(xp), 0));
}

// --- ScalarField -------------------------------------------------------------

ScalarField ScalarField::coordinate(int index, std::string label) {
  if (label.empty()) label = "x" + std::to_string(index);
  return ScalarField(
      [index](const JetVec& x) { return x.at(static_cast<std::size_t>(index)); },
      std::move(label));
}

double ScalarField::eval(const Eigen::VectorXd& x) const { return fn_(from_eigen(x)).value(); }

double ScalarField::directional(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const {
  const JetVec xp = perturb_along(from_eigen(x), from_eigen(v), 0);
  return fn_(xp).derivative(0).value();
}

Eigen::VectorXd ScalarField::gradient(const Eigen::VectorXd& x) const {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    g[i] = directional(x, Eigen::VectorXd::Unit(x.size(), i));
  }
  return g;
}

ScalarField lie_derivative(const ScalarField& h, const VectorField& F) {
  return ScalarField(
      [h, F](const JetVec& x) {
        const JetVec Fx = F(x);
        const int gen = std::max(generators(x), generators(Fx));
        return h(perturb_along(x, Fx, gen)).derivative(gen);
      },
      "L_{" + F.label() + "}" + h.label());
}

// --- chain fields --------------------------------------------------------------

VectorField drift_vector_field(const ControlAffineField& field) {
  return VectorField(
      field.dim(), [field](const JetVec& x) { return field.drift(x); }, "f");
}

VectorField control_vector_field(const ControlAffineField& field, Channel c) {
  return VectorField::coordinate(field.dim(), field.control_index(c),
                                 c == Channel::u ? "g^u" : "g^v");
}

VectorField bracket(const VectorField& F, const VectorField& G) {
  if (F.dim() != G.dim()) throw ValidationError("bracket: dimension mismatch");
  const int depth = std::max(F.depth(), G.depth()) + 1;
  std::string label = "[" + F.label() + "," + G.label() + "]";
  return VectorField(
      F.dim(),
      [F, G, depth, label](const JetVec& x) {
        const JetVec Fx = F(x);
        const int gen = std::max(generators(x), generators(Fx));
        // G(x + e F(x)) carries both G(x) and DG(x) F(x).
        const JetVec Ga = G(perturb_along(x, Fx, gen));
        const JetVec Gx = base_parts(Ga, gen);
        const JetVec dG = derivatives(Ga, gen);
        const JetVec Fb = F(perturb_along(x, Gx, gen));
        const JetVec dF = derivatives(Fb, gen);
        JetVec out(dG.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = dG[i] - dF[i];
        if (!all_finite(out)) {
          std::ostringstream os;
          os << "non-finite value in " << label << " (bracket depth " << depth << ")";
          throw NumericalError(os.str());
        }
        return out;
      },
      label, depth);
}

Eigen::VectorXd lie_bracket(const VectorField& F, const VectorField& G, const Eigen::VectorXd& x) {
  return bracket(F, G).eval(x);
}

std::vector<VectorField> ad_fields(const VectorField& f, const VectorField& g, int m) {
  if (m < 1) throw ValidationError("ad chain length must be >= 1");
  std::vector<VectorField> out;
  out.reserve(static_cast<std::size_t>(m));
  out.push_back(g);
  for (int j = 1; j < m; ++j) {
    VectorField next = bracket(f, out.back());
    out.push_back(VectorField(next.dim(),
                              [next](const JetVec& x) { return next(x); },
                              "ad^" + std::to_string(j) + " " + f.label() + " " + g.label(),
                              next.depth()));
  }
  return out;
}

std::vector<Eigen::VectorXd> ad_chain(const VectorField& f, const VectorField& g,
                                      const Eigen::VectorXd& x, int m, int depth_cap) {
  if (depth_cap < 0) depth_cap = f.dim() / 2 * 2 + 2;
  if (m < 1) throw ValidationError("ad chain length must be >= 1");
  if (m - 1 > depth_cap) {
    throw ValidationError("ad chain depth " + std::to_string(m - 1) + " exceeds cap " +
                          std::to_string(depth_cap));
  }
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(m));
  for (const VectorField& F : ad_fields(f, g, m)) out.push_back(F.eval(x));
  return out;
}

// --- closed forms --------------------------------------------------------------

double mu(const ChainState& x, const PotentialModel& potential, int k, Channel c) {
  const int n = x.n();
  if (k < 0 || k > n - 1) throw ValidationError("mu: index out of range");
  double prod = 1.0;
  for (int j = 1; j <= k; ++j) {
    const auto a = static_cast<std::size_t>(c == Channel::u ? j - 1 : n - j - 1);
    prod *= potential.stiffness(x.q[a] - x.q[a + 1]);
  }
  return prod;
}

ClosedFormAd closed_form_ad(int k, const ChainState& x, Channel c, AdEntry entry,
                            const PotentialModel& potential) {
  const int n = x.n();
  if (k < 1 || k > n) throw ValidationError("closed_form_ad: k must be in 1..n");
  const auto particle = [&](int s) { return c == Channel::u ? s : n - s + 1; };

  ClosedFormAd out;
  const double m = mu(x, potential, k - 1, c);
  out.coefficient = entry == AdEntry::odd ? m : -m;
  out.direction = {entry == AdEntry::odd, particle(k)};
  for (int s = 1; s < k; ++s) {
    out.residual_basis.push_back({false, particle(s)});
    out.residual_basis.push_back({true, particle(s)});
  }
  if (entry == AdEntry::even) out.residual_basis.push_back({true, particle(k)});
  return out;
}

double leading_coefficient(const Eigen::VectorXd& v, const std::vector<Eigen::VectorXd>& basis,
                           const Eigen::VectorXd& direction) {
  Eigen::MatrixXd A(v.size(), static_cast<Eigen::Index>(basis.size()) + 1);
  for (std::size_t i = 0; i < basis.size(); ++i) A.col(static_cast<Eigen::Index>(i)) = basis[i];
  A.col(A.cols() - 1) = direction;
  const Eigen::VectorXd c = A.completeOrthogonalDecomposition().solve(v);
  return c[c.size() - 1];
}

// --- ranks -----------------------------------------------------------------------

int distribution_rank(const std::vector<Eigen::VectorXd>& vectors, double tol) {
  if (vectors.empty()) throw ValidationError("distribution_rank: empty generator list");
  double largest = 0.0;
  for (const auto& v : vectors) largest = std::max(largest, v.norm());
  if (largest == 0.0) return 0;
  std::vector<Eigen::VectorXd> kept;
  for (const auto& v : vectors) {
    const double nv = v.norm();
    if (nv > 1e-14 * largest) kept.push_back(v / nv);
  }
  Eigen::MatrixXd A(vectors.front().size(), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) A.col(static_cast<Eigen::Index>(i)) = kept[i];
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0.0) return 0;
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > tol * s[0]) ++r;
  }
  return r;
}

std::string to_string(DistributionLabel label) {
  switch (label) {
    case DistributionLabel::lambda: return "Lambda";
    case DistributionLabel::xi: return "Xi";
    case DistributionLabel::delta: return "Delta";
  }
  return "?";
}

DistributionEval evaluate_distribution(const ControlAffineField& field, const Eigen::VectorXd& x,
                                       DistributionLabel label, int m, double tol) {
  const VectorField f = drift_vector_field(field);
  DistributionEval out;
  out.base_point = x;
  out.label = label;
  out.m = m;
  out.tol = tol;
  if (label != DistributionLabel::xi) {
    auto a = ad_chain(f, control_vector_field(field, Channel::u), x, m);
    out.generators.insert(out.generators.end(), a.begin(), a.end());
  }
  if (label != DistributionLabel::lambda) {
    auto b = ad_chain(f, control_vector_field(field, Channel::v), x, m);
    out.generators.insert(out.generators.end(), b.begin(), b.end());
  }
  out.rank = distribution_rank(out.generators, tol);
  return out;
}

RankProfile delta_rank_profile(const ChainState& x, const PotentialModel& potential, double tol) {
  const int n = x.n();
  const ControlAffineField field(n, potential);
  const VectorField f = drift_vector_field(field);
  const Eigen::VectorXd xv = x.to_vector();
  const auto a = ad_chain(f, control_vector_field(field, Channel::u), xv, 2 * n);
  const auto b = ad_chain(f, control_vector_field(field, Channel::v), xv, 2 * n);
  RankProfile out;
  for (int m = 1; m <= 2 * n; ++m) {
    const std::vector<Eigen::VectorXd> la(a.begin(), a.begin() + m);
    const std::vector<Eigen::VectorXd> xi(b.begin(), b.begin() + m);
    std::vector<Eigen::VectorXd> de = la;
    de.insert(de.end(), xi.begin(), xi.end());
    out.lambda.push_back(distribution_rank(la, tol));
    out.xi.push_back(distribution_rank(xi, tol));
    out.delta.push_back(distribution_rank(de, tol));
  }
  return out;
}

RankProfile predicted_rank_profile(int n) {
  if (n < 1) throw ValidationError("predicted_rank_profile: n must be >= 1");
  // Lambda^m covers (q_s, p_s), s <= m/2, plus p_{(m+1)/2} when m is odd;
  // Xi^m is the mirror image from the right end.
  auto coords = [n](int m, bool left) {
    std::set<int> s;
    for (int j = 0; j < m; ++j) {
      const int particle = j / 2 + 1;
      const int idx = left ? particle : n - particle + 1;
      if (idx < 1 || idx > n) continue;
      s.insert(j % 2 == 0 ? n + idx - 1 : idx - 1);
    }
    return s;
  };
  RankProfile out;
  for (int m = 1; m <= 2 * n; ++m) {
    auto l = coords(m, true);
    auto r = coords(m, false);
    out.lambda.push_back(static_cast<int>(l.size()));
    out.xi.push_back(static_cast<int>(r.size()));
    l.insert(r.begin(), r.end());
    out.delta.push_back(static_cast<int>(l.size()));
  }
  return out;
}

InvolutivityReport involutivity_check(const std::vector<VectorField>& generators,
                                      const Eigen::VectorXd& x, double tol) {
  if (generators.empty()) throw ValidationError("involutivity_check: no generators");
  Eigen::MatrixXd G(x.size(), static_cast<Eigen::Index>(generators.size()));
  for (std::size_t i = 0; i < generators.size(); ++i) {
    G.col(static_cast<Eigen::Index>(i)) = generators[i].eval(x);
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(G, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[0] > 0.0 && s[i] > 1e-10 * s[0]) ++r;
  }
  const Eigen::MatrixXd U = svd.matrixU().leftCols(r);

  InvolutivityReport rep;
  rep.rank = static_cast<int>(r);
  for (std::size_t i = 0; i < generators.size(); ++i) {
    for (std::size_t j = i + 1; j < generators.size(); ++j) {
      const Eigen::VectorXd b = lie_bracket(generators[i], generators[j], x);
      const double nb = b.norm();
      if (nb == 0.0) continue;
      const Eigen::VectorXd res = b - U * (U.transpose() * b);
      rep.max_relative_residual = std::max(rep.max_relative_residual, res.norm() / nb);
    }
  }
  rep.involutive = rep.max_relative_residual <= tol;
  return rep;
}

}  // namespace chainctl
