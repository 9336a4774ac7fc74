#include "chainctl/jet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace chainctl {

namespace {

// Generator counts beyond this would need > 2^24 coefficients.
constexpr int kMaxGenerators = 24;

}  // namespace

Jet Jet::constant(double value, int gens) {
  if (gens < 0 || gens > kMaxGenerators) {
    throw std::out_of_range("Jet: generator count out of range");
  }
  std::vector<double> c(std::size_t{1} << gens, 0.0);
  c[0] = value;
  return Jet(std::move(c), gens);
}

bool Jet::is_finite() const {
  return std::all_of(coeffs_.begin(), coeffs_.end(),
                     [](double c) { return std::isfinite(c); });
}

bool Jet::is_zero() const {
  return std::all_of(coeffs_.begin(), coeffs_.end(),
                     [](double c) { return c == 0.0; });
}

Jet Jet::promoted(int gens) const {
  if (gens <= gens_) return *this;
  if (gens > kMaxGenerators) {
    throw std::out_of_range("Jet: generator count out of range");
  }
  std::vector<double> c(std::size_t{1} << gens, 0.0);
  std::copy(coeffs_.begin(), coeffs_.end(), c.begin());
  return Jet(std::move(c), gens);
}

Jet Jet::base_part(int gen) const {
  if (gen >= gens_) return *this;
  if (gen != gens_ - 1) throw std::logic_error("Jet::base_part: not the top generator");
  const std::size_t half = coeffs_.size() / 2;
  return Jet(std::vector<double>(coeffs_.begin(), coeffs_.begin() + half),
             gens_ - 1);
}

Jet Jet::derivative(int gen) const {
  if (gen >= gens_) return Jet::constant(0.0, std::min(gens_, gen));
  if (gen != gens_ - 1) throw std::logic_error("Jet::derivative: not the top generator");
  const std::size_t half = coeffs_.size() / 2;
  return Jet(std::vector<double>(coeffs_.begin() + half, coeffs_.end()),
             gens_ - 1);
}

Jet& Jet::operator+=(const Jet& o) {
  if (o.gens_ > gens_) *this = promoted(o.gens_);
  for (std::size_t i = 0; i < o.coeffs_.size(); ++i) coeffs_[i] += o.coeffs_[i];
  return *this;
}

Jet& Jet::operator-=(const Jet& o) {
  if (o.gens_ > gens_) *this = promoted(o.gens_);
  for (std::size_t i = 0; i < o.coeffs_.size(); ++i) coeffs_[i] -= o.coeffs_[i];
  return *this;
}

Jet& Jet::operator*=(double s) {
  for (double& c : coeffs_) c *= s;
  return *this;
}

Jet& Jet::operator*=(const Jet& o) {
  *this = *this * o;
  return *this;
}

Jet Jet::operator-() const {
  Jet r = *this;
  for (double& c : r.coeffs_) c = -c;
  return r;
}

Jet operator*(const Jet& a, const Jet& b) {
  // Scalar fast paths: a constant factor scales every coefficient.
  if (a.gens_ == 0) return b * a.coeffs_[0];
  if (b.gens_ == 0) return a * b.coeffs_[0];

  const int gens = std::max(a.gens_, b.gens_);
  const std::size_t size = std::size_t{1} << gens;
  std::vector<double> c(size, 0.0);
  const std::size_t na = a.coeffs_.size();
  const std::size_t nb = b.coeffs_.size();
  // Subset convolution: c[S] = sum_{T subset S} a[T] b[S \ T].
  for (std::uint32_t s = 0; s < size; ++s) {
    double acc = 0.0;
    std::uint32_t t = s;
    while (true) {
      const std::uint32_t rest = s ^ t;
      if (t < na && rest < nb) acc += a.coeffs_[t] * b.coeffs_[rest];
      if (t == 0) break;
      t = (t - 1) & s;
    }
    c[s] = acc;
  }
  return Jet(std::move(c), gens);
}

Jet Jet::compose(const Jet& a, std::span<const double> derivs) {
  if (derivs.empty()) throw std::domain_error("Jet::compose: empty derivative table");
  Jet result = Jet::constant(derivs[0], a.gens_);
  if (a.gens_ == 0) return result;

  Jet nil = a;
  nil.coeffs_[0] = 0.0;
  Jet power = nil;
  double factorial = 1.0;
  for (std::size_t j = 1; !power.is_zero(); ++j) {
    if (j >= derivs.size()) {
      throw std::domain_error("Jet::compose: derivative of order " +
                              std::to_string(j) + " required but not available");
    }
    factorial *= static_cast<double>(j);
    const double w = derivs[j] / factorial;
    for (std::size_t i = 0; i < power.coeffs_.size(); ++i) {
      result.coeffs_[i] += w * power.coeffs_[i];
    }
    power = power * nil;
  }
  return result;
}

Jet operator/(const Jet& a, const Jet& b) { return a * reciprocal(b); }

Jet exp(const Jet& a) {
  const double e = std::exp(a.value());
  std::vector<double> d(static_cast<std::size_t>(a.generators()) + 1, e);
  return Jet::compose(a, d);
}

Jet reciprocal(const Jet& a) {
  const double x = a.value();
  std::vector<double> d(static_cast<std::size_t>(a.generators()) + 1);
  double term = 1.0 / x;
  for (std::size_t j = 0; j < d.size(); ++j) {
    d[j] = term;
    term *= -static_cast<double>(j + 1) / x;
  }
  return Jet::compose(a, d);
}

Jet sqrt(const Jet& a) {
  const double x = a.value();
  std::vector<double> d(static_cast<std::size_t>(a.generators()) + 1);
  double coef = 1.0;
  for (std::size_t j = 0; j < d.size(); ++j) {
    d[j] = coef * std::pow(x, 0.5 - static_cast<double>(j));
    coef *= 0.5 - static_cast<double>(j);
  }
  return Jet::compose(a, d);
}

int generators(const JetVec& v) {
  int g = 0;
  for (const Jet& j : v) g = std::max(g, j.generators());
  return g;
}

JetVec perturb(const JetVec& x, const JetVec& v) {
  if (x.size() != v.size()) throw std::invalid_argument("perturb: size mismatch");
  const int k = std::max(generators(x), generators(v));
  JetVec out;
  out.reserve(x.size());
  const std::size_t half = std::size_t{1} << k;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Jet r = x[i].promoted(k + 1);
    const Jet dv = v[i].promoted(k);
    for (std::uint32_t m = 0; m < half; ++m) {
      r.coeff_ref(static_cast<std::uint32_t>(half) + m) += dv.coeff(m);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<double> values(const JetVec& v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i].value();
  return out;
}

JetVec constants(std::span<const double> x) {
  return JetVec(x.begin(), x.end());
}

}  // namespace chainctl
