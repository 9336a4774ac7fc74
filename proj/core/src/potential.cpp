#include "chainctl/potential.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace chainctl {

namespace {

double log1pexp(double y) {
  return y > 0.0 ? y + std::log1p(std::exp(-y)) : std::log1p(std::exp(y));
}

double logistic(double y) {
  if (y >= 0.0) return 1.0 / (1.0 + std::exp(-y));
  const double e = std::exp(y);
  return e / (1.0 + e);
}

// d^m/dy^m of the logistic function s(y), written as a polynomial in s:
// P_0(s) = s, P_{m+1}(s) = P_m'(s) s (1 - s).
double logistic_derivative(int m, double y) {
  std::vector<double> poly{0.0, 1.0};
  for (int k = 0; k < m; ++k) {
    std::vector<double> dpoly(poly.size() > 1 ? poly.size() - 1 : 1, 0.0);
    for (std::size_t i = 1; i < poly.size(); ++i) dpoly[i - 1] = poly[i] * static_cast<double>(i);
    // multiply by (s - s^2)
    std::vector<double> next(dpoly.size() + 2, 0.0);
    for (std::size_t i = 0; i < dpoly.size(); ++i) {
      next[i + 1] += dpoly[i];
      next[i + 2] -= dpoly[i];
    }
    poly = std::move(next);
  }
  const double s = logistic(y);
  double acc = 0.0;
  for (std::size_t i = poly.size(); i-- > 0;) acc = acc * s + poly[i];
  return acc;
}

}  // namespace

PotentialModel::PotentialModel(std::string name, DerivativeFn derivative, int max_order,
                               double lower_bound, bool nonvanishing_stiffness)
    : name_(std::move(name)),
      derivative_(std::move(derivative)),
      max_order_(max_order),
      lower_bound_(lower_bound),
      nonvanishing_(nonvanishing_stiffness) {
  if (!derivative_) throw std::invalid_argument("PotentialModel: empty derivative function");
  if (max_order_ < 2) throw std::invalid_argument("PotentialModel: need at least Phi, phi, phi'");
  if (!(lower_bound_ >= 0.0)) throw std::invalid_argument("PotentialModel: lower bound B must be >= 0");
}

PotentialModel PotentialModel::toda() {
  return PotentialModel(
      "toda", [](int, double y) { return std::exp(y); }, 64, 0.0, true);
}

PotentialModel PotentialModel::softplus(double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("softplus: scale must be positive");
  return PotentialModel(
      "softplus",
      [scale](int order, double y) {
        if (order == 0) return scale * log1pexp(y);
        return scale * logistic_derivative(order - 1, y);
      },
      64, 0.0, true);
}

PotentialModel PotentialModel::deadzone() {
  return PotentialModel(
      "deadzone",
      [](int order, double y) {
        if (std::abs(y) <= 1.0 || order > 4) return 0.0;
        const double shift = y > 0.0 ? 1.0 : -1.0;
        // d^j/dy^j (y - s)^4 / 4 = 4!/(4-j)! (y - s)^{4-j} / 4
        double coef = 0.25;
        for (int j = 0; j < order; ++j) coef *= static_cast<double>(4 - j);
        return coef * std::pow(y - shift, 4 - order);
      },
      64, 0.0, false);
}

PotentialModel PotentialModel::from_triple(std::string name, std::function<double(double)> phi0,
                                           std::function<double(double)> phi1,
                                           std::function<double(double)> phi2,
                                           double lower_bound, bool nonvanishing_stiffness) {
  if (!phi0 || !phi1 || !phi2) throw std::invalid_argument("from_triple: missing function");
  return PotentialModel(
      std::move(name),
      [phi0 = std::move(phi0), phi1 = std::move(phi1), phi2 = std::move(phi2)](int order,
                                                                               double y) {
        switch (order) {
          case 0: return phi0(y);
          case 1: return phi1(y);
          case 2: return phi2(y);
          default: throw std::domain_error("user potential: derivative order > 2 unavailable");
        }
      },
      2, lower_bound, nonvanishing_stiffness);
}

PotentialModel PotentialModel::by_name(const std::string& name) {
  if (name == "toda") return toda();
  if (name == "softplus") return softplus();
  if (name == "deadzone") return deadzone();
  throw std::invalid_argument("unknown potential '" + name + "' (expected toda, softplus, deadzone)");
}

double PotentialModel::derivative(int order, double y) const {
  if (order < 0 || order > max_order_) {
    throw std::domain_error("potential '" + name_ + "': derivative order " +
                            std::to_string(order) + " unavailable");
  }
  return derivative_(order, y);
}

Jet PotentialModel::force(const Jet& y) const {
  const int need = y.generators();
  const int top = std::min(need, max_order_ - 1);
  std::vector<double> d(static_cast<std::size_t>(top) + 1);
  for (int j = 0; j <= top; ++j) d[static_cast<std::size_t>(j)] = derivative(j + 1, y.value());
  return Jet::compose(y, d);
}

std::string PotentialModel::check_consistency(const std::vector<double>& grid, double tol,
                                              double h) const {
  for (double y : grid) {
    for (int order = 0; order < 2; ++order) {
      const double fd = (derivative(order, y + h) - derivative(order, y - h)) / (2.0 * h);
      const double exact = derivative(order + 1, y);
      if (!(std::abs(fd - exact) <= tol * (1.0 + std::abs(exact)))) {
        std::ostringstream os;
        os << "derivative order " << order + 1 << " inconsistent at y=" << y << ": analytic "
           << exact << ", central difference " << fd;
        return os.str();
      }
    }
    if (nonvanishing_ && derivative(2, y) == 0.0) {
      std::ostringstream os;
      os << "phi' vanishes at y=" << y << " although asserted nonvanishing";
      return os.str();
    }
  }
  return {};
}

}  // namespace chainctl
