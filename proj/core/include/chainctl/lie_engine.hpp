#pragma once

// Iterated Lie brackets by nested forward-mode differentiation.
//
// A VectorField maps a jet-valued point to a jet-valued tangent vector, so
// the bracket of two fields is again a VectorField whose directional
// derivatives stay exact. Bracket convention: [F, G] = DG F - DF G, and
// ad_F G = [F, G].

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "chainctl/chain_dynamics.hpp"
#include "chainctl/jet.hpp"

namespace chainctl {

class VectorField {
 public:
  using Fn = std::function<JetVec(const JetVec&)>;

  VectorField(int dim, Fn fn, std::string label = "F", int depth = 0);

  static VectorField constant(const Eigen::VectorXd& v, std::string label = "const");
  /// Coordinate field d/dx_index.
  static VectorField coordinate(int dim, int index, std::string label = {});

  int dim() const { return dim_; }
  const std::string& label() const { return label_; }
  /// Bracket nesting depth (0 for plain fields).
  int depth() const { return depth_; }

  JetVec operator()(const JetVec& x) const;
  Eigen::VectorXd eval(const Eigen::VectorXd& x) const;
  /// Exact directional derivative DF(x) v.
  Eigen::VectorXd jvp(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const;

 private:
  int dim_;
  Fn fn_;
  std::string label_;
  int depth_;
};

/// Smooth scalar function on jets (used for Lie derivatives of coordinates).
class ScalarField {
 public:
  using Fn = std::function<Jet(const JetVec&)>;
  ScalarField(Fn fn, std::string label = "h") : fn_(std::move(fn)), label_(std::move(label)) {}

  static ScalarField coordinate(int index, std::string label = {});

  Jet operator()(const JetVec& x) const { return fn_(x); }
  double eval(const Eigen::VectorXd& x) const;
  /// Gradient via one directional derivative per coordinate.
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;
  double directional(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const;
  const std::string& label() const { return label_; }

 private:
  Fn fn_;
  std::string label_;
};

/// L_F h.
ScalarField lie_derivative(const ScalarField& h, const VectorField& F);

/// x + e_gen v, promoted to gen + 1 generators.
JetVec perturb_along(const JetVec& x, const JetVec& v, int gen);

VectorField drift_vector_field(const ControlAffineField& field);
VectorField control_vector_field(const ControlAffineField& field, Channel c);

/// The field [F, G] as a nested evaluator.
VectorField bracket(const VectorField& F, const VectorField& G);
/// [F, G](x) = DG(x) F(x) - DF(x) G(x).
Eigen::VectorXd lie_bracket(const VectorField& F, const VectorField& G, const Eigen::VectorXd& x);

/// Nested evaluators ad^0 f g, ..., ad^{m-1} f g.
std::vector<VectorField> ad_fields(const VectorField& f, const VectorField& g, int m);
/// Their values at x. Throws ValidationError when m < 1 or m - 1 > depth_cap
/// (depth_cap < 0 selects the default 2n + 2 with n = dim / 2).
std::vector<Eigen::VectorXd> ad_chain(const VectorField& f, const VectorField& g,
                                      const Eigen::VectorXd& x, int m, int depth_cap = -1);

/// Coordinate direction d/dq_k or d/dp_k (1-based particle index).
struct CoordinateDirection {
  bool momentum = true;
  int particle = 1;
  int index(int n) const { return momentum ? n + particle - 1 : particle - 1; }
  bool operator==(const CoordinateDirection&) const = default;
};

enum class AdEntry {
  odd,   // entry 2k-1 of the chain (ad^{2k-2} f g): leading direction d/dp
  even,  // entry 2k   of the chain (ad^{2k-1} f g): leading direction d/dq
};

struct ClosedFormAd {
  double coefficient = 0.0;
  CoordinateDirection direction;
  /// Coordinate basis of the subspace modulo which the identity holds.
  std::vector<CoordinateDirection> residual_basis;
};

/// mu_k(q) = prod_{j=1..k} phi'(q_j - q_{j+1}); mirrored from the right end
/// for channel v.
double mu(const ChainState& x, const PotentialModel& potential, int k, Channel c = Channel::u);

/// Closed-form leading term of the k-th odd/even chain entry for channel c,
/// 1 <= k <= n.
ClosedFormAd closed_form_ad(int k, const ChainState& x, Channel c, AdEntry entry,
                            const PotentialModel& potential);

/// Least-squares coefficient of `direction` when `v` is written in the span
/// of `basis` plus `direction`.
double leading_coefficient(const Eigen::VectorXd& v, const std::vector<Eigen::VectorXd>& basis,
                           const Eigen::VectorXd& direction);

/// Number of singular values above tol * largest, after scaling nonzero
/// generators to unit length.
int distribution_rank(const std::vector<Eigen::VectorXd>& vectors, double tol = 1e-8);

enum class DistributionLabel { lambda, xi, delta };
std::string to_string(DistributionLabel label);

struct DistributionEval {
  Eigen::VectorXd base_point;
  std::vector<Eigen::VectorXd> generators;
  DistributionLabel label = DistributionLabel::lambda;
  int m = 0;
  int rank = 0;
  double tol = 1e-8;
};

DistributionEval evaluate_distribution(const ControlAffineField& field, const Eigen::VectorXd& x,
                                       DistributionLabel label, int m, double tol = 1e-8);

/// dim Lambda^m, dim Xi^m, dim Delta^m for m = 1..2n (index m-1).
struct RankProfile {
  std::vector<int> lambda;
  std::vector<int> xi;
  std::vector<int> delta;
  bool operator==(const RankProfile&) const = default;
};

RankProfile delta_rank_profile(const ChainState& x, const PotentialModel& potential,
                               double tol = 1e-8);
/// Coordinate-subspace profile predicted for a potential with nonvanishing phi'.
RankProfile predicted_rank_profile(int n);

struct InvolutivityReport {
  bool involutive = false;
  double max_relative_residual = 0.0;
  int rank = 0;
};

/// Every pairwise bracket at x must lie in the span of the generators'
/// values: residual after least-squares projection <= tol * |bracket|.
InvolutivityReport involutivity_check(const std::vector<VectorField>& generators,
                                      const Eigen::VectorXd& x, double tol = 1e-8);

}  // namespace chainctl
