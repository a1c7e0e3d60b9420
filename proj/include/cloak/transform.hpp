#pragma once

// Diffeomorphisms of a closed family (radial profile maps, 2D twists,
// rotations, scalings and their compositions) with exact inverses and
// closed-form Jacobians, plus the conductivity push-forward
//   (F_* sigma)(y) = dF sigma dF^T / det dF,  evaluated at x = F^-1(y).

#include <cstdint>
#include <optional>
#include <vector>

#include "cloak/tensor_core.hpp"
#include "json.hpp"

namespace cloak {

/// Increasing radial profile r -> phi(r) with an exact inverse.
class RadialProfile {
 public:
  /// phi(r) = scale * r + offset
  static RadialProfile affine(double scale, double offset);
  /// phi(r) = r + c r (radius - r); monotone iff |c| radius < 1.
  static RadialProfile quadratic(double c, double radius);

  double value(double r) const;
  double derivative(double r) const;
  double inverse(double s) const;

  enum class Kind { Affine, Quadratic };
  Kind kind() const { return kind_; }
  double p0() const { return p0_; }
  double p1() const { return p1_; }

 private:
  RadialProfile(Kind k, double p0, double p1) : kind_(k), p0_(p0), p1_(p1) {}
  Kind kind_;
  double p0_, p1_;
};

class Diffeomorphism {
 public:
  using PointMap = std::function<Vec(const Vec&)>;
  using JacobianMap = std::function<Mat(const Vec&)>;

  Diffeomorphism(int dim, PointMap forward, PointMap inverse, JacobianMap jacobian,
                 DomainSpec domain, DomainSpec codomain, bool fixes_boundary,
                 nlohmann::json description);

  int dim() const { return dim_; }
  /// Throws OutsideDomain for points outside the (closed, punctured) domain.
  Vec forward(const Vec& x) const;
  /// Throws OutsideCodomain for points outside the codomain.
  Vec inverse(const Vec& y) const;
  Mat jacobian(const Vec& x) const;

  const DomainSpec& domain() const { return domain_; }
  const DomainSpec& codomain() const { return codomain_; }
  bool fixes_boundary() const { return fixes_boundary_; }
  const nlohmann::json& description() const { return description_; }

  /// Set for members built from a single radial profile about the origin.
  const std::optional<RadialProfile>& radial_profile() const { return profile_; }

 private:
  friend Diffeomorphism radial_map(const RadialProfile&, DomainSpec, DomainSpec, bool,
                                   nlohmann::json);
  int dim_;
  PointMap forward_, inverse_;
  JacobianMap jacobian_;
  DomainSpec domain_, codomain_;
  bool fixes_boundary_;
  nlohmann::json description_;
  std::optional<RadialProfile> profile_;
};

Diffeomorphism identity_map(const DomainSpec& domain);
Diffeomorphism scaling_map(int dim, double factor, double radius);
Diffeomorphism rotation_map(const Mat& rotation, double radius);
Diffeomorphism radial_map(const RadialProfile& profile, DomainSpec domain, DomainSpec codomain,
                          bool fixes_boundary, nlohmann::json description = {});
/// x -> (|x|/2 + 1) x/|x| from the punctured ball B(0,2) onto 1 < |y| <= 2.
Diffeomorphism blow_up_map(int dim = 3);
/// Affine radial profile with phi(eps) = 1, phi(2) = 2 on eps < |x| <= 2.
Diffeomorphism near_cloak_map(double epsilon, int dim = 3);
/// (r, th) -> (r, th + tau(r)) on the disk of the given radius; tau(radius) = 0.
Diffeomorphism twist_map(const Expression& tau, double radius = 1.0);
/// F o G.
Diffeomorphism compose(const Diffeomorphism& f, const Diffeomorphism& g);

Diffeomorphism diffeomorphism_from_json(const nlohmann::json& j);

SymmetricTensorField push_forward(const Diffeomorphism& f, const SymmetricTensorField& sigma);
Mat push_forward_matrix(const Mat& jacobian, const Mat& sigma);

struct JacobianConditionReport {
  double c0_estimate = 0.0;  // min smallest singular value of dF
  double c1_estimate = 0.0;  // min det(dF(x)) dist(x, y)
  std::size_t n_samples = 0;
  std::vector<Vec> violations;
};

/// Deterministic radial-angular sample grid over the domain of `f` (the
/// outermost shell lies on the boundary), skipping a 1e-8 neighbourhood of y.
std::vector<Vec> radial_angular_samples(const DomainSpec& domain, std::size_t n_samples,
                                        std::uint64_t seed);

JacobianConditionReport check_jacobian_conditions(const Diffeomorphism& f, const Vec& y,
                                                  std::size_t n_samples,
                                                  std::uint64_t seed = 0);

}  // namespace cloak
