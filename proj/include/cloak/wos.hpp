#pragma once

// Walk-on-spheres estimates for the Euclidean Laplacian on balls: harmonic
// extensions via Kakutani's formula and hitting probabilities of a small
// target ball (harmonic measure of its surface).

#include <cstdint>
#include <functional>
#include <vector>

#include "cloak/tensor_core.hpp"
#include "json.hpp"

namespace cloak {

inline constexpr std::size_t kDefaultStepBudget = 1'000'000;

struct WalkEstimate {
  double mean = 0.0;
  double std_error = 0.0;  // sample standard deviation / sqrt(n)
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  double eps_shell = 0.0;
  double max_steps = 0.0;  // longest walk in the batch
};

nlohmann::json to_json(const WalkEstimate& e);

using BoundaryFunction = std::function<double(const Vec&)>;

/// u(x) = c + g.x + x^T H x with trace(H) = 0: harmonic everywhere, so its
/// boundary trace has a closed-form extension.
struct HarmonicPolynomial {
  double c = 0.0;
  Vec g;
  Mat H;

  static HarmonicPolynomial constant(int dim, double value);
  /// First spherical-harmonic pattern x_axis / |x| on the sphere of radius R,
  /// extended as x_axis / R.
  static HarmonicPolynomial first_harmonic(int dim, double radius, int axis = 0);
  static HarmonicPolynomial from_json(const nlohmann::json& j, int dim);

  double operator()(const Vec& x) const;
  /// Upper bound for |u| on the sphere of the given radius.
  double max_abs_on_sphere(double radius) const;
};

/// Estimate of the harmonic extension of f into a Ball or Disk2D domain at x.
/// eps_shell <= 0 selects the default 1e-4 * radius.
WalkEstimate wos_harmonic(const DomainSpec& domain, const BoundaryFunction& f, const Vec& x,
                          std::size_t n, std::uint64_t seed, double eps_shell = 0.0,
                          unsigned threads = 1, std::size_t step_budget = kDefaultStepBudget);

struct HittingQuery {
  Vec start;
  Vec target_center;
  double target_radius = 0.0;
  double domain_radius = 0.0;  // domain is the ball about the origin
  double eps_shell = 0.0;      // <= 0 selects 1e-4 * domain_radius
};

void validate(const HittingQuery& q);

/// Probability that Brownian motion from q.start reaches the target sphere
/// before the outer sphere.
WalkEstimate hitting_probability(const HittingQuery& q, std::size_t n, std::uint64_t seed,
                                 unsigned threads = 1,
                                 std::size_t step_budget = kDefaultStepBudget);

/// Closed form for concentric spheres a < d < b: in 3D
/// (1/d - 1/b) / (1/a - 1/b), in 2D log(b/d) / log(b/a).
double concentric_hitting(double a, double b, double d, int dim = 3);

struct UniquenessShell {
  double radius;
  WalkEstimate hitting;
  double bound;  // 3 stderr + hitting mean * max|f|
  bool within_bound;
};

struct UniquenessReport {
  WalkEstimate estimate;
  double exact = 0.0;
  double abs_error = 0.0;
  std::vector<UniquenessShell> shells;
  bool tightening = false;  // bounds decrease as the shells shrink
};

/// Compares the walk estimate at x against the exact extension and bounds
/// the harmonic mass that shrinking balls about the puncture y can carry.
UniquenessReport uniqueness_demo(const Vec& x, const Vec& y, const HarmonicPolynomial& f,
                                 const std::vector<double>& shells, std::size_t n,
                                 std::uint64_t seed, double domain_radius = 2.0,
                                 unsigned threads = 1);

}  // namespace cloak
