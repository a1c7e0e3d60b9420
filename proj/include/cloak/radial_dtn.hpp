#pragma once

// DtN spectra of spherically symmetric conductivities on a ball.
//
// In the density-weighted spherical representation a radial conductivity is
// diag(alpha(r) sin th, beta(r) sin th, beta(r) / sin th). Separating
// u = R(r) Y_n^m gives the mode equation
//
//     (alpha R')' = n (n + 1) beta R,
//
// and the DtN eigenvalue on the sphere r = R_out, measured per unit area
// against unit-amplitude harmonic data, is
//
//     mu_n = alpha(R_out) R'(R_out) / (R_out^2 R(R_out)).
//
// The numeric path integrates the pair (w, log R) with w = alpha R' / R,
// which stays finite at degenerate ends and never under/overflows. Near a
// piece's anchor point the integration variable is log(r - anchor).

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cloak/tensor_core.hpp"
#include "cloak/transform.hpp"
#include "json.hpp"

namespace cloak {

struct RadialPiece {
  double from = 0.0;
  double to = 0.0;
  RadialFunction alpha;
  RadialFunction beta;
  /// When set, integrate in log(r - anchor); must lie at or below `from`.
  std::optional<double> anchor;
};

enum class InnerKind { RegularCenter, FrobeniusSingular, MatchedInterior };

struct InnerCondition {
  InnerKind kind = InnerKind::RegularCenter;
  RadialFunction interior_alpha;  // MatchedInterior only, on [0, r_core]
  RadialFunction interior_beta;
};

class RadialScenario {
 public:
  RadialScenario(std::vector<RadialPiece> pieces, InnerCondition inner, std::string description);

  const std::vector<RadialPiece>& pieces() const { return pieces_; }
  const InnerCondition& inner() const { return inner_; }
  const std::string& description() const { return description_; }
  double r_core() const { return pieces_.front().from; }
  double outer_radius() const { return pieces_.back().to; }

  /// Pieces actually integrated, innermost first: the interior fill piece
  /// for MatchedInterior, then the declared pieces. The first piece always
  /// carries an anchor at its inner end.
  std::vector<RadialPiece> integration_pieces() const;

 private:
  std::vector<RadialPiece> pieces_;
  InnerCondition inner_;
  std::string description_;
};

// Scenario catalogue ---------------------------------------------------------

/// gamma = 1 on B(0,2): (alpha, beta) = (r^2, 1).
RadialScenario homogeneous_scenario(double radius = 2.0);
/// The blow-up cloak on 1 < r <= 2: (2 (r-1)^2, 2), Frobenius-singular at r = 1.
RadialScenario cloak_scenario();
/// Cylinder-type cloak: ((r-1) rho^2, (r-1)^-1) on 1 < r <= 2.
RadialScenario cylinder_scenario(double rho);
/// Isotropic fill c I in density form: (c r^2, c).
std::pair<RadialFunction, RadialFunction> isotropic_fill(double c);
/// gamma = 1 pushed through the near-cloak profile on 1 < r <= 2, with the
/// given interior coefficients on [0, 1].
RadialScenario near_cloak_scenario(double epsilon, const RadialFunction& interior_alpha,
                                   const RadialFunction& interior_beta);
/// Restricts a Frobenius-singular scenario to (r_core + delta, R_out] and
/// fills [0, r_core + delta] with the given coefficients.
RadialScenario truncated_with_fill(const RadialScenario& s, double delta,
                                   const std::pair<RadialFunction, RadialFunction>& fill);

/// Push-forward of radial coefficients by a radial profile r = phi(s):
///   alpha'(r) = phi'(s) alpha(s),  beta'(r) = beta(s) / phi'(s),  s = phi^-1(r).
std::pair<RadialFunction, RadialFunction> push_forward_radial(const RadialProfile& phi,
                                                              const RadialFunction& alpha,
                                                              const RadialFunction& beta);

RadialScenario scenario_from_json(const nlohmann::json& j);

// Mode solutions -------------------------------------------------------------

struct PowerLaw {
  double coefficient = 0.0;
  double exponent = 0.0;
};

/// Leading behaviour f(x0 + s) ~ c s^p as s -> 0+; integer exponents within
/// 1e-6 are snapped.
PowerLaw leading_power_law(const RadialFunction& f, double x0, double length);

struct IndicialExponents {
  double bounded = 0.0;    // selected branch, > 0 for n >= 1
  double unbounded = 0.0;  // rejected branch
};

/// Roots of a l (l + p - 1) = n (n + 1) b at the innermost integration end,
/// where alpha ~ a s^p and beta ~ b s^(p-2).
IndicialExponents indicial_exponents(const RadialScenario& s, int n);

class ModeSolution {
 public:
  struct Knot {
    double u, w, log_r, dw, dlog_r;
  };
  struct Segment {
    RadialPiece piece;
    bool log_coordinate;
    double anchor;
    std::vector<Knot> knots;
  };

  int degree() const { return degree_; }
  /// Indicial exponent of the selected branch at the inner end.
  double exponent() const { return exponent_; }
  /// DtN eigenvalue (Richardson-extrapolated over the start offsets).
  double mu() const { return mu_; }
  double r_core() const { return r_core_; }
  double outer_radius() const { return outer_radius_; }
  /// Relative integral residual of the Riccati form of the mode equation.
  double residual() const { return residual_; }

  /// R normalized to R(R_out) = 1.
  double R(double r) const;
  double log_R(double r) const;
  double R_prime(double r) const;
  /// Radial flux alpha(r) R'(r).
  double flux(double r) const;
  /// lim R(r) as r -> r_core+ (the constant the solution is extended by).
  double inner_limit() const;
  /// Int alpha R'^2 + n(n+1) beta R^2 dr over the whole ball, divided by
  /// R_out^2 so that it is directly comparable with mu.
  double energy() const;

  const std::vector<Segment>& segments() const { return segments_; }

 private:
  friend ModeSolution solve_mode_at(const RadialScenario&, int, double, double);
  friend ModeSolution solve_mode(const RadialScenario&, int, double);
  friend ModeSolution closed_form_mode(const RadialScenario&, int);

  struct Local {
    double w, log_r, alpha, beta;
  };
  Local locate(double r) const;
  /// One integration at a fixed step-control tolerance.
  static ModeSolution integrate(const RadialScenario& s, int n, double tol, double start_offset);

  int degree_ = 0;
  double exponent_ = 0.0;
  double mu_ = 0.0;
  double r_core_ = 0.0;
  double outer_radius_ = 0.0;
  double residual_ = 0.0;
  std::vector<Segment> segments_;
  std::optional<std::pair<double, double>> closed_form_;  // (exponent, s_out)
  RadialFunction cf_alpha_, cf_beta_;
};

/// Solves one mode; tol in [1e-13, 1e-4].
ModeSolution solve_mode(const RadialScenario& s, int n, double tol = 1e-10);
/// A single integration started `start_offset` away from the inner end.
ModeSolution solve_mode_at(const RadialScenario& s, int n, double tol, double start_offset);

/// Pure power-law family alpha = A s^p, beta = B s^(p-2), s = r - r_core
/// (covers the homogeneous ball, the blow-up cloak and the cylinder cloak).
struct PowerLawFamily {
  double alpha_coefficient, beta_coefficient, exponent;
};
std::optional<PowerLawFamily> recognize_power_law(const RadialScenario& s);
/// Throws InvalidArgument when the scenario is not a recognized family.
ModeSolution closed_form_mode(const RadialScenario& s, int n);

/// Log-log slope of R against (r - r_core) over [r_core + s_lo, r_core + s_hi].
double fitted_exponent(const ModeSolution& m, double s_lo, double s_hi, int points = 24);

std::vector<std::pair<double, double>> flux_decay_profile(const ModeSolution& m,
                                                          const std::vector<double>& radii);

// Spectra ---------------------------------------------------------------------

enum class SpectrumMethod { Auto, Numeric, ClosedForm };

struct DtNSpectrum {
  std::vector<double> mu;  // index = degree
  double solver_tol = 0.0;
  std::string method;  // "numeric" or "closed_form"
  int n_max() const { return static_cast<int>(mu.size()) - 1; }
};

DtNSpectrum dtn_spectrum(const RadialScenario& s, int n_max, double tol = 1e-10,
                         SpectrumMethod method = SpectrumMethod::Auto, unsigned threads = 1);

struct SpectrumComparison {
  std::vector<double> abs_diff;
  std::vector<double> rel_diff;
  double max_rel_diff = 0.0;  // over degrees >= 1
  double tolerance = 0.0;
  bool equal = false;
};

/// `b` is the reference; DegreeMismatch when the degree ranges differ.
SpectrumComparison compare_spectra(const DtNSpectrum& a, const DtNSpectrum& b, double tol);

DtNSpectrum near_cloak_spectrum(double epsilon, const RadialFunction& interior_alpha,
                                const RadialFunction& interior_beta, int n_max,
                                double tol = 1e-10, unsigned threads = 1);

struct InvisibilityReport {
  struct Row {
    double delta;
    std::vector<std::vector<double>> mu;  // [fill][degree - 1]
    std::vector<double> spread;           // [degree - 1], max - min across fills
  };
  std::vector<double> fills;
  int n_max = 1;
  std::vector<Row> rows;  // in schedule order
  /// Spread of mu_1 strictly decreases along the schedule.
  bool monotone = false;
};

InvisibilityReport interior_invisibility_test(const RadialScenario& s,
                                              const std::vector<double>& fills,
                                              const std::vector<double>& deltas, int n_max = 1,
                                              double tol = 1e-12, unsigned threads = 1);

}  // namespace cloak
