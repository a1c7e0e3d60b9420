#pragma once

// Closed-form reference values derived by hand, kept independent of the
// library code paths they check.

#include <algorithm>
#include <cmath>
#include <functional>

namespace oracle {

/// Homogeneous ball of radius R: R = r^n, mu_n = n / R.
inline double homogeneous_mu(int n, double radius = 2.0) { return n / radius; }

/// Blow-up cloak on 1 < r <= 2: R = (r - 1)^n, mu_n = 2 n / 4.
inline double cloak_mu(int n) { return 0.5 * n; }

/// Cylinder cloak ((r-1) rho^2, 1/(r-1)): R = (r-1)^lambda with
/// lambda = sqrt(n(n+1)) / rho, so mu_n = rho^2 lambda / 4.
inline double cylinder_lambda(int n, double rho) { return std::sqrt(n * (n + 1.0)) / rho; }
inline double cylinder_mu(int n, double rho) { return rho * std::sqrt(n * (n + 1.0)) / 4.0; }

/// Cloak truncated at r = 1 + t, interior filled with c I. Outer solution
/// A s^n + B s^(-n-1) with s = r - 1, inner r^n; matching alpha R'/R at the
/// interface gives k = B / A.
inline double truncated_cloak_mu(int n, double t, double c) {
  const double in = c * n * (1.0 + t);
  const double q = -(in - 2.0 * n * t) / (2.0 * (n + 1.0) * t + in);
  const double k = q * std::pow(t, 2 * n + 1);
  return 0.5 * (n - (n + 1.0) * k) / (1.0 + k);
}

/// Cylinder cloak truncated at r = 1 + t with fill c I: outer branches
/// s^(+-lambda), alpha = rho^2 s, inner r^n.
inline double truncated_cylinder_mu(int n, double rho, double t, double c) {
  const double lam = cylinder_lambda(n, rho);
  const double in = c * n * (1.0 + t);
  const double q = (rho * rho * lam - in) / (rho * rho * lam + in);
  const double k = q * std::pow(t, 2.0 * lam);
  return rho * rho * lam * (1.0 - k) / (4.0 * (1.0 + k));
}

/// Near cloak of parameter eps with interior fill c I: equivalent to gamma = 1
/// on eps < |x| < 2 with a ball of radius eps holding kappa = c / eps.
inline double near_cloak_mu(int n, double eps, double c, double radius = 2.0) {
  const double kappa = c / eps;
  const double q = n * (1.0 - kappa) / (n * (kappa + 1.0) + 1.0);
  const double k = q * std::pow(eps, 2 * n + 1);
  const double p = k * std::pow(radius, -(2 * n + 1));
  return (n - (n + 1.0) * p) / (radius * (1.0 + p));
}

/// Probability of reaching the sphere |x| = a before |x| = b from radius d.
inline double hitting3(double a, double b, double d) {
  return (1.0 / d - 1.0 / b) / (1.0 / a - 1.0 / b);
}
inline double hitting2(double a, double b, double d) { return std::log(b / d) / std::log(b / a); }

/// Golden-section minimum of a unimodal function on [lo, hi].
inline double golden_min(const std::function<double(double)>& f, double lo, double hi) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < 200 && b - a > 1e-15; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return std::min({f(a), f(b), fc, fd});
}

/// det(dF) |x| for the blow-up map: (1/2)((r/2 + 1)/r)^2 r.
inline double blow_up_det_dist(double r) { return 0.5 * (r / 2.0 + 1.0) * (r / 2.0 + 1.0) / r; }

/// Near-cloak profile phi(r) = r / (2 - eps) + (2 - 2 eps) / (2 - eps).
inline double near_cloak_phi(double eps, double r) { return (r + 2.0 - 2.0 * eps) / (2.0 - eps); }

}  // namespace oracle
