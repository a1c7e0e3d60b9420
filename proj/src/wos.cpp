#include "cloak/wos.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "cloak/errors.hpp"
#include "cloak/numerics.hpp"
#include "cloak/parallel.hpp"
#include "cloak/random.hpp"

namespace cloak {

nlohmann::json to_json(const WalkEstimate& e) {
  return {{"mean", e.mean},
          {"stderr", e.std_error},
          {"n", e.n_samples},
          {"seed", e.seed},
          {"eps_shell", e.eps_shell}};
}

HarmonicPolynomial HarmonicPolynomial::constant(int dim, double value) {
  return {value, Vec::Zero(dim), Mat::Zero(dim, dim)};
}

HarmonicPolynomial HarmonicPolynomial::first_harmonic(int dim, double radius, int axis) {
  if (axis < 0 || axis >= dim) fail(ErrorKind::InvalidArgument, "axis out of range");
  HarmonicPolynomial p = constant(dim, 0.0);
  p.g[axis] = 1.0 / radius;
  return p;
}

HarmonicPolynomial HarmonicPolynomial::from_json(const nlohmann::json& j, int dim) {
  HarmonicPolynomial p = constant(dim, 0.0);
  try {
    p.c = j.value("c", 0.0);
    if (j.contains("g")) {
      const auto g = j["g"].get<std::vector<double>>();
      if (static_cast<int>(g.size()) != dim)
        fail(ErrorKind::ConfigInvalid, "boundary.g: wrong dimension");
      for (int i = 0; i < dim; ++i) p.g[i] = g[i];
    }
    if (j.contains("H")) {
      const auto h = j["H"].get<std::vector<std::vector<double>>>();
      if (static_cast<int>(h.size()) != dim)
        fail(ErrorKind::ConfigInvalid, "boundary.H: wrong dimension");
      for (int i = 0; i < dim; ++i) {
        if (static_cast<int>(h[i].size()) != dim)
          fail(ErrorKind::ConfigInvalid, "boundary.H: wrong dimension");
        for (int k = 0; k < dim; ++k) p.H(i, k) = h[i][k];
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ConfigInvalid, std::string("boundary: ") + e.what());
  }
  if ((p.H - p.H.transpose()).norm() > 1e-14 * (1.0 + p.H.norm()))
    fail(ErrorKind::ConfigInvalid, "boundary.H: must be symmetric");
  if (std::abs(p.H.trace()) > 1e-14 * (1.0 + p.H.norm()))
    fail(ErrorKind::ConfigInvalid, "boundary.H: must be trace-free (harmonic)");
  return p;
}

double HarmonicPolynomial::operator()(const Vec& x) const {
  return c + g.dot(x) + x.dot(H * x);
}

double HarmonicPolynomial::max_abs_on_sphere(double radius) const {
  double h_norm = 0.0;
  if (H.size() > 0) {
    Eigen::SelfAdjointEigenSolver<Mat> es(H);
    h_norm = es.eigenvalues().cwiseAbs().maxCoeff();
  }
  return std::abs(c) + g.norm() * radius + h_norm * radius * radius;
}

namespace {

/// Uniform direction on the unit circle or sphere.
Vec random_direction(Stream& rng, int dim) {
  const double phi = 2.0 * std::numbers::pi * rng.uniform();
  Vec d(dim);
  if (dim == 2) {
    d << std::cos(phi), std::sin(phi);
  } else {
    const double z = 2.0 * rng.uniform() - 1.0;
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    d << s * std::cos(phi), s * std::sin(phi), z;
  }
  return d;
}

WalkEstimate summarize(const std::vector<double>& values, const std::vector<std::size_t>& steps,
                       std::uint64_t seed, double eps) {
  WalkEstimate e;
  e.n_samples = values.size();
  e.seed = seed;
  e.eps_shell = eps;
  const double n = static_cast<double>(values.size());
  e.mean = pairwise_sum(values) / n;
  std::vector<double> dev(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) dev[i] = (values[i] - e.mean) * (values[i] - e.mean);
  e.std_error = values.size() > 1 ? std::sqrt(pairwise_sum(dev) / (n - 1.0) / n) : 0.0;
  e.max_steps = static_cast<double>(*std::max_element(steps.begin(), steps.end()));
  return e;
}

}  // namespace

WalkEstimate wos_harmonic(const DomainSpec& domain, const BoundaryFunction& f, const Vec& x,
                          std::size_t n, std::uint64_t seed, double eps_shell, unsigned threads,
                          std::size_t step_budget) {
  const bool ball = std::holds_alternative<DomainSpec::Ball>(domain.kind()) ||
                    std::holds_alternative<DomainSpec::Disk2D>(domain.kind());
  if (!ball) fail(ErrorKind::InvalidArgument, "walk-on-spheres needs a ball or disk domain");
  const int dim = domain.dim();
  if (dim != 2 && dim != 3) fail(ErrorKind::InvalidArgument, "dimension must be 2 or 3");
  if (x.size() != dim) fail(ErrorKind::InvalidArgument, "start point has the wrong dimension");
  if (n == 0) fail(ErrorKind::InvalidArgument, "need at least one walk");
  const Vec center = domain.center();
  const double R = domain.outer_radius();
  if (!((x - center).norm() < R)) fail(ErrorKind::OutsideDomain, "start point must be interior");
  const double eps = eps_shell > 0.0 ? eps_shell : 1e-4 * R;

  std::vector<double> values(n);
  std::vector<std::size_t> steps(n);
  parallel_for(n, threads, [&](std::size_t i) {
    Stream rng(seed, i);
    Vec p = x;
    for (std::size_t s = 0;; ++s) {
      if (s >= step_budget)
        fail(ErrorKind::NonConvergence, "walk exceeded the step budget; eps_shell too small?");
      const Vec rel = p - center;
      const double dist = R - rel.norm();
      if (dist < eps) {
        values[i] = f(center + rel * (R / rel.norm()));
        steps[i] = s;
        return;
      }
      p += dist * random_direction(rng, dim);
    }
  });
  return summarize(values, steps, seed, eps);
}

void validate(const HittingQuery& q) {
  const int dim = static_cast<int>(q.start.size());
  if (dim != 2 && dim != 3) fail(ErrorKind::InvalidArgument, "dimension must be 2 or 3");
  if (q.target_center.size() != dim)
    fail(ErrorKind::InvalidArgument, "target center has the wrong dimension");
  if (!(q.target_radius > 0.0)) fail(ErrorKind::InvalidArgument, "target radius must be positive");
  if (!(q.target_center.norm() + q.target_radius < q.domain_radius))
    fail(ErrorKind::InvalidArgument, "target must lie strictly inside the domain");
  if (q.start.norm() > q.domain_radius)
    fail(ErrorKind::OutsideDomain, "start lies outside the domain");
  if ((q.start - q.target_center).norm() < q.target_radius * (1.0 - 1e-12))
    fail(ErrorKind::OutsideDomain, "start lies inside the target");
}

WalkEstimate hitting_probability(const HittingQuery& q, std::size_t n, std::uint64_t seed,
                                 unsigned threads, std::size_t step_budget) {
  validate(q);
  if (n == 0) fail(ErrorKind::InvalidArgument, "need at least one walk");
  const int dim = static_cast<int>(q.start.size());
  const double eps = q.eps_shell > 0.0 ? q.eps_shell : 1e-4 * q.domain_radius;
  std::vector<double> values(n);
  std::vector<std::size_t> steps(n);
  parallel_for(n, threads, [&](std::size_t i) {
    Stream rng(seed, i);
    Vec p = q.start;
    for (std::size_t s = 0;; ++s) {
      if (s >= step_budget)
        fail(ErrorKind::NonConvergence, "walk exceeded the step budget; eps_shell too small?");
      const double to_target = (p - q.target_center).norm() - q.target_radius;
      const double to_outer = q.domain_radius - p.norm();
      if (to_target < eps || to_outer < eps) {
        values[i] = to_target < eps ? 1.0 : 0.0;
        steps[i] = s;
        return;
      }
      p += std::min(to_target, to_outer) * random_direction(rng, dim);
    }
  });
  return summarize(values, steps, seed, eps);
}

double concentric_hitting(double a, double b, double d, int dim) {
  if (!(0.0 < a && a < b)) fail(ErrorKind::InvalidArgument, "need 0 < a < b");
  if (!(a <= d && d <= b)) fail(ErrorKind::InvalidArgument, "need a <= d <= b");
  if (dim == 2) return std::log(b / d) / std::log(b / a);
  if (dim == 3) return (1.0 / d - 1.0 / b) / (1.0 / a - 1.0 / b);
  fail(ErrorKind::InvalidArgument, "dimension must be 2 or 3");
}

UniquenessReport uniqueness_demo(const Vec& x, const Vec& y, const HarmonicPolynomial& f,
                                 const std::vector<double>& shells, std::size_t n,
                                 std::uint64_t seed, double domain_radius, unsigned threads) {
  if ((x - y).norm() == 0.0) fail(ErrorKind::InvalidArgument, "x must differ from the puncture");
  const int dim = static_cast<int>(x.size());
  const DomainSpec domain = DomainSpec::ball(Vec::Zero(dim), domain_radius);
  UniquenessReport rep;
  rep.estimate = wos_harmonic(domain, f, x, n, seed, 0.0, threads);
  rep.exact = f(x);
  rep.abs_error = std::abs(rep.estimate.mean - rep.exact);
  const double fmax = f.max_abs_on_sphere(domain_radius);
  std::vector<double> sorted = shells;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  for (double a : sorted) {
    HittingQuery q{x, y, a, domain_radius, std::min(1e-4 * domain_radius, 1e-2 * a)};
    UniquenessShell s;
    s.radius = a;
    s.hitting = hitting_probability(q, n, seed, threads);
    s.bound = 3.0 * rep.estimate.std_error + s.hitting.mean * fmax;
    s.within_bound = rep.abs_error <= s.bound;
    rep.shells.push_back(s);
  }
  rep.tightening = true;
  for (std::size_t i = 0; i + 1 < rep.shells.size(); ++i)
    if (!(rep.shells[i + 1].bound < rep.shells[i].bound)) rep.tightening = false;
  return rep;
}

}  // namespace cloak
