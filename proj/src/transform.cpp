#include "cloak/transform.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "cloak/errors.hpp"
#include "cloak/random.hpp"

namespace cloak {

RadialProfile RadialProfile::affine(double scale, double offset) {
  if (!(scale > 0.0)) fail(ErrorKind::InvalidArgument, "affine profile needs a positive slope");
  return RadialProfile(Kind::Affine, scale, offset);
}

RadialProfile RadialProfile::quadratic(double c, double radius) {
  if (!(radius > 0.0) || !(std::abs(c) * radius < 1.0))
    fail(ErrorKind::InvalidArgument, "quadratic profile needs |c| * radius < 1");
  return RadialProfile(Kind::Quadratic, c, radius);
}

double RadialProfile::value(double r) const {
  if (kind_ == Kind::Affine) return p0_ * r + p1_;
  return r + p0_ * r * (p1_ - r);
}

double RadialProfile::derivative(double r) const {
  if (kind_ == Kind::Affine) return p0_;
  return 1.0 + p0_ * p1_ - 2.0 * p0_ * r;
}

double RadialProfile::inverse(double s) const {
  if (kind_ == Kind::Affine) return (s - p1_) / p0_;
  // c r^2 - (1 + cR) r + s = 0, smaller root in the stable form.
  const double b = 1.0 + p0_ * p1_;
  const double disc = b * b - 4.0 * p0_ * s;
  return 2.0 * s / (b + std::sqrt(std::max(disc, 0.0)));
}

// ---------------------------------------------------------------------------

Diffeomorphism::Diffeomorphism(int dim, PointMap forward, PointMap inverse, JacobianMap jacobian,
                               DomainSpec domain, DomainSpec codomain, bool fixes_boundary,
                               nlohmann::json description)
    : dim_(dim),
      forward_(std::move(forward)),
      inverse_(std::move(inverse)),
      jacobian_(std::move(jacobian)),
      domain_(std::move(domain)),
      codomain_(std::move(codomain)),
      fixes_boundary_(fixes_boundary),
      description_(std::move(description)) {}

Vec Diffeomorphism::forward(const Vec& x) const {
  if (!domain_.contains(x)) fail(ErrorKind::OutsideDomain, "point outside the map's domain");
  return forward_(x);
}

Vec Diffeomorphism::inverse(const Vec& y) const {
  if (!codomain_.contains(y)) fail(ErrorKind::OutsideCodomain, "point outside the map's codomain");
  return inverse_(y);
}

Mat Diffeomorphism::jacobian(const Vec& x) const {
  if (!domain_.contains(x)) fail(ErrorKind::OutsideDomain, "point outside the map's domain");
  return jacobian_(x);
}

Diffeomorphism identity_map(const DomainSpec& domain) {
  const int dim = domain.dim();
  return Diffeomorphism(
      dim, [](const Vec& x) { return x; }, [](const Vec& y) { return y; },
      [dim](const Vec&) { return Mat(Mat::Identity(dim, dim)); }, domain, domain, true,
      {{"map", "identity"}, {"dim", dim}, {"radius", domain.outer_radius()}});
}

Diffeomorphism scaling_map(int dim, double factor, double radius) {
  if (!(factor > 0.0)) fail(ErrorKind::InvalidArgument, "scaling factor must be positive");
  const Vec origin = Vec::Zero(dim);
  return Diffeomorphism(
      dim, [factor](const Vec& x) { return Vec(factor * x); },
      [factor](const Vec& y) { return Vec(y / factor); },
      [dim, factor](const Vec&) { return Mat(factor * Mat::Identity(dim, dim)); },
      DomainSpec::ball(origin, radius), DomainSpec::ball(origin, factor * radius), false,
      {{"map", "scaling"}, {"dim", dim}, {"factor", factor}, {"radius", radius}});
}

Diffeomorphism rotation_map(const Mat& q, double radius) {
  const int dim = static_cast<int>(q.rows());
  if ((q.transpose() * q - Mat::Identity(dim, dim)).norm() > 1e-12)
    fail(ErrorKind::InvalidArgument, "rotation matrix must be orthogonal");
  const Vec origin = Vec::Zero(dim);
  const auto domain = DomainSpec::ball(origin, radius);
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < dim; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < dim; ++j) row.push_back(q(i, j));
    rows.push_back(row);
  }
  return Diffeomorphism(
      dim, [q](const Vec& x) { return Vec(q * x); },
      [q](const Vec& y) { return Vec(q.transpose() * y); }, [q](const Vec&) { return q; }, domain,
      domain, false, {{"map", "rotation"}, {"matrix", rows}, {"radius", radius}});
}

Diffeomorphism radial_map(const RadialProfile& profile, DomainSpec domain, DomainSpec codomain,
                          bool fixes_boundary, nlohmann::json description) {
  const int dim = domain.dim();
  auto forward = [profile](const Vec& x) -> Vec {
    const double r = x.norm();
    if (r == 0.0) {
      if (profile.value(0.0) != 0.0) fail(ErrorKind::OutsideDomain, "radial map undefined at 0");
      return x;
    }
    return profile.value(r) / r * x;
  };
  auto inverse = [profile](const Vec& y) -> Vec {
    const double s = y.norm();
    if (s == 0.0) return y;
    return profile.inverse(s) / s * y;
  };
  auto jacobian = [profile, dim](const Vec& x) -> Mat {
    const double r = x.norm();
    const Mat id = Mat::Identity(dim, dim);
    if (r == 0.0) return profile.derivative(0.0) * id;
    const Vec u = x / r;
    const Mat radial = u * u.transpose();
    return profile.derivative(r) * radial + profile.value(r) / r * (id - radial);
  };
  Diffeomorphism f(dim, forward, inverse, jacobian, std::move(domain), std::move(codomain),
                   fixes_boundary, std::move(description));
  f.profile_ = profile;
  return f;
}

Diffeomorphism blow_up_map(int dim) {
  if (dim < 2 || dim > 3) fail(ErrorKind::InvalidArgument, "blow-up map needs dim 2 or 3");
  const Vec origin = Vec::Zero(dim);
  return radial_map(RadialProfile::affine(0.5, 1.0), DomainSpec::punctured_ball(origin, 2.0, origin),
                    DomainSpec::annulus(origin, 1.0, 2.0), true,
                    {{"map", "blow_up"}, {"dim", dim}});
}

Diffeomorphism near_cloak_map(double epsilon, int dim) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    fail(ErrorKind::InvalidEpsilon, "epsilon must lie in (0, 1), got " + std::to_string(epsilon));
  const Vec origin = Vec::Zero(dim);
  const double scale = 1.0 / (2.0 - epsilon);
  const double offset = (2.0 - 2.0 * epsilon) / (2.0 - epsilon);
  return radial_map(RadialProfile::affine(scale, offset), DomainSpec::annulus(origin, epsilon, 2.0),
                    DomainSpec::annulus(origin, 1.0, 2.0), true,
                    {{"map", "near_cloak"}, {"epsilon", epsilon}, {"dim", dim}});
}

Diffeomorphism twist_map(const Expression& tau, double radius) {
  if (std::abs(tau(radius)) > 1e-14)
    fail(ErrorKind::InvalidArgument, "twist angle must vanish on the boundary");
  const Expression dtau = tau.derivative(Var::R);
  auto rot = [](double a) {
    Mat q(2, 2);
    q << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    return q;
  };
  auto forward = [tau, rot](const Vec& x) -> Vec { return rot(tau(x.norm())) * x; };
  auto inverse = [tau, rot](const Vec& y) -> Vec { return rot(-tau(y.norm())) * y; };
  auto jacobian = [tau, dtau, rot](const Vec& x) -> Mat {
    const double r = x.norm();
    const Mat q = rot(tau(r));
    if (r == 0.0) return q;
    Vec jx(2);
    jx << -x[1], x[0];
    return q * (Mat::Identity(2, 2) + (dtau(r) / r) * jx * x.transpose());
  };
  const auto domain = DomainSpec::disk(radius);
  return Diffeomorphism(2, forward, inverse, jacobian, domain, domain, true,
                        {{"map", "twist2d"}, {"tau", tau.str()}, {"radius", radius}});
}

Diffeomorphism compose(const Diffeomorphism& f, const Diffeomorphism& g) {
  if (f.dim() != g.dim()) fail(ErrorKind::InvalidArgument, "composition dimension mismatch");
  auto forward = [f, g](const Vec& x) { return f.forward(g.forward(x)); };
  auto inverse = [f, g](const Vec& y) { return g.inverse(f.inverse(y)); };
  auto jacobian = [f, g](const Vec& x) -> Mat { return f.jacobian(g.forward(x)) * g.jacobian(x); };
  return Diffeomorphism(f.dim(), forward, inverse, jacobian, g.domain(), f.codomain(),
                        f.fixes_boundary() && g.fixes_boundary(),
                        {{"map", "compose"}, {"outer", f.description()}, {"inner", g.description()}});
}

Diffeomorphism diffeomorphism_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("map") || !j["map"].is_string())
    fail(ErrorKind::ConfigInvalid, "map: required string");
  const std::string kind = j["map"].get<std::string>();
  auto number = [&](const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) fail(ErrorKind::ConfigInvalid, std::string(key) + ": must be a number");
    return j[key].get<double>();
  };
  const int dim = static_cast<int>(number("dim", 3));
  if (kind == "blow_up") return blow_up_map(dim);
  if (kind == "near_cloak") {
    if (!j.contains("epsilon")) fail(ErrorKind::ConfigInvalid, "epsilon: required");
    const double eps = number("epsilon", 0.0);
    if (!(eps > 0.0 && eps < 1.0))
      fail(ErrorKind::ConfigInvalid, "epsilon: must lie in (0, 1)");
    return near_cloak_map(eps, dim);
  }
  if (kind == "twist2d") {
    if (!j.contains("tau") || !j["tau"].is_string())
      fail(ErrorKind::ConfigInvalid, "tau: required expression string");
    try {
      return twist_map(Expression::parse(j["tau"].get<std::string>()), number("radius", 1.0));
    } catch (const Error& e) {
      fail(ErrorKind::ConfigInvalid, std::string("tau: ") + e.what());
    }
  }
  if (kind == "radial_quadratic") {
    const double radius = number("radius", 1.0);
    const double c = number("c", 0.0);
    if (!(std::abs(c) * radius < 1.0)) fail(ErrorKind::ConfigInvalid, "c: need |c| * radius < 1");
    const Vec origin = Vec::Zero(j.contains("dim") ? dim : 2);
    const auto ball = DomainSpec::ball(origin, radius);
    return radial_map(RadialProfile::quadratic(c, radius), ball, ball, true,
                      {{"map", "radial_quadratic"}, {"c", c}, {"radius", radius},
                       {"dim", origin.size()}});
  }
  if (kind == "identity") {
    const Vec origin = Vec::Zero(dim);
    return identity_map(DomainSpec::ball(origin, number("radius", 1.0)));
  }
  if (kind == "scaling") return scaling_map(dim, number("factor", 1.0), number("radius", 1.0));
  fail(ErrorKind::ConfigInvalid, "map: unknown kind '" + kind + "'");
}

// ---------------------------------------------------------------------------

Mat push_forward_matrix(const Mat& a, const Mat& sigma) {
  const double det = a.determinant();
  if (std::abs(det) < 1e-14) fail(ErrorKind::DegenerateJacobian, "|det dF| below 1e-14");
  const Mat out = a * sigma * a.transpose() / std::abs(det);
  return 0.5 * (out + out.transpose());
}

SymmetricTensorField push_forward(const Diffeomorphism& f, const SymmetricTensorField& sigma) {
  if (sigma.dim() != f.dim()) fail(ErrorKind::InvalidArgument, "push-forward dimension mismatch");
  const SymmetricTensorField cart = spherical_to_cartesian(sigma);
  return SymmetricTensorField(f.dim(), Coords::Cartesian, [f, cart](const Vec& y) {
    if (!f.codomain().contains(y))
      fail(ErrorKind::OutsideCodomain, "evaluation point outside the map's codomain");
    const Vec x = f.inverse(y);
    return push_forward_matrix(f.jacobian(x), cart(x));
  });
}

// ---------------------------------------------------------------------------

std::vector<Vec> radial_angular_samples(const DomainSpec& domain, std::size_t n_samples,
                                        std::uint64_t seed) {
  const int dim = domain.dim();
  const double r_in = domain.inner_radius();
  const double r_out = domain.outer_radius();
  const auto n_radii = static_cast<std::size_t>(
      std::max(1.0, std::ceil(std::pow(static_cast<double>(n_samples), 1.0 / dim))));
  const std::size_t n_dirs = (n_samples + n_radii - 1) / n_radii;

  Stream rng(seed, 0);
  std::vector<Vec> dirs;
  dirs.reserve(n_dirs);
  if (dim == 2) {
    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    for (std::size_t i = 0; i < n_dirs; ++i) {
      const double a = phase + 2.0 * std::numbers::pi * static_cast<double>(i) / n_dirs;
      Vec d(2);
      d << std::cos(a), std::sin(a);
      dirs.push_back(d);
    }
  } else {
    // Spherical Fibonacci lattice under a seed-dependent rotation.
    Eigen::Quaterniond q(rng.uniform() - 0.5, rng.uniform() - 0.5, rng.uniform() - 0.5,
                         rng.uniform() - 0.5);
    q.normalize();
    const Eigen::Matrix3d rot = q.toRotationMatrix();
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (std::size_t i = 0; i < n_dirs; ++i) {
      const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / n_dirs;
      const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double a = golden * static_cast<double>(i);
      Eigen::Vector3d d(rho * std::cos(a), rho * std::sin(a), z);
      dirs.push_back(Vec(rot * d));
    }
  }

  std::vector<Vec> out;
  out.reserve(n_radii * n_dirs);
  for (std::size_t k = 1; k <= n_radii; ++k) {
    const double r = r_in + (r_out - r_in) * static_cast<double>(k) / n_radii;
    for (const Vec& d : dirs) out.push_back(Vec(domain.center() + r * d));
  }
  return out;
}

JacobianConditionReport check_jacobian_conditions(const Diffeomorphism& f, const Vec& y,
                                                  std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 1) fail(ErrorKind::InvalidArgument, "n_samples must be >= 1");
  JacobianConditionReport rep;
  rep.c0_estimate = std::numeric_limits<double>::infinity();
  rep.c1_estimate = std::numeric_limits<double>::infinity();
  for (const Vec& x : radial_angular_samples(f.domain(), n_samples, seed)) {
    const double dist = (x - y).norm();
    if (dist < 1e-8 || !f.domain().contains(x)) continue;
    const Mat a = f.jacobian(x);
    Eigen::JacobiSVD<Mat> svd(a);
    const double smin = svd.singularValues().minCoeff();
    const double c1 = a.determinant() * dist;
    rep.c0_estimate = std::min(rep.c0_estimate, smin);
    rep.c1_estimate = std::min(rep.c1_estimate, c1);
    if (!(smin > 0.0) || !(c1 > 0.0)) rep.violations.push_back(x);
    ++rep.n_samples;
  }
  return rep;
}

}  // namespace cloak
