#include "cloak/tensor_core.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "cloak/errors.hpp"

namespace cloak {

namespace {

Mat symmetrize(const Mat& a) { return 0.5 * (a + a.transpose()); }

struct ParsedEntries {
  int dim;
  std::vector<Expression> exprs;
};

ParsedEntries parse_entries(int dim, const std::vector<std::vector<std::string>>& entries,
                            const Parameters& params) {
  if (dim < 1 || dim > 3) fail(ErrorKind::InvalidArgument, "tensor dimension must be 1..3");
  if (static_cast<int>(entries.size()) != dim)
    fail(ErrorKind::InvalidArgument, "entries must have " + std::to_string(dim) + " rows");
  ParsedEntries out{dim, {}};
  for (const auto& row : entries) {
    if (static_cast<int>(row.size()) != dim)
      fail(ErrorKind::InvalidArgument, "entries must have " + std::to_string(dim) + " columns");
    for (const auto& text : row) out.exprs.push_back(Expression::parse(text, params));
  }
  return out;
}

template <class Field>
Field field_from_entries(int dim, Coords coords,
                         const std::vector<std::vector<std::string>>& entries,
                         const Parameters& params) {
  auto parsed = parse_entries(dim, entries, params);
  auto fn = [parsed](const Vec& x) {
    const Variables vars = Variables::from_point(x);
    Mat m(parsed.dim, parsed.dim);
    for (int i = 0; i < parsed.dim; ++i)
      for (int j = 0; j < parsed.dim; ++j) m(i, j) = parsed.exprs[i * parsed.dim + j].eval(vars);
    return m;
  };
  return Field(dim, coords, fn, FieldSource{entries, params});
}

}  // namespace

SymmetricTensorField constant_field(const Mat& value, Coords coords) {
  const int dim = static_cast<int>(value.rows());
  std::vector<std::vector<std::string>> entries(dim, std::vector<std::string>(dim));
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) entries[i][j] = Expression::constant(value(i, j)).str();
  return SymmetricTensorField(dim, coords, [value](const Vec&) { return value; },
                              FieldSource{entries, {}});
}

SymmetricTensorField field_from_expressions(int dim, Coords coords,
                                            const std::vector<std::vector<std::string>>& entries,
                                            const Parameters& params) {
  return field_from_entries<SymmetricTensorField>(dim, coords, entries, params);
}

MetricField constant_metric(const Mat& value, Coords coords) {
  return MetricField(static_cast<int>(value.rows()), coords, [value](const Vec&) { return value; });
}

MetricField metric_from_expressions(int dim, Coords coords,
                                    const std::vector<std::vector<std::string>>& entries,
                                    const Parameters& params) {
  return field_from_entries<MetricField>(dim, coords, entries, params);
}

nlohmann::json to_json(const SymmetricTensorField& field) {
  if (!field.source())
    fail(ErrorKind::InvalidArgument, "only expression-backed tensor fields can be serialized");
  nlohmann::json j;
  j["coords"] = field.coords() == Coords::Spherical ? "spherical" : "cartesian";
  j["dim"] = field.dim();
  j["entries"] = field.source()->entries;
  if (!field.source()->params.empty()) {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [k, v] : field.source()->params) params[k] = v;
    j["params"] = params;
  }
  return j;
}

SymmetricTensorField field_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorKind::ConfigInvalid, "tensor field must be an object");
  const std::string coords = j.value("coords", std::string("cartesian"));
  Coords c;
  if (coords == "cartesian") {
    c = Coords::Cartesian;
  } else if (coords == "spherical" || coords == "polar") {
    c = Coords::Spherical;
  } else {
    fail(ErrorKind::ConfigInvalid, "coords: unknown value '" + coords + "'");
  }
  if (!j.contains("dim") || !j["dim"].is_number_integer())
    fail(ErrorKind::ConfigInvalid, "dim: required integer");
  const int dim = j["dim"].get<int>();
  if (!j.contains("entries") || !j["entries"].is_array())
    fail(ErrorKind::ConfigInvalid, "entries: required array");
  std::vector<std::vector<std::string>> entries;
  for (const auto& row : j["entries"]) {
    if (!row.is_array()) fail(ErrorKind::ConfigInvalid, "entries: rows must be arrays");
    std::vector<std::string> r;
    for (const auto& e : row) {
      if (e.is_string()) {
        r.push_back(e.get<std::string>());
      } else if (e.is_number()) {
        r.push_back(Expression::constant(e.get<double>()).str());
      } else {
        fail(ErrorKind::ConfigInvalid, "entries: values must be strings or numbers");
      }
    }
    entries.push_back(std::move(r));
  }
  Parameters params;
  if (j.contains("params")) {
    for (const auto& [k, v] : j["params"].items()) {
      if (!v.is_number()) fail(ErrorKind::ConfigInvalid, "params." + k + ": must be a number");
      params[k] = v.get<double>();
    }
  }
  try {
    return field_from_expressions(dim, c, entries, params);
  } catch (const Error& e) {
    fail(ErrorKind::ConfigInvalid, std::string("entries: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

Mat sigma_from_metric(const Mat& g) {
  const auto n = g.rows();
  if (n < 3) fail(ErrorKind::InvalidArgument, "sigma/metric dictionary requires dim >= 3");
  const double det = g.determinant();
  if (!(det > 0.0)) fail(ErrorKind::NonInvertibleMetric, "det(g) = " + std::to_string(det));
  return symmetrize(std::sqrt(det) * g.inverse());
}

Mat metric_from_sigma(const Mat& sigma) {
  const auto n = sigma.rows();
  if (n < 3) fail(ErrorKind::InvalidArgument, "sigma/metric dictionary requires dim >= 3");
  const double det = sigma.determinant();
  if (!(det > 0.0))
    fail(ErrorKind::SingularConductivity, "det(sigma) = " + std::to_string(det));
  return symmetrize(std::pow(det, 1.0 / static_cast<double>(n - 2)) * sigma.inverse());
}

SymmetricTensorField sigma_from_metric(const MetricField& g) {
  if (g.dim() < 3) fail(ErrorKind::InvalidArgument, "sigma/metric dictionary requires dim >= 3");
  return SymmetricTensorField(g.dim(), g.coords(),
                              [g](const Vec& x) { return sigma_from_metric(g(x)); });
}

MetricField metric_from_sigma(const SymmetricTensorField& sigma) {
  if (sigma.dim() < 3)
    fail(ErrorKind::InvalidArgument, "sigma/metric dictionary requires dim >= 3");
  return MetricField(sigma.dim(), sigma.coords(),
                     [sigma](const Vec& x) { return metric_from_sigma(sigma(x)); });
}

// ---------------------------------------------------------------------------

Mat spherical_jacobian(const Vec& x, double eps_axis) {
  const auto n = x.size();
  const double r = x.norm();
  if (r < eps_axis) fail(ErrorKind::CoordinateSingularity, "point at the origin");
  Mat j(n, n);
  if (n == 2) {
    const double c = x[0] / r, s = x[1] / r;
    j << c, -r * s,
         s, r * c;
    return j;
  }
  if (n != 3) fail(ErrorKind::InvalidArgument, "spherical coordinates need dim 2 or 3");
  const double rho = std::hypot(x[0], x[1]);
  const double sin_th = rho / r;
  if (sin_th < eps_axis) fail(ErrorKind::CoordinateSingularity, "point on the polar axis");
  const double cos_th = x[2] / r;
  const double cos_ph = x[0] / rho, sin_ph = x[1] / rho;
  j << sin_th * cos_ph, r * cos_th * cos_ph, -r * sin_th * sin_ph,
       sin_th * sin_ph, r * cos_th * sin_ph,  r * sin_th * cos_ph,
       cos_th,          -r * sin_th,          0.0;
  return j;
}

Vec point_from_spherical(double r, double th, double ph) {
  Vec p(3);
  p << r * std::sin(th) * std::cos(ph), r * std::sin(th) * std::sin(ph), r * std::cos(th);
  return p;
}

Mat spherical_to_cartesian(const Mat& sph, const Vec& x, double eps_axis) {
  const Mat j = spherical_jacobian(x, eps_axis);
  return symmetrize(j * sph * j.transpose() / j.determinant());
}

Mat cartesian_to_spherical(const Mat& cart, const Vec& x, double eps_axis) {
  const Mat j = spherical_jacobian(x, eps_axis);
  const Mat jinv = j.inverse();
  return symmetrize(j.determinant() * jinv * cart * jinv.transpose());
}

SymmetricTensorField spherical_to_cartesian(const SymmetricTensorField& field, double eps_axis) {
  if (field.coords() == Coords::Cartesian) return field;
  return SymmetricTensorField(field.dim(), Coords::Cartesian, [field, eps_axis](const Vec& x) {
    return spherical_to_cartesian(field(x), x, eps_axis);
  });
}

SymmetricTensorField cartesian_to_spherical(const SymmetricTensorField& field, double eps_axis) {
  if (field.coords() == Coords::Spherical) return field;
  return SymmetricTensorField(field.dim(), Coords::Spherical, [field, eps_axis](const Vec& x) {
    return cartesian_to_spherical(field(x), x, eps_axis);
  });
}

// ---------------------------------------------------------------------------

namespace {

template <class Field>
FieldCheck check_field(const Field& f, std::span<const Vec> points, double psd_floor_rel,
                       double pd_floor_abs) {
  FieldCheck out;
  out.min_eigen_ratio = std::numeric_limits<double>::infinity();
  out.min_eigenvalue = std::numeric_limits<double>::infinity();
  for (const Vec& x : points) {
    const Mat a = f(x);
    const double scale = std::max(a.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    const double asym = (a - a.transpose()).cwiseAbs().maxCoeff() / scale;
    out.max_asymmetry = std::max(out.max_asymmetry, asym);
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a), Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    const double trace = a.trace();
    out.min_eigenvalue = std::min(out.min_eigenvalue, lmin);
    out.min_eigen_ratio = std::min(out.min_eigen_ratio, trace > 0.0 ? lmin / trace : lmin);
    if (lmin < -psd_floor_rel * std::abs(trace) || lmin < pd_floor_abs)
      out.positive_semidefinite = false;
  }
  out.symmetric = out.max_asymmetry <= 1e-14;
  return out;
}

}  // namespace

FieldCheck check_conductivity(const SymmetricTensorField& field, std::span<const Vec> points) {
  return check_field(field, points, 1e-12, -std::numeric_limits<double>::infinity());
}

FieldCheck check_metric(const MetricField& g, std::span<const Vec> points, double eps_pd) {
  return check_field(g, points, 0.0, eps_pd);
}

// ---------------------------------------------------------------------------

DomainSpec DomainSpec::ball(const Vec& center, double radius) {
  if (!(radius > 0.0)) fail(ErrorKind::InvalidArgument, "ball radius must be positive");
  return DomainSpec(Ball{center, radius});
}

DomainSpec DomainSpec::annulus(const Vec& center, double r_in, double r_out) {
  if (!(r_in >= 0.0 && r_in < r_out))
    fail(ErrorKind::InvalidArgument, "annulus requires 0 <= r_in < r_out");
  return DomainSpec(Annulus{center, r_in, r_out});
}

DomainSpec DomainSpec::punctured_ball(const Vec& center, double radius, const Vec& puncture) {
  if (!(radius > 0.0)) fail(ErrorKind::InvalidArgument, "ball radius must be positive");
  if (puncture.size() != center.size() || (puncture - center).norm() >= radius)
    fail(ErrorKind::InvalidArgument, "puncture must lie inside the ball");
  return DomainSpec(PuncturedBall{center, radius, puncture});
}

DomainSpec DomainSpec::disk(double radius, const Vec& center) {
  if (!(radius > 0.0)) fail(ErrorKind::InvalidArgument, "disk radius must be positive");
  if (center.size() != 2) fail(ErrorKind::InvalidArgument, "disk center must be 2D");
  return DomainSpec(Disk2D{center, radius});
}

int DomainSpec::dim() const { return static_cast<int>(center().size()); }

const Vec& DomainSpec::center() const {
  return std::visit([](const auto& k) -> const Vec& { return k.center; }, kind_);
}

double DomainSpec::outer_radius() const {
  return std::visit(
      [](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, Annulus>) {
          return k.r_out;
        } else {
          return k.radius;
        }
      },
      kind_);
}

double DomainSpec::inner_radius() const {
  if (const auto* a = std::get_if<Annulus>(&kind_)) return a->r_in;
  return 0.0;
}

bool DomainSpec::contains(const Vec& x, double rel_tol) const {
  if (x.size() != dim()) return false;
  const double d = (x - center()).norm();
  const double tol = rel_tol * outer_radius();
  if (d > outer_radius() + tol) return false;
  if (const auto* a = std::get_if<Annulus>(&kind_)) return d > a->r_in;
  if (const auto* p = std::get_if<PuncturedBall>(&kind_)) return (x - p->puncture).norm() > 0.0;
  return true;
}

// ---------------------------------------------------------------------------

RadialFunction::RadialFunction(Expression expr)
    : fn_([expr](double r) { return expr(r); }), expr_(std::move(expr)) {}

RadialFunction RadialFunction::parse(std::string_view text, const Parameters& params) {
  return RadialFunction(Expression::parse(text, params));
}

RadialFunction RadialFunction::table(std::vector<double> radii, std::vector<double> values) {
  if (radii.size() < 2 || radii.size() != values.size())
    fail(ErrorKind::InvalidArgument, "radial table needs >= 2 matching samples");
  if (!std::is_sorted(radii.begin(), radii.end()) ||
      std::adjacent_find(radii.begin(), radii.end()) != radii.end())
    fail(ErrorKind::InvalidArgument, "radial table abscissae must be strictly increasing");
  RadialFunction f;
  f.expr_.reset();
  f.fn_ = [radii = std::move(radii), values = std::move(values)](double r) {
    if (r <= radii.front()) return values.front();
    if (r >= radii.back()) return values.back();
    const auto it = std::upper_bound(radii.begin(), radii.end(), r);
    const auto i = static_cast<std::size_t>(it - radii.begin()) - 1;
    const double t = (r - radii[i]) / (radii[i + 1] - radii[i]);
    return (1.0 - t) * values[i] + t * values[i + 1];
  };
  return f;
}

RadialFunction RadialFunction::from_callable(std::function<double(double)> fn) {
  RadialFunction f;
  f.expr_.reset();
  f.fn_ = std::move(fn);
  return f;
}

}  // namespace cloak
