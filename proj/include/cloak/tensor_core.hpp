#pragma once

// Conductivity tensors, Riemannian metrics, the conductivity/metric
// dictionary sigma = det(g)^(1/2) g^-1 (n >= 3) and the spherical-coordinate
// representation used by the radially symmetric scenarios.
//
// Spherical matrices are ordered (r, th, ph) and carry the volume density
// r^2 sin(th) (polar: r), i.e. sigma_sph = det(J) J^-1 sigma_cart J^-T with
// J = d(x, y, z)/d(r, th, ph). Cartesian matrices are plain tensors.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "cloak/expression.hpp"
#include "json.hpp"

namespace cloak {

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;

inline constexpr double kDefaultEpsPd = 1e-10;
inline constexpr double kDefaultEpsAxis = 1e-9;

enum class Coords { Cartesian, Spherical };

/// Expression text kept alongside an expression-backed field so it can be
/// written back to a scenario file.
struct FieldSource {
  std::vector<std::vector<std::string>> entries;
  Parameters params;
};

namespace detail {

template <class Tag>
class TensorField {
 public:
  using EvalFn = std::function<Mat(const Vec&)>;

  TensorField(int dim, Coords coords, EvalFn fn, std::optional<FieldSource> source = std::nullopt)
      : dim_(dim), coords_(coords), fn_(std::move(fn)), source_(std::move(source)) {}

  int dim() const { return dim_; }
  Coords coords() const { return coords_; }
  Mat operator()(const Vec& x) const { return fn_(x); }
  const std::optional<FieldSource>& source() const { return source_; }

 private:
  int dim_;
  Coords coords_;
  EvalFn fn_;
  std::optional<FieldSource> source_;
};

struct ConductivityTag {};
struct MetricTag {};

}  // namespace detail

using SymmetricTensorField = detail::TensorField<detail::ConductivityTag>;
using MetricField = detail::TensorField<detail::MetricTag>;

SymmetricTensorField constant_field(const Mat& value, Coords coords = Coords::Cartesian);
SymmetricTensorField field_from_expressions(int dim, Coords coords,
                                            const std::vector<std::vector<std::string>>& entries,
                                            const Parameters& params = {});
MetricField constant_metric(const Mat& value, Coords coords = Coords::Cartesian);
MetricField metric_from_expressions(int dim, Coords coords,
                                    const std::vector<std::vector<std::string>>& entries,
                                    const Parameters& params = {});

nlohmann::json to_json(const SymmetricTensorField& field);
SymmetricTensorField field_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Pointwise dictionary and its field versions.

Mat sigma_from_metric(const Mat& g);
Mat metric_from_sigma(const Mat& sigma);
SymmetricTensorField sigma_from_metric(const MetricField& g);
MetricField metric_from_sigma(const SymmetricTensorField& sigma);

// ---------------------------------------------------------------------------
// Spherical (3D) / polar (2D) representation.

/// Columns are the coordinate tangent vectors d x / d(r, th[, ph]).
Mat spherical_jacobian(const Vec& x, double eps_axis = kDefaultEpsAxis);
Vec point_from_spherical(double r, double th, double ph);

Mat spherical_to_cartesian(const Mat& sph, const Vec& x, double eps_axis = kDefaultEpsAxis);
Mat cartesian_to_spherical(const Mat& cart, const Vec& x, double eps_axis = kDefaultEpsAxis);
SymmetricTensorField spherical_to_cartesian(const SymmetricTensorField& field,
                                            double eps_axis = kDefaultEpsAxis);
SymmetricTensorField cartesian_to_spherical(const SymmetricTensorField& field,
                                            double eps_axis = kDefaultEpsAxis);

// ---------------------------------------------------------------------------
// Invariant checks over sampled points.

struct FieldCheck {
  double max_asymmetry = 0.0;   // max |A - A^T| / max|A|
  double min_eigen_ratio = 0.0;  // min over samples of lambda_min / trace
  double min_eigenvalue = 0.0;
  bool symmetric = true;
  bool positive_semidefinite = true;
};

FieldCheck check_conductivity(const SymmetricTensorField& field, std::span<const Vec> points);
FieldCheck check_metric(const MetricField& g, std::span<const Vec> points,
                        double eps_pd = kDefaultEpsPd);

// ---------------------------------------------------------------------------

class DomainSpec {
 public:
  struct Ball {
    Vec center;
    double radius;
  };
  struct Annulus {
    Vec center;
    double r_in, r_out;
  };
  struct PuncturedBall {
    Vec center;
    double radius;
    Vec puncture;
  };
  struct Disk2D {
    Vec center;
    double radius;
  };
  using Kind = std::variant<Ball, Annulus, PuncturedBall, Disk2D>;

  static DomainSpec ball(const Vec& center, double radius);
  static DomainSpec annulus(const Vec& center, double r_in, double r_out);
  static DomainSpec punctured_ball(const Vec& center, double radius, const Vec& puncture);
  static DomainSpec disk(double radius, const Vec& center = Vec::Zero(2));

  const Kind& kind() const { return kind_; }
  int dim() const;
  const Vec& center() const;
  double outer_radius() const;
  double inner_radius() const;  // 0 unless annulus
  /// Closed-domain membership with a relative tolerance on radii.
  bool contains(const Vec& x, double rel_tol = 1e-12) const;

 private:
  explicit DomainSpec(Kind k) : kind_(std::move(k)) {}
  Kind kind_;
};

/// A scalar profile of the radius: closed form or a tabulated
/// piecewise-linear interpolant.
class RadialFunction {
 public:
  RadialFunction() : RadialFunction(Expression::constant(0.0)) {}
  explicit RadialFunction(Expression expr);
  static RadialFunction parse(std::string_view text, const Parameters& params = {});
  static RadialFunction table(std::vector<double> radii, std::vector<double> values);
  static RadialFunction from_callable(std::function<double(double)> fn);

  double operator()(double r) const { return fn_(r); }
  const std::optional<Expression>& expression() const { return expr_; }

 private:
  std::function<double(double)> fn_;
  std::optional<Expression> expr_;
};

}  // namespace cloak
