#include "cloak/radial_dtn.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "cloak/errors.hpp"
#include "cloak/numerics.hpp"
#include "cloak/parallel.hpp"

namespace cloak {

namespace {

constexpr double kEndpointTol = 1e-12;

bool positive_on_interior(const RadialFunction& f, double a, double b) {
  for (int k = 1; k <= 9; ++k) {
    const double r = a + (b - a) * k / 10.0;
    if (!(f(r) > 0.0)) return false;
  }
  return true;
}

}  // namespace

RadialScenario::RadialScenario(std::vector<RadialPiece> pieces, InnerCondition inner,
                               std::string description)
    : pieces_(std::move(pieces)), inner_(std::move(inner)), description_(std::move(description)) {
  if (pieces_.empty()) fail(ErrorKind::InvalidArgument, "scenario needs at least one piece");
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    auto& p = pieces_[i];
    if (!(p.from < p.to)) fail(ErrorKind::InvalidArgument, "piece interval must be increasing");
    if (i > 0) {
      if (std::abs(pieces_[i - 1].to - p.from) > kEndpointTol)
        fail(ErrorKind::InvalidArgument, "pieces must tile without gaps or overlaps");
      p.from = pieces_[i - 1].to;
    }
    if (p.anchor && *p.anchor > p.from + kEndpointTol)
      fail(ErrorKind::InvalidArgument, "piece anchor must not exceed the piece start");
    if (!positive_on_interior(p.alpha, p.from, p.to) || !positive_on_interior(p.beta, p.from, p.to))
      fail(ErrorKind::InvalidArgument, "alpha and beta must be positive on piece interiors");
  }
  const double rc = pieces_.front().from;
  switch (inner_.kind) {
    case InnerKind::RegularCenter:
      if (std::abs(rc) > kEndpointTol)
        fail(ErrorKind::InvalidArgument, "RegularCenter requires the pieces to start at r = 0");
      break;
    case InnerKind::FrobeniusSingular: {
      const auto law = leading_power_law(pieces_.front().alpha, rc, pieces_.front().to - rc);
      if (!(law.exponent > 0.0))
        fail(ErrorKind::InvalidArgument, "FrobeniusSingular requires alpha -> 0 at r_core");
      break;
    }
    case InnerKind::MatchedInterior:
      if (!(rc > 0.0))
        fail(ErrorKind::InvalidArgument, "MatchedInterior requires an interface radius > 0");
      if (!positive_on_interior(inner_.interior_alpha, 0.0, rc) ||
          !positive_on_interior(inner_.interior_beta, 0.0, rc))
        fail(ErrorKind::InvalidArgument, "interior coefficients must be positive");
      break;
  }
}

std::vector<RadialPiece> RadialScenario::integration_pieces() const {
  std::vector<RadialPiece> out;
  if (inner_.kind == InnerKind::MatchedInterior)
    out.push_back(RadialPiece{0.0, r_core(), inner_.interior_alpha, inner_.interior_beta, 0.0});
  for (const auto& p : pieces_) out.push_back(p);
  out.front().anchor = out.front().from;
  return out;
}

// ---------------------------------------------------------------------------

RadialScenario homogeneous_scenario(double radius) {
  return RadialScenario({RadialPiece{0.0, radius, RadialFunction::parse("r^2"),
                                     RadialFunction::parse("1"), std::nullopt}},
                        InnerCondition{InnerKind::RegularCenter, {}, {}},
                        "homogeneous conductivity gamma = 1");
}

RadialScenario cloak_scenario() {
  return RadialScenario({RadialPiece{1.0, 2.0, RadialFunction::parse("2*(r-1)^2"),
                                     RadialFunction::parse("2"), std::nullopt}},
                        InnerCondition{InnerKind::FrobeniusSingular, {}, {}},
                        "blow-up cloak sigma = F_* gamma on 1 < r <= 2");
}

RadialScenario cylinder_scenario(double rho) {
  if (!(rho > 0.0)) fail(ErrorKind::InvalidArgument, "rho must be positive");
  const Parameters params{{"rho", rho}};
  return RadialScenario({RadialPiece{1.0, 2.0, RadialFunction::parse("(r-1)*rho^2", params),
                                     RadialFunction::parse("1/(r-1)"), std::nullopt}},
                        InnerCondition{InnerKind::FrobeniusSingular, {}, {}},
                        "cylinder-type cloak, rho = " + std::to_string(rho));
}

std::pair<RadialFunction, RadialFunction> isotropic_fill(double c) {
  if (!(c > 0.0)) fail(ErrorKind::InvalidArgument, "fill conductivity must be positive");
  const Parameters params{{"c", c}};
  return {RadialFunction::parse("c*r^2", params), RadialFunction::parse("c", params)};
}

std::pair<RadialFunction, RadialFunction> push_forward_radial(const RadialProfile& phi,
                                                              const RadialFunction& alpha,
                                                              const RadialFunction& beta) {
  auto new_alpha = [phi, alpha](double r) {
    const double s = phi.inverse(r);
    return phi.derivative(s) * alpha(s);
  };
  auto new_beta = [phi, beta](double r) {
    const double s = phi.inverse(r);
    return beta(s) / phi.derivative(s);
  };
  return {RadialFunction::from_callable(new_alpha), RadialFunction::from_callable(new_beta)};
}

RadialScenario near_cloak_scenario(double epsilon, const RadialFunction& interior_alpha,
                                   const RadialFunction& interior_beta) {
  const auto map = near_cloak_map(epsilon);  // validates epsilon
  const RadialProfile& phi = *map.radial_profile();
  auto [alpha, beta] =
      push_forward_radial(phi, RadialFunction::parse("r^2"), RadialFunction::parse("1"));
  return RadialScenario({RadialPiece{1.0, 2.0, alpha, beta, phi.value(0.0)}},
                        InnerCondition{InnerKind::MatchedInterior, interior_alpha, interior_beta},
                        "near cloak, epsilon = " + std::to_string(epsilon));
}

RadialScenario truncated_with_fill(const RadialScenario& s, double delta,
                                   const std::pair<RadialFunction, RadialFunction>& fill) {
  if (s.inner().kind != InnerKind::FrobeniusSingular)
    fail(ErrorKind::InvalidArgument, "truncation applies to Frobenius-singular scenarios");
  if (!(delta > 0.0 && delta < 0.5))
    fail(ErrorKind::InvalidArgument, "truncation delta must lie in (0, 0.5)");
  auto pieces = s.pieces();
  const double rc = s.r_core();
  if (!(rc + delta < pieces.front().to))
    fail(ErrorKind::InvalidArgument, "truncation delta exceeds the singular piece");
  if (!pieces.front().anchor) pieces.front().anchor = rc;
  pieces.front().from = rc + delta;
  return RadialScenario(std::move(pieces),
                        InnerCondition{InnerKind::MatchedInterior, fill.first, fill.second},
                        s.description() + ", truncated at delta = " + std::to_string(delta));
}

namespace {

RadialFunction radial_from_json(const nlohmann::json& j, const Parameters& params,
                                const std::string& path) {
  try {
    if (j.is_string()) return RadialFunction::parse(j.get<std::string>(), params);
    if (j.is_number()) return RadialFunction(Expression::constant(j.get<double>()));
    if (j.is_object() && j.contains("r") && j.contains("values"))
      return RadialFunction::table(j["r"].get<std::vector<double>>(),
                                   j["values"].get<std::vector<double>>());
  } catch (const Error& e) {
    fail(ErrorKind::ConfigInvalid, path + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ConfigInvalid, path + ": " + e.what());
  }
  fail(ErrorKind::ConfigInvalid, path + ": expected expression string, number or table");
}

double number_at(const nlohmann::json& j, const char* key, const std::string& path) {
  if (!j.contains(key) || !j[key].is_number())
    fail(ErrorKind::ConfigInvalid, path + key + ": required number");
  return j[key].get<double>();
}

}  // namespace

RadialScenario scenario_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorKind::ConfigInvalid, "scenario: must be an object");
  Parameters params;
  if (j.contains("params")) {
    if (!j["params"].is_object()) fail(ErrorKind::ConfigInvalid, "scenario.params: must be object");
    for (const auto& [k, v] : j["params"].items()) {
      if (!v.is_number()) fail(ErrorKind::ConfigInvalid, "scenario.params." + k + ": must be number");
      params[k] = v.get<double>();
    }
  }
  try {
    if (j.contains("family")) {
      const std::string family = j["family"].get<std::string>();
      if (family == "homogeneous") return homogeneous_scenario(j.value("radius", 2.0));
      if (family == "cloak") return cloak_scenario();
      if (family == "cylinder") {
        const double rho = number_at(j, "rho", "scenario.");
        if (!(rho > 0.0)) fail(ErrorKind::ConfigInvalid, "scenario.rho: must be positive");
        return cylinder_scenario(rho);
      }
      if (family == "near_cloak") {
        const double eps = number_at(j, "epsilon", "scenario.");
        if (!(eps > 0.0 && eps < 1.0))
          fail(ErrorKind::ConfigInvalid, "scenario.epsilon: must lie in (0, 1)");
        std::pair<RadialFunction, RadialFunction> fill = isotropic_fill(1.0);
        if (j.contains("interior_fill")) {
          const double c = number_at(j, "interior_fill", "scenario.");
          if (!(c > 0.0)) fail(ErrorKind::ConfigInvalid, "scenario.interior_fill: must be > 0");
          fill = isotropic_fill(c);
        } else if (j.contains("interior")) {
          fill = {radial_from_json(j["interior"].at("alpha"), params, "scenario.interior.alpha"),
                  radial_from_json(j["interior"].at("beta"), params, "scenario.interior.beta")};
        }
        return near_cloak_scenario(eps, fill.first, fill.second);
      }
      fail(ErrorKind::ConfigInvalid, "scenario.family: unknown family '" + family + "'");
    }

    if (!j.contains("pieces") || !j["pieces"].is_array() || j["pieces"].empty())
      fail(ErrorKind::ConfigInvalid, "scenario.pieces: required non-empty array");
    std::vector<RadialPiece> pieces;
    for (std::size_t i = 0; i < j["pieces"].size(); ++i) {
      const auto& pj = j["pieces"][i];
      const std::string path = "scenario.pieces[" + std::to_string(i) + "].";
      RadialPiece p;
      p.from = number_at(pj, "from", path);
      p.to = number_at(pj, "to", path);
      if (!pj.contains("alpha")) fail(ErrorKind::ConfigInvalid, path + "alpha: required");
      if (!pj.contains("beta")) fail(ErrorKind::ConfigInvalid, path + "beta: required");
      p.alpha = radial_from_json(pj["alpha"], params, path + "alpha");
      p.beta = radial_from_json(pj["beta"], params, path + "beta");
      if (pj.contains("anchor")) p.anchor = number_at(pj, "anchor", path);
      pieces.push_back(std::move(p));
    }
    InnerCondition inner;
    const auto& ij = j.contains("inner") ? j["inner"] : nlohmann::json("regular_center");
    const std::string kind = ij.is_string() ? ij.get<std::string>() : ij.value("kind", "");
    if (kind == "regular_center") {
      inner.kind = InnerKind::RegularCenter;
    } else if (kind == "frobenius") {
      inner.kind = InnerKind::FrobeniusSingular;
    } else if (kind == "matched_interior") {
      inner.kind = InnerKind::MatchedInterior;
      if (!ij.is_object() || !ij.contains("alpha") || !ij.contains("beta"))
        fail(ErrorKind::ConfigInvalid, "scenario.inner: matched_interior needs alpha and beta");
      inner.interior_alpha = radial_from_json(ij["alpha"], params, "scenario.inner.alpha");
      inner.interior_beta = radial_from_json(ij["beta"], params, "scenario.inner.beta");
    } else {
      fail(ErrorKind::ConfigInvalid, "scenario.inner: unknown kind '" + kind + "'");
    }
    return RadialScenario(std::move(pieces), std::move(inner), j.value("description", ""));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ConfigInvalid, std::string("scenario: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigInvalid) throw;
    fail(ErrorKind::ConfigInvalid, std::string("scenario: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

PowerLaw leading_power_law(const RadialFunction& f, double x0, double length) {
  // Offsets rounded so that (x0 + h) - x0 == h exactly.
  const double h1 = (x0 + 1e-7 * length) - x0, h2 = (x0 + 1e-6 * length) - x0;
  const double f1 = f(x0 + h1), f2 = f(x0 + h2);
  if (!(f1 > 0.0) || !(f2 > 0.0))
    fail(ErrorKind::InvalidArgument, "coefficient must be positive near the inner end");
  double p = std::log(f2 / f1) / std::log(h2 / h1);
  if (std::abs(p - std::round(p)) < 1e-6) p = std::round(p);
  return PowerLaw{f1 / std::pow(h1, p), p};
}

namespace {

struct InnerLaw {
  PowerLaw alpha, beta;
};

InnerLaw inner_law(const RadialPiece& first) {
  const double len = first.to - first.from;
  return {leading_power_law(first.alpha, first.from, len),
          leading_power_law(first.beta, first.from, len)};
}

IndicialExponents indicial_from_law(const InnerLaw& law, int n) {
  const double L = static_cast<double>(n) * (n + 1);
  const double a = law.alpha.coefficient, p = law.alpha.exponent;
  const double b = law.beta.coefficient, q = law.beta.exponent;
  if (n == 0) return {0.0, std::min(0.0, 1.0 - p)};
  IndicialExponents out;
  if (std::abs(q - (p - 2.0)) < 1e-6) {
    const double disc = (p - 1.0) * (p - 1.0) + 4.0 * L * b / a;
    out.bounded = 0.5 * (-(p - 1.0) + std::sqrt(disc));
    out.unbounded = 0.5 * (-(p - 1.0) - std::sqrt(disc));
  } else if (q > p - 2.0) {
    out.bounded = std::max(0.0, 1.0 - p);
    out.unbounded = std::min(0.0, 1.0 - p);
  } else {
    fail(ErrorKind::NoBoundedBranch,
         "irregular singular point: beta dominates alpha / s^2 at the inner end");
  }
  if (!(out.bounded > 0.0))
    fail(ErrorKind::NoBoundedBranch, "indicial equation has no positive root");
  return out;
}

double hermite(double t, double h, double y0, double d0, double y1, double d1) {
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * d0 + (-2 * t3 + 3 * t2) * y1 +
         (t3 - t2) * h * d1;
}

double hermite_slope(double t, double h, double y0, double d0, double y1, double d1) {
  const double t2 = t * t;
  return (6 * t2 - 6 * t) / h * y0 + (3 * t2 - 4 * t + 1) * d0 + (-6 * t2 + 6 * t) / h * y1 +
         (3 * t2 - 2 * t) * d1;
}

/// Riccati form of the mode equation in the integration variable u.
struct ModeRhs {
  const RadialPiece& piece;
  bool log_coordinate;
  double anchor;
  double L;

  double radius(double u) const { return log_coordinate ? anchor + std::exp(u) : u; }
  double dr_du(double u) const { return log_coordinate ? std::exp(u) : 1.0; }

  std::array<double, 2> operator()(double u, const std::array<double, 2>& y) const {
    const double r = radius(u);
    const double j = dr_du(u);
    const double a = piece.alpha(r);
    const double b = piece.beta(r);
    return {j * (L * b - y[0] * y[0] / a), j * y[0] / a};
  }
};

using State = std::array<double, 2>;

/// Dormand-Prince 5(4) with per-component tolerances: w relative, log R
/// absolute (= relative accuracy of R). Records every accepted step.
void integrate_segment(const ModeRhs& rhs, double u0, double u1, State& y, double tol,
                       std::vector<ModeSolution::Knot>& knots) {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  constexpr std::size_t kMaxSteps = 1'000'000;

  const double span = u1 - u0;
  double h = std::min(span, 1e-3 * std::max(1.0, std::abs(span)));
  double u = u0;
  State k1 = rhs(u, y);
  knots.push_back({u, y[0], y[1], k1[0], k1[1]});

  auto axpy = [](const State& base, double h, std::initializer_list<std::pair<double, const State*>> terms) {
    State out = base;
    for (const auto& [c, k] : terms) {
      out[0] += h * c * (*k)[0];
      out[1] += h * c * (*k)[1];
    }
    return out;
  };

  for (std::size_t step = 0; step < kMaxSteps; ++step) {
    if (u >= u1) return;
    bool last = false;
    if (u + h >= u1) {
      h = u1 - u;
      last = true;
    }
    const State k2 = rhs(u + c2 * h, axpy(y, h, {{a21, &k1}}));
    const State k3 = rhs(u + c3 * h, axpy(y, h, {{a31, &k1}, {a32, &k2}}));
    const State k4 = rhs(u + c4 * h, axpy(y, h, {{a41, &k1}, {a42, &k2}, {a43, &k3}}));
    const State k5 = rhs(u + c5 * h, axpy(y, h, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
    const State k6 =
        rhs(u + h, axpy(y, h, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}));
    const State ynew = axpy(y, h, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
    const State k7 = rhs(u + h, ynew);

    double err = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double e =
          h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
      const double atol = i == 0 ? 1e-300 : tol;
      const double scale = atol + tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      err = std::max(err, std::abs(e) / scale);
    }
    // A non-finite trial state (stiff transient overshoot) is just a rejected step.
    if (err <= 1.0) {
      u = last ? u1 : u + h;
      y = ynew;
      k1 = k7;
      knots.push_back({u, y[0], y[1], k1[0], k1[1]});
      if (last) return;
      const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      h *= factor;
    } else {
      h *= std::isfinite(err) ? std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.9) : 0.1;
    }
    if (h < 1e-15 * std::max(1.0, std::abs(u)))
      fail(ErrorKind::ToleranceNotMet, "step size underflow in mode integration");
  }
  fail(ErrorKind::ToleranceNotMet, "step budget exhausted in mode integration");
}

double coordinate(const ModeSolution::Segment& seg, double r) {
  return seg.log_coordinate ? std::log(std::max(r - seg.anchor, 1e-300)) : r;
}

void check_tol(double tol) {
  if (!(tol >= 1e-13 && tol <= 1e-4))
    fail(ErrorKind::InvalidArgument, "tolerance must lie in [1e-13, 1e-4]");
}

}  // namespace

IndicialExponents indicial_exponents(const RadialScenario& s, int n) {
  if (n < 0) fail(ErrorKind::InvalidArgument, "degree must be >= 0");
  return indicial_from_law(inner_law(s.integration_pieces().front()), n);
}

ModeSolution solve_mode_at(const RadialScenario& s, int n, double tol, double start_offset) {
  if (n < 0) fail(ErrorKind::InvalidArgument, "degree must be >= 0");
  check_tol(tol);
  // Tighten the step control until the interpolant's defect meets tol.
  // Keeps the best attempt; the residual stays available to the caller.
  double inner_tol = tol;
  ModeSolution best = ModeSolution::integrate(s, n, inner_tol, start_offset);
  for (int attempt = 0; attempt < 2 && best.residual() > tol && inner_tol > 1e-15; ++attempt) {
    inner_tol = std::max(0.1 * inner_tol, 1e-15);
    ModeSolution m = ModeSolution::integrate(s, n, inner_tol, start_offset);
    if (m.residual() < best.residual()) best = std::move(m);
  }
  return best;
}

ModeSolution ModeSolution::integrate(const RadialScenario& s, int n, double tol,
                                     double start_offset) {
  const auto pieces = s.integration_pieces();
  const InnerLaw law = inner_law(pieces.front());
  const double lambda = indicial_from_law(law, n).bounded;
  const double L = static_cast<double>(n) * (n + 1);

  ModeSolution m;
  m.degree_ = n;
  m.exponent_ = n == 0 ? 0.0 : lambda;
  m.r_core_ = pieces.front().from;
  m.outer_radius_ = s.outer_radius();

  State y{0.0, 0.0};
  double residual_num = 0.0, residual_den = 0.0;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const RadialPiece& piece = pieces[i];
    ModeSolution::Segment seg{piece, piece.anchor.has_value(), piece.anchor.value_or(0.0), {}};
    double u0, u1;
    if (i == 0) {
      const double s0 = std::min(start_offset, 1e-2 * (piece.to - piece.from));
      const double r0 = piece.from + s0;
      y = {piece.alpha(r0) * m.exponent_ / s0, 0.0};
      u0 = std::log(s0);
    } else {
      u0 = coordinate(seg, piece.from);
    }
    u1 = coordinate(seg, piece.to);
    const ModeRhs rhs{piece, seg.log_coordinate, seg.anchor, L};
    if (n == 0) {
      seg.knots.push_back({u0, 0.0, 0.0, 0.0, 0.0});
      seg.knots.push_back({u1, 0.0, 0.0, 0.0, 0.0});
    } else {
      integrate_segment(rhs, u0, u1, y, tol, seg.knots);
      for (std::size_t k = 0; k + 1 < seg.knots.size(); ++k) {
        const auto& a = seg.knots[k];
        const auto& b = seg.knots[k + 1];
        const double h = b.u - a.u;
        if (h <= 0.0) continue;
        const double um = a.u + 0.5 * h;
        const State ym{hermite(0.5, h, a.w, a.dw, b.w, b.dw),
                       hermite(0.5, h, a.log_r, a.dlog_r, b.log_r, b.dlog_r)};
        const double slope = hermite_slope(0.5, h, a.w, a.dw, b.w, b.dw);
        const double f = rhs(um, ym)[0];
        const double r = rhs.radius(um);
        const double scale =
            rhs.dr_du(um) * (L * piece.beta(r) + ym[0] * ym[0] / piece.alpha(r));
        residual_num += std::abs(slope - f) * h;
        residual_den += std::abs(scale) * h;
      }
    }
    m.segments_.push_back(std::move(seg));
  }
  const double log_end = y[1];
  for (auto& seg : m.segments_)
    for (auto& k : seg.knots) k.log_r -= log_end;
  m.mu_ = y[0] / (m.outer_radius_ * m.outer_radius_);
  m.residual_ = residual_den > 0.0 ? residual_num / residual_den : 0.0;
  return m;
}

ModeSolution solve_mode(const RadialScenario& s, int n, double tol) {
  static constexpr std::array<double, 3> kOffsets{1e-4, 1e-5, 1e-6};
  std::array<double, 3> mus{};
  ModeSolution finest;
  for (std::size_t i = 0; i < kOffsets.size(); ++i) {
    ModeSolution m = solve_mode_at(s, n, tol, kOffsets[i]);
    mus[i] = m.mu();
    if (i + 1 == kOffsets.size()) finest = std::move(m);
  }
  // Aitken extrapolation in the start offset; skipped once the sequence has
  // settled to solver accuracy.
  const double d1 = mus[1] - mus[0];
  const double d2 = mus[2] - mus[1];
  const double settled = 10.0 * tol * std::max(std::abs(mus[2]), 1.0);
  if (std::abs(d2) > settled) {
    if (std::abs(d2) > std::abs(d1))
      fail(ErrorKind::ToleranceNotMet, "start-offset sequence is not converging");
    finest.mu_ = mus[2] - d2 * d2 / (d2 - d1);
  }
  return finest;
}

// ---------------------------------------------------------------------------

ModeSolution::Local ModeSolution::locate(double r) const {
  if (closed_form_) {
    const auto [lambda, s_out] = *closed_form_;
    const double s = r - r_core_;
    const double a = cf_alpha_(r);
    return {a * lambda / s, lambda * std::log(s / s_out), a, cf_beta_(r)};
  }
  const Segment* seg = &segments_.back();
  for (const auto& candidate : segments_) {
    if (r <= candidate.piece.to) {
      seg = &candidate;
      break;
    }
  }
  const double a = seg->piece.alpha(r);
  const double b = seg->piece.beta(r);
  const double u = coordinate(*seg, r);
  const auto& ks = seg->knots;
  if (u <= ks.front().u) {
    // Below the first knot: continue the Frobenius branch.
    const double s = r - seg->anchor;
    const double s0 = std::exp(ks.front().u);
    return {a * exponent_ / s, ks.front().log_r + exponent_ * std::log(s / s0), a, b};
  }
  if (u >= ks.back().u) return {ks.back().w, ks.back().log_r, a, b};
  auto it = std::upper_bound(ks.begin(), ks.end(), u,
                             [](double v, const Knot& k) { return v < k.u; });
  const Knot& k1 = *it;
  const Knot& k0 = *(it - 1);
  const double h = k1.u - k0.u;
  const double t = (u - k0.u) / h;
  return {hermite(t, h, k0.w, k0.dw, k1.w, k1.dw),
          hermite(t, h, k0.log_r, k0.dlog_r, k1.log_r, k1.dlog_r), a, b};
}

double ModeSolution::log_R(double r) const {
  if (r <= r_core_) return exponent_ > 0.0 ? -std::numeric_limits<double>::infinity() : 0.0;
  return locate(r).log_r;
}

double ModeSolution::R(double r) const { return std::exp(log_R(r)); }

double ModeSolution::R_prime(double r) const {
  const auto l = locate(r);
  return l.w * std::exp(l.log_r) / l.alpha;
}

double ModeSolution::flux(double r) const {
  const auto l = locate(r);
  return l.w * std::exp(l.log_r);
}

double ModeSolution::inner_limit() const {
  if (exponent_ > 0.0) return 0.0;
  return std::exp(log_R(r_core_ + 1e-12 * (outer_radius_ - r_core_)));
}

double ModeSolution::energy() const {
  const double L = static_cast<double>(degree_) * (degree_ + 1);
  const double scale = outer_radius_ * outer_radius_;
  if (degree_ == 0) return 0.0;
  if (closed_form_) {
    const auto [lambda, s_out] = *closed_form_;
    // alpha = A s^p, beta = B s^(p-2): closed-form integral of the energy density.
    const double p = std::log(cf_alpha_(r_core_ + s_out) / cf_alpha_(r_core_ + 0.5 * s_out)) /
                     std::log(2.0);
    const double A = cf_alpha_(r_core_ + s_out) / std::pow(s_out, p);
    const double B = cf_beta_(r_core_ + s_out) / std::pow(s_out, p - 2.0);
    return (A * lambda * lambda + L * B) * std::pow(s_out, p - 1.0) / (2.0 * lambda + p - 1.0) /
           scale;
  }
  static constexpr std::array<double, 4> gx{-0.8611363115940526, -0.3399810435848563,
                                            0.3399810435848563, 0.8611363115940526};
  static constexpr std::array<double, 4> gw{0.3478548451374538, 0.6521451548625461,
                                            0.6521451548625461, 0.3478548451374538};
  double total = 0.0;
  for (std::size_t si = 0; si < segments_.size(); ++si) {
    const Segment& seg = segments_[si];
    const ModeRhs rhs{seg.piece, seg.log_coordinate, seg.anchor, L};
    if (si == 0) {
      // Tail below the first knot along the Frobenius branch R ~ s^lambda.
      const auto& k0 = seg.knots.front();
      const double s0 = std::exp(k0.u);
      const auto law = inner_law(seg.piece);
      const double p = law.alpha.exponent;
      const double a = law.alpha.coefficient, b = law.beta.coefficient;
      total += std::exp(2.0 * k0.log_r) * (a * exponent_ * exponent_ + L * b) *
               std::pow(s0, p - 1.0) / (2.0 * exponent_ + p - 1.0);
    }
    for (std::size_t k = 0; k + 1 < seg.knots.size(); ++k) {
      const Knot& a = seg.knots[k];
      const Knot& b = seg.knots[k + 1];
      const double h = b.u - a.u;
      if (h <= 0.0) continue;
      // Sub-intervals keep the exponential growth of R^2 resolved by the rule.
      const double growth = 2.0 * std::max(std::abs(a.dlog_r), std::abs(b.dlog_r)) + 1.0;
      const int parts = static_cast<int>(std::ceil(2.0 * growth * h));
      const double hs = h / parts;
      for (int j = 0; j < parts; ++j) {
        for (std::size_t q = 0; q < gx.size(); ++q) {
          const double t = (j + 0.5 * (gx[q] + 1.0)) / parts;
          const double u = a.u + t * h;
          const double w = hermite(t, h, a.w, a.dw, b.w, b.dw);
          const double lr = hermite(t, h, a.log_r, a.dlog_r, b.log_r, b.dlog_r);
          const double r = rhs.radius(u);
          const double density = rhs.dr_du(u) * (w * w / seg.piece.alpha(r) + L * seg.piece.beta(r)) *
                                 std::exp(2 * lr);
          total += 0.5 * hs * gw[q] * density;
        }
      }
    }
  }
  return total / scale;
}

// ---------------------------------------------------------------------------

std::optional<PowerLawFamily> recognize_power_law(const RadialScenario& s) {
  if (s.pieces().size() != 1 || s.inner().kind == InnerKind::MatchedInterior) return std::nullopt;
  const RadialPiece& p = s.pieces().front();
  const double rc = p.from, len = p.to - p.from;
  PowerLaw alpha_law;
  try {
    alpha_law = leading_power_law(p.alpha, rc, len);
  } catch (const Error&) {
    return std::nullopt;
  }
  const double e = alpha_law.exponent;
  const double A = p.alpha(p.to) / std::pow(len, e);
  const double B = p.beta(p.to) / std::pow(len, e - 2.0);
  for (int k = 1; k <= 16; ++k) {
    const double sk = len * std::pow(1e-3, static_cast<double>(16 - k) / 15.0);
    const double ak = p.alpha(rc + sk) / std::pow(sk, e);
    const double bk = p.beta(rc + sk) / std::pow(sk, e - 2.0);
    if (std::abs(ak - A) > 1e-12 * std::abs(A) || std::abs(bk - B) > 1e-12 * std::abs(B))
      return std::nullopt;
  }
  return PowerLawFamily{A, B, e};
}

ModeSolution closed_form_mode(const RadialScenario& s, int n) {
  if (n < 0) fail(ErrorKind::InvalidArgument, "degree must be >= 0");
  const auto family = recognize_power_law(s);
  if (!family) fail(ErrorKind::InvalidArgument, "scenario is not a recognized power-law family");
  const double L = static_cast<double>(n) * (n + 1);
  const double p = family->exponent;
  const double disc = (p - 1.0) * (p - 1.0) + 4.0 * L * family->beta_coefficient /
                                                  family->alpha_coefficient;
  const double lambda = n == 0 ? 0.0 : 0.5 * (-(p - 1.0) + std::sqrt(disc));
  ModeSolution m;
  m.degree_ = n;
  m.exponent_ = lambda;
  m.r_core_ = s.r_core();
  m.outer_radius_ = s.outer_radius();
  const double s_out = m.outer_radius_ - m.r_core_;
  m.closed_form_ = std::make_pair(lambda, s_out);
  m.cf_alpha_ = s.pieces().front().alpha;
  m.cf_beta_ = s.pieces().front().beta;
  m.mu_ = s.pieces().front().alpha(m.outer_radius_) * lambda / s_out /
          (m.outer_radius_ * m.outer_radius_);
  return m;
}

double fitted_exponent(const ModeSolution& m, double s_lo, double s_hi, int points) {
  std::vector<double> xs, ys;
  for (int k = 0; k < points; ++k) {
    const double s = s_lo * std::pow(s_hi / s_lo, static_cast<double>(k) / (points - 1));
    xs.push_back(s);
    ys.push_back(m.log_R(m.r_core() + s));
  }
  // Fit log R directly: R itself may underflow for large exponents.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double lx = std::log(xs[i]);
    sx += lx;
    sy += ys[i];
    sxx += lx * lx;
    sxy += lx * ys[i];
  }
  const double n = static_cast<double>(xs.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::vector<std::pair<double, double>> flux_decay_profile(const ModeSolution& m,
                                                          const std::vector<double>& radii) {
  std::vector<std::pair<double, double>> out;
  out.reserve(radii.size());
  for (double r : radii) out.emplace_back(r, m.flux(r));
  return out;
}

// ---------------------------------------------------------------------------

DtNSpectrum dtn_spectrum(const RadialScenario& s, int n_max, double tol, SpectrumMethod method,
                         unsigned threads) {
  if (n_max < 0) fail(ErrorKind::InvalidArgument, "n_max must be >= 0");
  check_tol(tol);
  bool closed = false;
  if (method != SpectrumMethod::Numeric) {
    closed = recognize_power_law(s).has_value();
    if (method == SpectrumMethod::ClosedForm && !closed)
      fail(ErrorKind::InvalidArgument, "scenario is not a recognized power-law family");
  }
  DtNSpectrum out;
  out.solver_tol = tol;
  out.method = closed ? "closed_form" : "numeric";
  out.mu.assign(static_cast<std::size_t>(n_max) + 1, 0.0);
  parallel_for(out.mu.size(), threads, [&](std::size_t n) {
    const int deg = static_cast<int>(n);
    out.mu[n] = closed ? closed_form_mode(s, deg).mu() : solve_mode(s, deg, tol).mu();
  });
  return out;
}

SpectrumComparison compare_spectra(const DtNSpectrum& a, const DtNSpectrum& b, double tol) {
  if (a.mu.size() != b.mu.size())
    fail(ErrorKind::DegreeMismatch, "spectra cover different degree ranges");
  SpectrumComparison c;
  c.tolerance = tol;
  for (std::size_t n = 0; n < a.mu.size(); ++n) {
    const double d = std::abs(a.mu[n] - b.mu[n]);
    const double ref = std::abs(b.mu[n]);
    const double rel = ref > 0.0 ? d / ref : d;
    c.abs_diff.push_back(d);
    c.rel_diff.push_back(rel);
    if (n >= 1) c.max_rel_diff = std::max(c.max_rel_diff, rel);
  }
  c.equal = c.max_rel_diff <= tol;
  return c;
}

DtNSpectrum near_cloak_spectrum(double epsilon, const RadialFunction& interior_alpha,
                                const RadialFunction& interior_beta, int n_max, double tol,
                                unsigned threads) {
  return dtn_spectrum(near_cloak_scenario(epsilon, interior_alpha, interior_beta), n_max, tol,
                      SpectrumMethod::Numeric, threads);
}

InvisibilityReport interior_invisibility_test(const RadialScenario& s,
                                              const std::vector<double>& fills,
                                              const std::vector<double>& deltas, int n_max,
                                              double tol, unsigned threads) {
  if (fills.empty() || deltas.empty())
    fail(ErrorKind::InvalidArgument, "need at least one fill and one delta");
  if (n_max < 1) fail(ErrorKind::InvalidArgument, "n_max must be >= 1");
  InvisibilityReport rep;
  rep.fills = fills;
  rep.n_max = n_max;
  for (double delta : deltas) {
    InvisibilityReport::Row row;
    row.delta = delta;
    row.mu.assign(fills.size(), std::vector<double>(static_cast<std::size_t>(n_max), 0.0));
    std::vector<RadialScenario> truncated;
    for (double c : fills) truncated.push_back(truncated_with_fill(s, delta, isotropic_fill(c)));
    const std::size_t jobs = fills.size() * static_cast<std::size_t>(n_max);
    parallel_for(jobs, threads, [&](std::size_t job) {
      const std::size_t f = job / n_max, d = job % n_max;
      row.mu[f][d] = solve_mode(truncated[f], static_cast<int>(d) + 1, tol).mu();
    });
    for (int d = 0; d < n_max; ++d) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (const auto& per_fill : row.mu) {
        lo = std::min(lo, per_fill[d]);
        hi = std::max(hi, per_fill[d]);
      }
      row.spread.push_back(hi - lo);
    }
    rep.rows.push_back(std::move(row));
  }
  rep.monotone = true;
  for (std::size_t i = 0; i + 1 < rep.rows.size(); ++i)
    if (!(rep.rows[i + 1].spread[0] < rep.rows[i].spread[0])) rep.monotone = false;
  return rep;
}

}  // namespace cloak
