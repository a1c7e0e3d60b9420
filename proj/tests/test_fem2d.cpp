#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "cloak/fem2d.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cloak;
using testutil::kind_of;

namespace {

SymmetricTensorField identity2() { return constant_field(Mat::Identity(2, 2)); }

Eigen::VectorXd boundary_values(const Mesh& m, auto f) {
  Eigen::VectorXd v(m.boundary.size());
  for (std::size_t i = 0; i < m.boundary.size(); ++i) v[i] = f(m.nodes[m.boundary[i]]);
  return v;
}

}  // namespace

TEST_CASE("mesh: structure and invariants") {
  for (int n : {2, 5, 11}) {
    const auto m = build_disk_mesh(n, 1.0);
    CHECK(m.nodes.size() == static_cast<std::size_t>(1 + 3 * n * (n + 1)));
    CHECK(m.boundary.size() == static_cast<std::size_t>(6 * n));
    const auto c = check_mesh(m, 1.0);
    CHECK(c.valid);
    CHECK(c.min_signed_area > 0.0);
    CHECK(c.max_boundary_radius_error <= 1e-15);
    CHECK(c.boundary_is_single_loop);
    CHECK(c.boundary_edges_unique);
  }
  CHECK(kind_of([] { build_disk_mesh(1); }) == ErrorKind::InvalidArgument);
  CHECK(kind_of([] { build_disk_mesh(4, 0.0); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("mesh: area converges to pi at second order and h halves") {
  std::vector<double> err;
  double prev_h = 0.0;
  for (int n : {8, 16, 32}) {
    const auto m = build_disk_mesh(n, 1.0);
    err.push_back(std::numbers::pi - mesh_area(m));
    CHECK(err.back() > 0.0);
    if (prev_h > 0.0) CHECK(m.h / prev_h == doctest::Approx(0.5).epsilon(0.05));
    prev_h = m.h;
  }
  CHECK(err[0] / err[1] == doctest::Approx(4.0).epsilon(0.05));
  CHECK(err[1] / err[2] == doctest::Approx(4.0).epsilon(0.05));
  CHECK(build_disk_mesh(88).h <= 0.02);
}

TEST_CASE("mesh: text round trip") {
  const auto m = build_disk_mesh(4, 1.5);
  std::stringstream ss;
  write_mesh(ss, m);
  const auto back = read_mesh(ss);
  REQUIRE(back.nodes.size() == m.nodes.size());
  for (std::size_t i = 0; i < m.nodes.size(); ++i) CHECK(back.nodes[i] == m.nodes[i]);
  CHECK(back.triangles == m.triangles);
  CHECK(back.boundary == m.boundary);
  std::stringstream bad("nodes 3 triangles 1 boundary 3\n0 0\n1 0\n0 1\n0 1 7\n");
  CHECK(kind_of([&] { read_mesh(bad); }) == ErrorKind::ParseError);
  std::stringstream junk("vertices 3");
  CHECK(kind_of([&] { read_mesh(junk); }) == ErrorKind::ParseError);
}

TEST_CASE("assembly: reference element") {
  Mesh m;
  m.nodes = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
  m.triangles = {{0, 1, 2}};
  m.boundary = {0, 1, 2};
  Eigen::Matrix3d expect;
  expect << 1.0, -0.5, -0.5, -0.5, 0.5, 0.0, -0.5, 0.0, 0.5;
  for (auto q : {Quadrature::Centroid, Quadrature::ThreePoint}) {
    const Eigen::MatrixXd k = Eigen::MatrixXd(assemble(identity2(), m, q));
    CHECK((k - expect).norm() <= 1e-15);
  }
  Mat s(2, 2);
  s << 2.0, 0.0, 0.0, 3.0;
  Eigen::Matrix3d expect_aniso;  // area B^T S B with B rows grad phi
  expect_aniso << 2.5, -1.0, -1.5, -1.0, 1.0, 0.0, -1.5, 0.0, 1.5;
  CHECK((Eigen::MatrixXd(assemble(constant_field(s), m)) - expect_aniso).norm() <= 1e-15);
}

TEST_CASE("assembly: symmetric with constants in the kernel") {
  const auto m = build_disk_mesh(6);
  const auto sigma = field_from_expressions(2, Coords::Cartesian, {{"1+x^2", "0.3*x*y"}, {"0.3*x*y", "2+y^2"}});
  const Eigen::MatrixXd k = Eigen::MatrixXd(assemble(sigma, m));
  CHECK((k - k.transpose()).norm() <= 1e-14 * k.norm());
  CHECK((k * Eigen::VectorXd::Ones(k.rows())).norm() <= 1e-13 * k.norm());
}

TEST_CASE("assembly: thread count does not change the matrix") {
  const auto m = build_disk_mesh(10);
  const auto sigma = field_from_expressions(2, Coords::Cartesian, {{"1+r^2", "0"}, {"0", "1"}});
  const Eigen::MatrixXd a = Eigen::MatrixXd(assemble(sigma, m, Quadrature::ThreePoint, 1));
  const Eigen::MatrixXd b = Eigen::MatrixXd(assemble(sigma, m, Quadrature::ThreePoint, 3));
  CHECK(a == b);
}

TEST_CASE("assembly: errors") {
  const auto m = build_disk_mesh(3);
  Mat neg(2, 2);
  neg << 1.0, 0.0, 0.0, -1.0;
  CHECK(kind_of([&] { assemble(constant_field(neg), m); }) == ErrorKind::NonPDTensor);
  CHECK(kind_of([&] { assemble(constant_field(Mat::Identity(3, 3)), m); }) ==
        ErrorKind::InvalidArgument);
}

TEST_CASE("dirichlet solve reproduces linear functions") {
  const auto m = build_disk_mesh(8);
  Mat s(2, 2);
  s << 2.0, 0.5, 0.5, 1.0;
  for (const auto& sigma : {identity2(), constant_field(s)}) {
    const auto k = assemble(sigma, m);
    const auto f = [](const Eigen::Vector2d& p) { return 0.3 + p.x() - 2.0 * p.y(); };
    const auto u = solve_dirichlet(k, m, boundary_values(m, f));
    double worst = 0.0;
    for (std::size_t i = 0; i < m.nodes.size(); ++i) worst = std::max(worst, std::abs(u[i] - f(m.nodes[i])));
    CHECK(worst <= 1e-12);
  }
  CHECK(kind_of([&] { solve_dirichlet(assemble(identity2(), m), m, Eigen::VectorXd::Zero(3)); }) ==
        ErrorKind::InvalidArgument);
}

TEST_CASE("discrete DtN: reciprocity, kernel, positivity, scaling, energy") {
  const auto m = build_disk_mesh(8);
  const auto sigma = field_from_expressions(2, Coords::Cartesian, {{"1+x^2", "0.2*x*y"}, {"0.2*x*y", "2"}});
  const auto k = assemble(sigma, m);
  const auto d = discrete_dtn(k, m);
  const auto& L = d.matrix;
  CHECK((L - L.transpose()).norm() <= 1e-10 * L.norm());
  CHECK((L * Eigen::VectorXd::Ones(L.rows())).norm() <= 1e-10 * L.norm());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (L + L.transpose()));
  CHECK(es.eigenvalues().minCoeff() >= -1e-10 * L.norm());

  const auto scaled = field_from_expressions(2, Coords::Cartesian,
                                             {{"3*(1+x^2)", "0.6*x*y"}, {"0.6*x*y", "6"}});
  const auto d3 = discrete_dtn(assemble(scaled, m), m);
  CHECK((d3.matrix - 3.0 * L).norm() <= 1e-12 * L.norm());

  const auto f = boundary_values(m, [](const Eigen::Vector2d& p) { return p.x() * p.y() + p.x(); });
  const auto u = solve_dirichlet(k, m, f);
  const double energy = u.dot(k * u);
  CHECK(f.dot(L * f) == doctest::Approx(energy).epsilon(1e-10));
  CHECK(d.mesh_id == m.id);
  CHECK(d.angles.size() == m.boundary.size());
}

TEST_CASE("discrete DtN: Fourier modes of the unit disk") {
  const auto m = build_disk_mesh(24);
  const auto d = discrete_dtn(assemble(identity2(), m), m);
  for (int kk = 1; kk <= 3; ++kk) {
    CHECK(rayleigh_quotient(d, boundary_fourier(d, kk)) == doctest::Approx(kk).epsilon(0.02));
    CHECK(rayleigh_quotient(d, boundary_fourier(d, -kk)) == doctest::Approx(kk).epsilon(0.02));
  }
  const Eigen::MatrixXd p = fourier_projection(d, 3);
  CHECK(p.rows() == 6);
  for (int i = 0; i < 6; ++i) CHECK(p(i, i) == doctest::Approx(1 + i / 2).epsilon(0.02));
  CHECK((p - p.transpose()).norm() <= 1e-10);
  CHECK(projected_difference(d, d, 3) == 0.0);
  CHECK(mass_weighted_difference(d, d) == 0.0);
  CHECK(kind_of([&] { fourier_projection(d, 0); }) == ErrorKind::InvalidArgument);
  CHECK(kind_of([&] { rayleigh_quotient(d, Eigen::VectorXd::Zero(d.matrix.rows())); }) ==
        ErrorKind::InvalidArgument);
  const auto other = discrete_dtn(assemble(identity2(), build_disk_mesh(12)), build_disk_mesh(12));
  CHECK(kind_of([&] { projected_difference(d, other, 2); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("discrete DtN: csv output") {
  const auto m = build_disk_mesh(2);
  const auto d = discrete_dtn(assemble(identity2(), m), m);
  std::stringstream ss;
  write_dtn_csv(ss, d);
  std::string line;
  int rows = 0;
  while (std::getline(ss, line)) ++rows;
  CHECK(rows >= static_cast<int>(m.boundary.size()));
}

TEST_CASE("invariance under boundary-fixing maps converges") {
  const auto tw = twist_map(Expression::parse("(1-r)^2"));
  const auto rep = invariance_experiment(identity2(), tw, {6, 12, 24}, 1.0, 4);
  REQUIRE(rep.rows.size() == 3);
  CHECK(rep.rows[1].projected_error < rep.rows[0].projected_error);
  CHECK(rep.rows[2].projected_error < rep.rows[1].projected_error);
  for (double r : rep.ratios) CHECK(r <= 0.5);
  CHECK(rep.fitted_order > 1.5);
  CHECK(kind_of([] {
          invariance_experiment(identity2(), scaling_map(2, 2.0, 1.0), {4}, 1.0, 2);
        }) == ErrorKind::InvalidArgument);
}

TEST_CASE("rayleigh quotients converge at second order") {
  const auto rep = rayleigh_convergence({1, 2, 3}, {6, 12, 24});
  REQUIRE(rep.fitted_orders.size() == 3);
  for (double o : rep.fitted_orders) CHECK(o >= 1.5);
  for (std::size_t k = 0; k < 3; ++k)
    CHECK(rep.rows.back().errors[k] < rep.rows.front().errors[k]);
}
