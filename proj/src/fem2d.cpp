#include "cloak/fem2d.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include "cloak/errors.hpp"
#include "cloak/numerics.hpp"
#include "cloak/parallel.hpp"

namespace cloak {

namespace {

double signed_area(const Mesh& m, const std::array<int, 3>& t) {
  const Eigen::Vector2d a = m.nodes[t[1]] - m.nodes[t[0]];
  const Eigen::Vector2d b = m.nodes[t[2]] - m.nodes[t[0]];
  return 0.5 * (a.x() * b.y() - a.y() * b.x());
}

double max_edge(const Mesh& m) {
  double h = 0.0;
  for (const auto& t : m.triangles)
    for (int e = 0; e < 3; ++e) h = std::max(h, (m.nodes[t[e]] - m.nodes[t[(e + 1) % 3]]).norm());
  return h;
}

}  // namespace

Mesh build_disk_mesh(int n_rings, double radius) {
  if (n_rings < 2) fail(ErrorKind::InvalidArgument, "n_rings must be >= 2");
  if (!(radius > 0.0)) fail(ErrorKind::InvalidArgument, "radius must be positive");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  Mesh m;
  m.nodes.emplace_back(0.0, 0.0);
  std::vector<int> ring_start{0};
  for (int k = 1; k <= n_rings; ++k) {
    ring_start.push_back(static_cast<int>(m.nodes.size()));
    const double r = radius * k / n_rings;
    const int count = 6 * k;
    for (int j = 0; j < count; ++j) {
      const double th = two_pi * j / count;
      m.nodes.emplace_back(r * std::cos(th), r * std::sin(th));
    }
  }
  for (int j = 0; j < 6; ++j) m.triangles.push_back({0, 1 + j, 1 + (j + 1) % 6});
  for (int k = 2; k <= n_rings; ++k) {
    const int n_in = 6 * (k - 1), n_out = 6 * k;
    const int in0 = ring_start[k - 1], out0 = ring_start[k];
    auto in = [&](int i) { return in0 + i % n_in; };
    auto out = [&](int j) { return out0 + j % n_out; };
    // Merge walk around the two rings by angle.
    int i = 0, j = 0;
    while (i < n_in || j < n_out) {
      const double next_in = static_cast<double>(i + 1) / n_in;
      const double next_out = static_cast<double>(j + 1) / n_out;
      std::array<int, 3> t;
      if (i >= n_in || (j < n_out && next_out <= next_in)) {
        t = {in(i), out(j), out(j + 1)};
        ++j;
      } else {
        t = {in(i), out(j), in(i + 1)};
        ++i;
      }
      if (signed_area(m, t) < 0.0) std::swap(t[1], t[2]);
      m.triangles.push_back(t);
    }
  }
  for (int j = 0; j < 6 * n_rings; ++j) m.boundary.push_back(ring_start[n_rings] + j);
  // Snap the boundary exactly onto the circle (cos/sin rounding).
  for (int b : m.boundary) m.nodes[b] *= radius / m.nodes[b].norm();
  m.h = max_edge(m);
  std::ostringstream id;
  id << "disk-r" << radius << "-n" << n_rings;
  m.id = id.str();
  return m;
}

double mesh_area(const Mesh& mesh) {
  std::vector<double> a;
  a.reserve(mesh.triangles.size());
  for (const auto& t : mesh.triangles) a.push_back(signed_area(mesh, t));
  return pairwise_sum(a);
}

MeshCheck check_mesh(const Mesh& mesh, double radius) {
  MeshCheck c;
  c.min_signed_area = std::numeric_limits<double>::infinity();
  for (const auto& t : mesh.triangles) c.min_signed_area = std::min(c.min_signed_area, signed_area(mesh, t));
  for (int b : mesh.boundary)
    c.max_boundary_radius_error =
        std::max(c.max_boundary_radius_error, std::abs(mesh.nodes[b].norm() - radius) / radius);

  std::map<std::pair<int, int>, int> edge_count;
  for (const auto& t : mesh.triangles)
    for (int e = 0; e < 3; ++e) {
      const int a = t[e], b = t[(e + 1) % 3];
      ++edge_count[{std::min(a, b), std::max(a, b)}];
    }
  std::vector<std::pair<int, int>> free_edges;
  for (const auto& [e, n] : edge_count)
    if (n == 1) free_edges.push_back(e);

  const std::size_t nb = mesh.boundary.size();
  c.boundary_edges_unique = nb >= 3;
  for (std::size_t i = 0; i < nb && c.boundary_edges_unique; ++i) {
    const int a = mesh.boundary[i], b = mesh.boundary[(i + 1) % nb];
    auto it = edge_count.find({std::min(a, b), std::max(a, b)});
    if (it == edge_count.end() || it->second != 1) c.boundary_edges_unique = false;
  }
  std::vector<int> sorted = mesh.boundary;
  std::sort(sorted.begin(), sorted.end());
  const bool distinct = std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end();
  c.boundary_is_single_loop = distinct && free_edges.size() == nb && c.boundary_edges_unique;
  c.valid = c.min_signed_area > 0.0 && c.max_boundary_radius_error <= 1e-12 &&
            c.boundary_is_single_loop && c.boundary_edges_unique;
  return c;
}

void write_mesh(std::ostream& out, const Mesh& mesh) {
  out << "nodes " << mesh.nodes.size() << " triangles " << mesh.triangles.size() << " boundary "
      << mesh.boundary.size() << "\n";
  out.precision(17);
  for (const auto& p : mesh.nodes) out << p.x() << " " << p.y() << "\n";
  for (const auto& t : mesh.triangles) out << t[0] << " " << t[1] << " " << t[2] << "\n";
  for (int b : mesh.boundary) out << b << "\n";
  if (!out) fail(ErrorKind::IoError, "failed to write mesh");
}

Mesh read_mesh(std::istream& in) {
  std::string w1, w2, w3;
  long n = 0, t = 0, b = 0;
  if (!(in >> w1 >> n >> w2 >> t >> w3 >> b) || w1 != "nodes" || w2 != "triangles" ||
      w3 != "boundary" || n < 3 || t < 1 || b < 3)
    fail(ErrorKind::ParseError, "mesh header must read 'nodes N triangles T boundary B'");
  Mesh m;
  m.nodes.resize(n);
  for (auto& p : m.nodes)
    if (!(in >> p.x() >> p.y())) fail(ErrorKind::ParseError, "truncated node list");
  m.triangles.resize(t);
  for (auto& tri : m.triangles)
    for (int& v : tri)
      if (!(in >> v) || v < 0 || v >= n) fail(ErrorKind::ParseError, "bad triangle index");
  m.boundary.resize(b);
  for (int& v : m.boundary)
    if (!(in >> v) || v < 0 || v >= n) fail(ErrorKind::ParseError, "bad boundary index");
  m.h = max_edge(m);
  std::ostringstream id;
  id << "imported-n" << n << "-t" << t;
  m.id = id.str();
  return m;
}

// ---------------------------------------------------------------------------

Eigen::SparseMatrix<double> assemble(const SymmetricTensorField& sigma, const Mesh& mesh,
                                     Quadrature quad, unsigned threads) {
  if (sigma.dim() != 2 || sigma.coords() != Coords::Cartesian)
    fail(ErrorKind::InvalidArgument, "assembly needs a 2D Cartesian conductivity");
  static const std::array<Eigen::Vector3d, 3> three_point{
      Eigen::Vector3d(2.0 / 3, 1.0 / 6, 1.0 / 6), Eigen::Vector3d(1.0 / 6, 2.0 / 3, 1.0 / 6),
      Eigen::Vector3d(1.0 / 6, 1.0 / 6, 2.0 / 3)};
  static const std::array<Eigen::Vector3d, 1> centroid{Eigen::Vector3d::Constant(1.0 / 3)};

  std::vector<Eigen::Matrix3d> element(mesh.triangles.size());
  parallel_for(mesh.triangles.size(), threads, [&](std::size_t e) {
    const auto& t = mesh.triangles[e];
    const Eigen::Vector2d& p0 = mesh.nodes[t[0]];
    const Eigen::Vector2d& p1 = mesh.nodes[t[1]];
    const Eigen::Vector2d& p2 = mesh.nodes[t[2]];
    const double area = signed_area(mesh, t);
    if (!(area > 0.0)) fail(ErrorKind::InvalidArgument, "triangle with non-positive area");
    Eigen::Matrix<double, 2, 3> B;
    B << p1.y() - p2.y(), p2.y() - p0.y(), p0.y() - p1.y(),  //
        p2.x() - p1.x(), p0.x() - p2.x(), p1.x() - p0.x();
    B /= 2.0 * area;

    Eigen::Matrix2d avg = Eigen::Matrix2d::Zero();
    auto accumulate = [&](const auto& rule) {
      for (const auto& bary : rule) {
        Vec x = bary[0] * p0 + bary[1] * p1 + bary[2] * p2;
        const Mat s = sigma(x);
        const Eigen::Matrix2d sym = 0.5 * (s + s.transpose());
        const double half_tr = 0.5 * sym.trace();
        const double rad = std::hypot(0.5 * (sym(0, 0) - sym(1, 1)), sym(0, 1));
        if (half_tr - rad < 0.0)
          fail(ErrorKind::NonPDTensor, "conductivity has a negative eigenvalue at a quadrature point");
        avg += sym / static_cast<double>(rule.size());
      }
    };
    if (quad == Quadrature::ThreePoint)
      accumulate(three_point);
    else
      accumulate(centroid);
    element[e] = area * B.transpose() * avg * B;
  });

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(9 * mesh.triangles.size());
  for (std::size_t e = 0; e < mesh.triangles.size(); ++e)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        trip.emplace_back(mesh.triangles[e][a], mesh.triangles[e][b], element[e](a, b));
  const int n = static_cast<int>(mesh.nodes.size());
  Eigen::SparseMatrix<double> K(n, n);
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

namespace {

struct Partition {
  std::vector<int> interior;       // global indices
  std::vector<int> local;          // global -> interior slot, or -1
  Eigen::SparseMatrix<double> Kii, Kib;
};

Partition partition(const Eigen::SparseMatrix<double>& K, const Mesh& mesh) {
  const int n = static_cast<int>(mesh.nodes.size());
  if (K.rows() != n || K.cols() != n)
    fail(ErrorKind::InvalidArgument, "stiffness matrix does not match the mesh");
  Partition p;
  p.local.assign(n, -1);
  std::vector<int> bslot(n, -1);
  for (std::size_t i = 0; i < mesh.boundary.size(); ++i) bslot[mesh.boundary[i]] = static_cast<int>(i);
  for (int i = 0; i < n; ++i)
    if (bslot[i] < 0) {
      p.local[i] = static_cast<int>(p.interior.size());
      p.interior.push_back(i);
    }
  const int ni = static_cast<int>(p.interior.size());
  const int nb = static_cast<int>(mesh.boundary.size());
  std::vector<Eigen::Triplet<double>> tii, tib;
  for (int col = 0; col < K.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(K, col); it; ++it) {
      const int r = static_cast<int>(it.row()), c = static_cast<int>(it.col());
      if (p.local[r] < 0) continue;
      if (p.local[c] >= 0)
        tii.emplace_back(p.local[r], p.local[c], it.value());
      else
        tib.emplace_back(p.local[r], bslot[c], it.value());
    }
  p.Kii.resize(ni, ni);
  p.Kii.setFromTriplets(tii.begin(), tii.end());
  p.Kib.resize(ni, nb);
  p.Kib.setFromTriplets(tib.begin(), tib.end());
  return p;
}

}  // namespace

Eigen::VectorXd solve_dirichlet(const Eigen::SparseMatrix<double>& K, const Mesh& mesh,
                                const Eigen::VectorXd& f) {
  if (f.size() != static_cast<Eigen::Index>(mesh.boundary.size()))
    fail(ErrorKind::InvalidArgument, "boundary data size does not match the boundary loop");
  Partition p = partition(K, mesh);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(p.Kii);
  if (ldlt.info() != Eigen::Success) fail(ErrorKind::SingularSystem, "interior stiffness is singular");
  const Eigen::VectorXd ui = ldlt.solve(-(p.Kib * f));
  if (ldlt.info() != Eigen::Success || !ui.allFinite())
    fail(ErrorKind::SingularSystem, "interior solve failed");
  Eigen::VectorXd u(mesh.nodes.size());
  for (std::size_t i = 0; i < p.interior.size(); ++i) u[p.interior[i]] = ui[i];
  for (std::size_t i = 0; i < mesh.boundary.size(); ++i) u[mesh.boundary[i]] = f[i];
  return u;
}

DiscreteDtN discrete_dtn(const Eigen::SparseMatrix<double>& K, const Mesh& mesh) {
  Partition p = partition(K, mesh);
  const int nb = static_cast<int>(mesh.boundary.size());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(p.Kii);
  if (ldlt.info() != Eigen::Success) fail(ErrorKind::SingularSystem, "interior stiffness is singular");
  const Eigen::MatrixXd Kib = Eigen::MatrixXd(p.Kib);
  const Eigen::MatrixXd X = ldlt.solve(Kib);
  if (ldlt.info() != Eigen::Success || !X.allFinite())
    fail(ErrorKind::SingularSystem, "interior solve failed");

  Eigen::MatrixXd Kbb = Eigen::MatrixXd::Zero(nb, nb);
  std::vector<int> bslot(mesh.nodes.size(), -1);
  for (int i = 0; i < nb; ++i) bslot[mesh.boundary[i]] = i;
  for (int col = 0; col < K.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(K, col); it; ++it)
      if (bslot[it.row()] >= 0 && bslot[it.col()] >= 0)
        Kbb(bslot[it.row()], bslot[it.col()]) += it.value();

  DiscreteDtN d;
  d.matrix = Kbb - Kib.transpose() * X;
  d.mass_boundary = Eigen::MatrixXd::Zero(nb, nb);
  for (int i = 0; i < nb; ++i) {
    const int j = (i + 1) % nb;
    const double len = (mesh.nodes[mesh.boundary[i]] - mesh.nodes[mesh.boundary[j]]).norm();
    d.mass_boundary(i, i) += len / 3.0;
    d.mass_boundary(j, j) += len / 3.0;
    d.mass_boundary(i, j) += len / 6.0;
    d.mass_boundary(j, i) += len / 6.0;
  }
  for (int b : mesh.boundary) d.angles.push_back(std::atan2(mesh.nodes[b].y(), mesh.nodes[b].x()));
  d.mesh_id = mesh.id;
  return d;
}

void write_dtn_csv(std::ostream& out, const DiscreteDtN& dtn) {
  out.precision(17);
  for (Eigen::Index i = 0; i < dtn.matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < dtn.matrix.cols(); ++j) {
      if (j) out << ",";
      out << dtn.matrix(i, j);
    }
    out << "\n";
  }
  if (!out) fail(ErrorKind::IoError, "failed to write DtN matrix");
}

double rayleigh_quotient(const DiscreteDtN& dtn, const Eigen::VectorXd& f) {
  const double den = f.dot(dtn.mass_boundary * f);
  if (!(den > 0.0)) fail(ErrorKind::InvalidArgument, "boundary data must be nonzero");
  return f.dot(dtn.matrix * f) / den;
}

Eigen::VectorXd boundary_fourier(const DiscreteDtN& dtn, int k) {
  Eigen::VectorXd v(dtn.angles.size());
  for (std::size_t i = 0; i < dtn.angles.size(); ++i)
    v[i] = k >= 0 ? std::cos(k * dtn.angles[i]) : std::sin(-k * dtn.angles[i]);
  return v;
}

Eigen::MatrixXd fourier_projection(const DiscreteDtN& dtn, int modes) {
  if (modes < 1) fail(ErrorKind::InvalidArgument, "modes must be >= 1");
  if (2 * modes + 1 > static_cast<int>(dtn.angles.size()))
    fail(ErrorKind::InvalidArgument, "too many modes for the boundary resolution");
  Eigen::MatrixXd phi(dtn.angles.size(), 2 * modes);
  for (int k = 1; k <= modes; ++k) {
    phi.col(2 * k - 2) = boundary_fourier(dtn, k);
    phi.col(2 * k - 1) = boundary_fourier(dtn, -k);
  }
  const Eigen::MatrixXd gram = phi.transpose() * dtn.mass_boundary * phi;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) fail(ErrorKind::SingularSystem, "Fourier Gram matrix is singular");
  // Orthonormal basis Q = phi L^-T.
  const Eigen::MatrixXd q =
      llt.matrixU().transpose().solve(phi.transpose()).transpose();
  return q.transpose() * dtn.matrix * q;
}

double projected_difference(const DiscreteDtN& a, const DiscreteDtN& b, int modes) {
  if (a.matrix.rows() != b.matrix.rows())
    fail(ErrorKind::InvalidArgument, "DtN matrices live on different meshes");
  const Eigen::MatrixXd pa = fourier_projection(a, modes);
  const Eigen::MatrixXd pb = fourier_projection(b, modes);
  return (pa - pb).norm() / pb.norm();
}

double mass_weighted_difference(const DiscreteDtN& a, const DiscreteDtN& b) {
  if (a.matrix.rows() != b.matrix.rows())
    fail(ErrorKind::InvalidArgument, "DtN matrices live on different meshes");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b.mass_boundary);
  const Eigen::MatrixXd w =
      es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
      es.eigenvectors().transpose();
  return (w * (a.matrix - b.matrix) * w).norm() / (w * b.matrix * w).norm();
}

// ---------------------------------------------------------------------------

InvarianceReport invariance_experiment(const SymmetricTensorField& sigma, const Diffeomorphism& F,
                                       const std::vector<int>& rings, double radius, int modes,
                                       unsigned threads) {
  if (rings.empty()) fail(ErrorKind::InvalidArgument, "need at least one mesh");
  if (F.dim() != 2) fail(ErrorKind::InvalidArgument, "invariance experiment is 2D");
  if (!F.fixes_boundary()) fail(ErrorKind::InvalidArgument, "map must fix the disk boundary");
  const SymmetricTensorField pushed = push_forward(F, sigma);
  InvarianceReport rep;
  rep.modes = modes;
  for (int n : rings) {
    const Mesh mesh = build_disk_mesh(n, radius);
    const DiscreteDtN a = discrete_dtn(assemble(pushed, mesh, Quadrature::ThreePoint, threads), mesh);
    const DiscreteDtN b = discrete_dtn(assemble(sigma, mesh, Quadrature::ThreePoint, threads), mesh);
    InvarianceRow row;
    row.rings = n;
    row.h = mesh.h;
    row.nodes = static_cast<int>(mesh.nodes.size());
    row.boundary_nodes = static_cast<int>(mesh.boundary.size());
    row.projected_error = projected_difference(a, b, modes);
    row.full_error = mass_weighted_difference(a, b);
    rep.rows.push_back(row);
  }
  std::vector<double> hs, errs;
  for (const auto& r : rep.rows) {
    hs.push_back(r.h);
    errs.push_back(r.projected_error);
  }
  for (std::size_t i = 0; i + 1 < errs.size(); ++i) rep.ratios.push_back(errs[i + 1] / errs[i]);
  const bool positive = std::all_of(errs.begin(), errs.end(), [](double e) { return e > 0.0; });
  if (positive && errs.size() >= 2) {
    rep.orders = observed_orders(hs, errs);
    rep.fitted_order = loglog_slope(hs, errs);
  }
  return rep;
}

RayleighReport rayleigh_convergence(const std::vector<int>& ks, const std::vector<int>& rings,
                                    double radius, unsigned threads) {
  RayleighReport rep;
  rep.ks = ks;
  const auto identity = constant_field(Mat::Identity(2, 2));
  for (int n : rings) {
    const Mesh mesh = build_disk_mesh(n, radius);
    const DiscreteDtN d = discrete_dtn(assemble(identity, mesh, Quadrature::ThreePoint, threads), mesh);
    RayleighRow row;
    row.rings = n;
    row.h = mesh.h;
    for (int k : ks) {
      const double q = rayleigh_quotient(d, boundary_fourier(d, k));
      row.quotients.push_back(q);
      row.errors.push_back(std::abs(q - k / radius));
    }
    rep.rows.push_back(std::move(row));
  }
  for (std::size_t i = 0; i < ks.size(); ++i) {
    std::vector<double> hs, es;
    for (const auto& r : rep.rows) {
      hs.push_back(r.h);
      es.push_back(r.errors[i]);
    }
    rep.fitted_orders.push_back(hs.size() >= 2 ? loglog_slope(hs, es) : 0.0);
  }
  return rep;
}

}  // namespace cloak
