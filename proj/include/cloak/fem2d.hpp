#pragma once

// P1 finite elements for div(sigma grad u) = 0 on a disk and the discrete
// Dirichlet-to-Neumann map as the boundary Schur complement of the
// stiffness matrix.

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "cloak/tensor_core.hpp"
#include "cloak/transform.hpp"

namespace cloak {

struct Mesh {
  std::vector<Eigen::Vector2d> nodes;
  std::vector<std::array<int, 3>> triangles;  // counterclockwise
  std::vector<int> boundary;                  // closed loop, counterclockwise
  double h = 0.0;                             // max edge length
  std::string id;
};

/// Concentric rings: ring k (1..n_rings) at radius R k / n_rings carries 6k
/// nodes, plus a center node. h is about 1.73 R / n_rings.
Mesh build_disk_mesh(int n_rings, double radius = 1.0);

struct MeshCheck {
  double min_signed_area = 0.0;
  double max_boundary_radius_error = 0.0;  // relative to radius
  bool boundary_is_single_loop = false;
  bool boundary_edges_unique = false;  // each boundary edge in exactly one triangle
  bool valid = false;
};
MeshCheck check_mesh(const Mesh& mesh, double radius);
double mesh_area(const Mesh& mesh);

/// Text format: "nodes N triangles T boundary B", then N lines "x y", T lines
/// "i j k" and B lines with one boundary node index each.
void write_mesh(std::ostream& out, const Mesh& mesh);
Mesh read_mesh(std::istream& in);

// ---------------------------------------------------------------------------

enum class Quadrature { Centroid = 1, ThreePoint = 3 };

/// Global stiffness matrix, K_e = area B^T sigma_avg B per element. sigma
/// must be a 2D Cartesian field; throws NonPDTensor on a negative eigenvalue.
Eigen::SparseMatrix<double> assemble(const SymmetricTensorField& sigma, const Mesh& mesh,
                                     Quadrature quad = Quadrature::ThreePoint,
                                     unsigned threads = 1);

/// Nodal solution with u = f on mesh.boundary (f indexed like the loop).
Eigen::VectorXd solve_dirichlet(const Eigen::SparseMatrix<double>& K, const Mesh& mesh,
                                const Eigen::VectorXd& f);

struct DiscreteDtN {
  Eigen::MatrixXd matrix;          // n_b x n_b
  Eigen::MatrixXd mass_boundary;   // P1 mass matrix of the boundary loop
  std::vector<double> angles;      // polar angle of each boundary node
  std::string mesh_id;
};

/// K_bb - K_bi K_ii^-1 K_ib; throws SingularSystem when K_ii cannot be factored.
DiscreteDtN discrete_dtn(const Eigen::SparseMatrix<double>& K, const Mesh& mesh);

void write_dtn_csv(std::ostream& out, const DiscreteDtN& dtn);

/// f^T Lambda f / f^T M_b f.
double rayleigh_quotient(const DiscreteDtN& dtn, const Eigen::VectorXd& f);
/// Boundary samples of cos(k th) (k > 0) or sin(|k| th) (k < 0).
Eigen::VectorXd boundary_fourier(const DiscreteDtN& dtn, int k);

/// Galerkin projection of Lambda onto cos/sin of degrees 1..modes,
/// orthonormalized in the boundary mass inner product (2 modes x 2 modes).
Eigen::MatrixXd fourier_projection(const DiscreteDtN& dtn, int modes);

/// ||P_a - P_b||_F / ||P_b||_F for the projections above.
double projected_difference(const DiscreteDtN& a, const DiscreteDtN& b, int modes);
/// ||M^-1/2 (A - B) M^-1/2||_F / ||M^-1/2 B M^-1/2||_F on the full matrices.
double mass_weighted_difference(const DiscreteDtN& a, const DiscreteDtN& b);

// ---------------------------------------------------------------------------

struct InvarianceRow {
  int rings = 0;
  double h = 0.0;
  int nodes = 0;
  int boundary_nodes = 0;
  double projected_error = 0.0;
  double full_error = 0.0;
};

struct InvarianceReport {
  int modes = 0;
  std::vector<InvarianceRow> rows;
  std::vector<double> ratios;  // projected_error[k+1] / projected_error[k]
  std::vector<double> orders;  // observed orders of the projected error
  double fitted_order = 0.0;   // log-log slope over all rows
};

/// Assembles sigma and push_forward(F, sigma) on the same disk meshes and
/// compares their DtN maps. F must fix the disk boundary.
InvarianceReport invariance_experiment(const SymmetricTensorField& sigma,
                                       const Diffeomorphism& F, const std::vector<int>& rings,
                                       double radius = 1.0, int modes = 4, unsigned threads = 1);

struct RayleighRow {
  int rings = 0;
  double h = 0.0;
  std::vector<double> quotients;  // per k
  std::vector<double> errors;     // |q - k / R|
};

struct RayleighReport {
  std::vector<int> ks;
  std::vector<RayleighRow> rows;
  std::vector<double> fitted_orders;  // per k, log-log slope of error against h
};

/// sigma = I on the disk: Rayleigh quotients of cos(k th) against k / R.
RayleighReport rayleigh_convergence(const std::vector<int>& ks, const std::vector<int>& rings,
                                    double radius = 1.0, unsigned threads = 1);

}  // namespace cloak
