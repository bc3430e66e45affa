#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "orbit/grid.hpp"
#include "orbit/harmonics.hpp"

namespace orbit::extract3d {

inline int lm_index(int l, int m) { return l * l + l + m; }

// Complex spherical-harmonic/shell coefficients H_{lm}[q]. Block l is a
// (2l+1) x R matrix, row index m + l.
struct ShCoeffTable {
  int L_max = 0;
  int R = 0;
  std::vector<MatrixXcd> blocks;

  static ShCoeffTable zeros(int L_max, int R) {
    ShCoeffTable t;
    t.L_max = L_max;
    t.R = R;
    for (int l = 0; l <= L_max; ++l) t.blocks.emplace_back(MatrixXcd::Zero(2 * l + 1, R));
    return t;
  }
  MatrixXcd& at(int l) { return blocks[size_t(l)]; }
  const MatrixXcd& at(int l) const { return blocks[size_t(l)]; }
  cplx coeff(int l, int m, int q) const { return blocks[size_t(l)](m + l, q); }
  // max |H_{l,-m} - (-1)^m conj(H_{lm})| over the table
  double conjugation_defect() const;
  void hermitianize();
};

// Discretization of the SE(3) -> SO(3) extraction.
struct SphericalSpec3D {
  int L_max = 0;
  harmonics::ShellBasis shells;
  harmonics::SphereQuadrature sphere_quad;
  int N_r = 0;
  double delta = 0.0;
  MatrixXd translation_grid;       // N_t x 3
  harmonics::Quadrature1D gl_nodes;  // mu_k = cos(gamma)
  std::vector<std::array<int, 3>> ell_triples;  // (l1,l2,l3), l1,l2 <= l3, admissible
  std::shared_ptr<const harmonics::GauntTable> gaunt;

  int n_translations() const { return int(translation_grid.rows()); }
  int R() const { return shells.count(); }
};

SphericalSpec3D make_spherical_spec(const grids::Grid& grid, int L_max, int R_max, int N_ang,
                                    int N_r = 0, double delta = 0.01, double margin_vox = 2.0,
                                    int K_gl = 0);

// Per-degree Gram matrices (Definition-style F^H F), bispectrum invariants
// B_{l1,l2,l3}(a,b,c) with the radial triple overlap folded in, and the
// Legendre-sampled second moment.
struct InvariantSet3D {
  int L_max = 0;
  int R = 0;
  std::vector<MatrixXcd> gram;                  // per l, R x R
  std::vector<std::array<int, 3>> ell_triples;  // l1,l2 <= l3
  std::vector<MatrixXcd> bispec;                // per triple: (q1<=q2 pairs) x q3
  std::vector<MatrixXd> m2_legendre;            // per mu node, R x R
  VectorXd mu_nodes;

  static long qpair_index(int q1, int q2, int R) {  // q1 <= q2
    return long(q1) * R - long(q1) * (q1 - 1) / 2 + (q2 - q1);
  }
  int triple_index(int l1, int l2, int l3) const;
  // Symmetry-aware lookup; *admissible=false (and value 0) for selection-rule
  // violating triples.
  cplx bispec_at(int l1, int l2, int l3, int a, int b, int c, bool* admissible = nullptr) const;
};

// c_{lm}(r) = sum_i w_i f(t + r w_i) conj(Y_lm(w_i)) for every (l,m) <= L_max.
VectorXcd sht_at_translation(const grids::Grid& grid, const Vector3d& t, double radius,
                             const SphericalSpec3D& spec);

// H_{lm}[q] = sum_n w_n W_q(r_n) c_{lm}(r_n); input rows are radial nodes.
ShCoeffTable shell_project(const MatrixXcd& radial_coeffs, const SphericalSpec3D& spec);

struct BoundaryWeights3D {
  VectorXd s;
  double D = 0.0;
};
BoundaryWeights3D boundary_weights_3d(const grids::Grid& grid, const SphericalSpec3D& spec);

struct Gamma2_3D {
  std::vector<MatrixXcd> gram;        // normalized per-l matrices
  std::vector<MatrixXd> m2_legendre;  // per mu node
  VectorXd mu_nodes;
};
Gamma2_3D gamma2_3d(const grids::Grid& grid, const SphericalSpec3D& spec);

// Gaunt-contracted triple sums normalized by D_h (no radial overlap factor).
std::vector<MatrixXcd> gamma3_3d(const grids::Grid& grid, const SphericalSpec3D& spec);

// One-pass extraction of the full invariant set (bispec includes T_{abc}).
InvariantSet3D extract_invariants_3d(const grids::Grid& grid, const SphericalSpec3D& spec);

// Ground-truth invariants by explicit averaging over a deterministic rotation
// set (test oracle).
InvariantSet3D so3_moments_direct(const grids::Grid& volume, const SphericalSpec3D& spec,
                                  int rotation_quad);

// Exact invariants of a coefficient table (synthetic-instance builders).
std::vector<MatrixXcd> gram_of(const ShCoeffTable& table);
InvariantSet3D invariants_of(const ShCoeffTable& table, const SphericalSpec3D& spec);

// Relative Frobenius distance over grams and bispectrum tables.
double invariant_rel_error(const InvariantSet3D& truth, const InvariantSet3D& other);

void save_invariants(const InvariantSet3D& inv, const std::string& path);
InvariantSet3D load_invariants(const std::string& path);
void save_coeff_table(const ShCoeffTable& t, const std::string& path);
ShCoeffTable load_coeff_table(const std::string& path);

}  // namespace orbit::extract3d
