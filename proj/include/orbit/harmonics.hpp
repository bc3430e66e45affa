#pragma once

#include <vector>

#include "orbit/common.hpp"

namespace orbit::harmonics {

// Highest Legendre/spherical-harmonic degree the module supports.
inline constexpr int kMaxDegree = 256;
inline constexpr int kMaxWigner = 64;

struct Quadrature1D {
  VectorXd nodes;    // strictly increasing, in [-1,1]
  VectorXd weights;  // positive, sum to 2
};

struct SphereQuadrature {
  MatrixXd directions;  // N x 3 unit vectors
  VectorXd weights;     // positive, sum to 4*pi
  int size() const { return int(directions.rows()); }
};

// Gaussian radial windows W_q(r) = C_q exp(-(r-r_q)^2/(2 sigma^2)) on [0,1],
// unit-normalized in L^2([0,1], r^2 dr).
struct ShellBasis {
  VectorXd centers;
  double width = 0.0;
  VectorXd normalizers;
  MatrixXd overlap;                   // S_ab
  std::vector<double> triple_overlap; // T_abc, dense R^3, index (a*R+b)*R+c
  Quadrature1D radial_quadrature;     // nodes in [0,1], weights include r^2 dr

  int count() const { return int(centers.size()); }
  double window(int q, double r) const {
    const double d = r - centers[q];
    return normalizers[q] * std::exp(-0.5 * d * d / (width * width));
  }
  double triple(int a, int b, int c) const {
    const int r = count();
    return triple_overlap[size_t((a * r + b) * r + c)];
  }
};

double legendre_p(int ell, double x);

// Orthonormal complex Y_lm, Condon-Shortley convention.
cplx sph_harm(int ell, int m, double theta, double phi);

// Normalized associated Legendre column: out[l] = Nbar_l^m P_l^m(x) for
// l = m..L, such that Y_lm = out[l] * exp(i m phi). Batch form used by the
// spherical-harmonic transforms.
void normalized_assoc_legendre(int L, int m, double x, double* out);

double wigner3j(int l1, int l2, int l3, int m1, int m2, int m3);
double gaunt(int l1, int l2, int l3, int m1, int m2, int m3);

Quadrature1D gauss_legendre(int K);

// Gauss-Legendre mapped to [0,1] with the r^2 measure folded into the weights.
Quadrature1D radial_quadrature_01(int N_r);

SphereQuadrature fibonacci_sphere(int N_ang);

ShellBasis make_shell_basis(int R_max, double sigma_sh, int N_r);
inline double default_shell_width(int R_max) { return 0.6 / double(R_max + 1); }

// Dense Gaunt coefficients for all admissible (l1,l2,l3) with l_i <= L_max;
// m3 = -m1-m2 implied. Immutable after construction, shareable across threads.
class GauntTable {
 public:
  explicit GauntTable(int L_max);
  int l_max() const { return L_; }
  double operator()(int l1, int l2, int l3, int m1, int m2) const {
    if (l1 > L_ || l2 > L_ || l3 > L_) return 0.0;
    const int key = (l1 * (L_ + 1) + l2) * (L_ + 1) + l3;
    const int block = block_of_[size_t(key)];
    if (block < 0) return 0.0;
    if (std::abs(m1) > l1 || std::abs(m2) > l2 || std::abs(m1 + m2) > l3) return 0.0;
    return blocks_[size_t(block)]((m1 + l1), (m2 + l2));
  }

 private:
  int L_;
  std::vector<int> block_of_;
  std::vector<MatrixXd> blocks_;
};

}  // namespace orbit::harmonics
