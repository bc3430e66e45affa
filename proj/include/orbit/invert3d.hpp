#pragma once

#include <optional>
#include <string>
#include <vector>

#include "orbit/extract3d.hpp"

namespace orbit::invert3d {

using extract3d::InvariantSet3D;
using extract3d::ShCoeffTable;

// F_0 from the rank-1 degree-0 Gram: principal eigenpair, sign fixed so the
// largest-magnitude entry is positive. rank_warning set when lambda2/lambda1
// exceeds 1e-4.
VectorXcd recover_l0(const MatrixXcd& gram0, bool* rank_warning = nullptr);

// Degree-1 factor with F^H F = gram1: oracle passthrough (verified within
// `tol`, relative) or the canonical real-basis eigen factor. The march passes
// a loose tolerance when the invariants carry extraction error.
MatrixXcd fix_gauge_l1(const MatrixXcd& gram1, const MatrixXcd* oracle, double tol = 1e-6);

// Linear system for the shell-c coefficients of degree ell from lower-degree
// solutions; conj(B) entries on the right-hand side.
struct LinearSystem {
  MatrixXcd A;  // N_{ell,c} x (2 ell + 1)
  VectorXcd b;
};
LinearSystem assemble_system(int ell, int c, const ShCoeffTable& state,
                             const InvariantSet3D& invariants,
                             const harmonics::ShellBasis& shells);

struct MarchResult {
  ShCoeffTable coeffs;
  MatrixXd residuals;  // (L_max+1) x R relative LS residuals (degrees >= 2)
  std::string gauge;   // "oracle" or "canonical"
  std::vector<std::string> warnings;
};

// Degree-by-degree recovery; lambda < 0 selects the default ridge
// 1e-8 * trace(A^H A)/(2l+1).
MarchResult march(const InvariantSet3D& invariants, const harmonics::ShellBasis& shells,
                  int L_max, double lambda, const ShCoeffTable* gauge_oracle);

// Volume synthesis with overlap-corrected shell mixing (S + 1e-10 I)^{-1}.
grids::Grid synthesize_volume(const ShCoeffTable& table, const harmonics::ShellBasis& shells,
                              const grids::Grid& like);

grids::Grid reconstruct_volume_3d(const InvariantSet3D& invariants,
                                  const harmonics::ShellBasis& shells, const grids::Grid& like,
                                  const ShCoeffTable* gauge_oracle, double lambda = -1.0,
                                  MarchResult* info = nullptr);

}  // namespace orbit::invert3d
