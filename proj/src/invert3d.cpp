#include "orbit/invert3d.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "orbit/parallel.hpp"

namespace orbit::invert3d {

namespace {

using extract3d::lm_index;

// Complex <-> real basis change at degree 1: (F_{1,-1}, F_{10}, F_{11})^T =
// A (F_x, F_y, F_z)^T for real signals (Condon-Shortley convention).
Eigen::Matrix3cd l1_basis_matrix() {
  Eigen::Matrix3cd A;
  const double s = 1.0 / std::sqrt(2.0);
  A << cplx(s, 0), cplx(0, s), cplx(0, 0),  //
      cplx(0, 0), cplx(0, 0), cplx(1, 0),   //
      cplx(-s, 0), cplx(0, s), cplx(0, 0);
  return A;
}

}  // namespace

VectorXcd recover_l0(const MatrixXcd& gram0, bool* rank_warning) {
  const long R = gram0.rows();
  Eigen::SelfAdjointEigenSolver<MatrixXcd> eig(gram0);
  require(eig.info() == Eigen::Success, "numerical", "eigendecomposition failed");
  const double l1 = std::max(0.0, eig.eigenvalues()[R - 1]);
  const double l2 = R >= 2 ? std::abs(eig.eigenvalues()[R - 2]) : 0.0;
  if (rank_warning) *rank_warning = l1 > 0.0 && l2 / std::max(l1, 1e-300) > 1e-4;
  if (l1 == 0.0) return VectorXcd::Zero(R);
  VectorXcd v = eig.eigenvectors().col(R - 1);
  // sign/phase: rotate the largest-magnitude entry onto the positive axis
  long imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  const cplx z = v[imax];
  if (std::abs(z) > 0) v *= std::conj(z) / std::abs(z);
  return std::sqrt(l1) * v;
}

MatrixXcd fix_gauge_l1(const MatrixXcd& gram1, const MatrixXcd* oracle, double tol) {
  const long R = gram1.rows();
  if (oracle) {
    require(oracle->rows() == 3 && oracle->cols() == R, "bad-argument",
            "gauge oracle must be 3 x R");
    const MatrixXcd check = oracle->adjoint() * (*oracle);
    const double scale = std::max(gram1.norm(), 1e-300);
    require((check - gram1).norm() <= tol * scale, "gauge-mismatch",
            "oracle coefficients do not reproduce the degree-1 Gram matrix");
    return *oracle;
  }
  // Canonical factor in the real l=1 basis (real symmetric PSD there).
  const Eigen::Matrix3cd A = l1_basis_matrix();
  const MatrixXd G = gram1.real();  // imaginary part vanishes for real signals
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(G);
  require(eig.info() == Eigen::Success, "numerical", "eigendecomposition failed");
  MatrixXd Freal = MatrixXd::Zero(3, R);
  for (int k = 0; k < 3 && k < R; ++k) {
    const long idx = R - 1 - k;  // descending eigenvalues
    const double lam = std::max(0.0, eig.eigenvalues()[idx]);
    VectorXd v = eig.eigenvectors().col(idx);
    for (long i = 0; i < R; ++i) {  // first-nonzero-positive sign convention
      if (std::abs(v[i]) > 1e-12) {
        if (v[i] < 0) v = -v;
        break;
      }
    }
    Freal.row(k) = std::sqrt(lam) * v.transpose();
  }
  return A * Freal.cast<cplx>();
}

LinearSystem assemble_system(int ell, int c, const ShCoeffTable& state,
                             const InvariantSet3D& invariants,
                             const harmonics::ShellBasis& shells) {
  const int R = state.R;
  const harmonics::GauntTable gaunt(ell);  // local table up to this degree
  std::vector<Eigen::RowVectorXcd> rows;
  std::vector<cplx> rhs;
  for (const auto& [l1, l2, l3] : invariants.ell_triples) {
    if (l3 != ell || l1 > l2 || l1 >= ell || l2 >= ell) continue;  // unordered pairs once
    for (int a = 0; a < R; ++a) {
      for (int b = (l1 == l2 ? a : 0); b < R; ++b) {
        // row v: v_m3 = T_abc sum_{m1,m2} G F_{l1 m1}[a] F_{l2 m2}[b]
        Eigen::RowVectorXcd v = Eigen::RowVectorXcd::Zero(2 * ell + 1);
        const double T = shells.triple(a, b, c);
        if (T == 0.0) continue;
        for (int m1 = -l1; m1 <= l1; ++m1) {
          for (int m2 = -l2; m2 <= l2; ++m2) {
            const int m3 = -m1 - m2;
            if (std::abs(m3) > ell) continue;
            const double g = gaunt(l1, l2, ell, m1, m2);
            if (g == 0.0) continue;
            v[m3 + ell] += T * g * state.coeff(l1, m1, a) * state.coeff(l2, m2, b);
          }
        }
        // B = sum_m v_m x_m: a plain linear row in the unknown coefficients
        rows.push_back(v);
        rhs.push_back(invariants.bispec_at(l1, l2, ell, a, b, c));
      }
    }
  }
  require(long(rows.size()) >= 2 * ell + 1, "underdetermined",
          "degree " + std::to_string(ell) + " shell " + std::to_string(c) + ": " +
              std::to_string(rows.size()) + " equations for " + std::to_string(2 * ell + 1) +
              " unknowns");
  LinearSystem sys;
  sys.A.resize(long(rows.size()), 2 * ell + 1);
  sys.b.resize(long(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    sys.A.row(long(i)) = rows[i];
    sys.b[long(i)] = rhs[i];
  }
  return sys;
}

MarchResult march(const InvariantSet3D& invariants, const harmonics::ShellBasis& shells,
                  int L_max, double lambda, const ShCoeffTable* gauge_oracle) {
  const int R = invariants.R;
  MarchResult res;
  res.coeffs = ShCoeffTable::zeros(L_max, R);
  res.residuals = MatrixXd::Zero(L_max + 1, R);
  res.gauge = gauge_oracle ? "oracle" : "canonical";

  // l = 0 from the rank-1 Gram; sign checked against B(0,0,0) when stored.
  bool warn = false;
  VectorXcd f0 = recover_l0(invariants.gram[0], &warn);
  if (warn) res.warnings.push_back("gram0 not rank-1 within tolerance; projected");
  const int t000 = invariants.triple_index(0, 0, 0);
  if (t000 >= 0 && f0.norm() > 0) {
    const double g000 = harmonics::gaunt(0, 0, 0, 0, 0, 0);
    cplx dot = 0.0;
    for (int a = 0; a < R; ++a)
      for (int b = a; b < R; ++b)
        for (int c = 0; c < R; ++c) {
          const cplx pred = shells.triple(a, b, c) * g000 * f0[a] * f0[b] * f0[c];
          dot += invariants.bispec_at(0, 0, 0, a, b, c) * std::conj(pred);
        }
    if (dot.real() < 0.0) {
      f0 = -f0;
      res.warnings.push_back("degree-0 sign flipped to match the bispectrum");
    }
  }
  res.coeffs.at(0).row(0) = f0.transpose();

  if (L_max >= 1) {
    const MatrixXcd* oracle1 = nullptr;
    MatrixXcd oracle_block;
    if (gauge_oracle) {
      require(gauge_oracle->L_max >= 1 && gauge_oracle->R == R, "bad-argument",
              "gauge oracle table incompatible");
      oracle_block = gauge_oracle->at(1);
      oracle1 = &oracle_block;
    }
    // extracted invariants carry discretization error; accept the oracle when
    // it reproduces the Gram up to that level
    res.coeffs.at(1) = fix_gauge_l1(invariants.gram[1], oracle1, oracle1 ? 0.25 : 1e-6);
  }

  for (int ell = 2; ell <= L_max; ++ell) {
    std::vector<VectorXcd> sols(static_cast<size_t>(R));
    std::vector<double> resid(static_cast<size_t>(R));
    parallel_for(R, [&](long c) {
      LinearSystem sys = assemble_system(ell, int(c), res.coeffs, invariants, shells);
      const MatrixXcd AtA = sys.A.adjoint() * sys.A;
      const VectorXcd Atb = sys.A.adjoint() * sys.b;
      double lam = lambda;
      if (lam < 0.0) {
        lam = 1e-8 * AtA.real().trace() / double(2 * ell + 1);
        if (lam <= 0.0) lam = 1e-300;  // zero-information system solves to zero
      }
      MatrixXcd Areg = AtA + lam * MatrixXcd::Identity(2 * ell + 1, 2 * ell + 1);
      Eigen::LDLT<MatrixXcd> ldlt(Areg);
      if (lam == 0.0) {
        Eigen::SelfAdjointEigenSolver<MatrixXcd> eig(AtA);
        const double emin = eig.eigenvalues().minCoeff();
        const double emax = eig.eigenvalues().maxCoeff();
        require(emax > 0.0 && emin > 1e-14 * emax, "singular-system",
                "normal matrix singular at degree " + std::to_string(ell));
      }
      const VectorXcd x = ldlt.solve(Atb);
      sols[size_t(c)] = x;
      resid[size_t(c)] = (sys.A * x - sys.b).norm() / std::max(sys.b.norm(), 1e-300);
    });
    for (int c = 0; c < R; ++c) {
      res.coeffs.at(ell).col(c) = sols[size_t(c)];
      res.residuals(ell, c) = resid[size_t(c)];
    }
    res.coeffs.hermitianize();
  }
  return res;
}

grids::Grid synthesize_volume(const ShCoeffTable& table, const harmonics::ShellBasis& shells,
                              const grids::Grid& like) {
  require(table.conjugation_defect() <=
              1e-6 * (1.0 + std::sqrt([&] {
                double s = 0;
                for (const auto& b : table.blocks) s += b.squaredNorm();
                return s;
              }())),
          "conjugation-violated", "coefficient table breaks real-signal symmetry");
  const int R = table.R;
  const int L = table.L_max;
  // De-mix overlapping shells: alpha = (S + 1e-10 I)^{-1} Fhat.
  MatrixXd S = shells.overlap + 1e-10 * MatrixXd::Identity(R, R);
  Eigen::LLT<MatrixXd> llt(S);
  ShCoeffTable alpha = ShCoeffTable::zeros(L, R);
  for (int l = 0; l <= L; ++l) {
    MatrixXcd rhs = table.at(l).transpose();  // R x (2l+1)
    MatrixXcd sol(R, 2 * l + 1);
    sol.real() = llt.solve(rhs.real().eval());
    sol.imag() = llt.solve(rhs.imag().eval());
    alpha.at(l) = sol.transpose();
  }

  grids::Grid out = grids::Grid::zeros(3, like.shape[0], like.spacing, like.support_radius);
  const double R_sup = like.support_radius;
  parallel_for(out.shape[0], [&](long i) {
    std::vector<double> leg(size_t(L + 1));
    VectorXd win(R);
    for (int j = 0; j < out.shape[1]; ++j) {
      for (int k = 0; k < out.shape[2]; ++k) {
        const Vector3d x = out.coord(int(i), j, k);
        const double r = x.norm();
        const double rn = r / R_sup;
        if (rn > 1.0) {
          out.at(int(i), j, k) = 0.0;
          continue;
        }
        for (int q = 0; q < R; ++q) win[q] = shells.window(q, rn);
        const double z = r > 1e-12 ? x[2] / r : 1.0;
        const double phi = std::atan2(x[1], x[0]);
        cplx acc = 0.0;
        for (int m = 0; m <= L; ++m) {
          harmonics::normalized_assoc_legendre(L, m, z, leg.data());
          const cplx e = std::polar(1.0, double(m) * phi);
          for (int l = std::max(m, 0); l <= L; ++l) {
            const cplx radial = alpha.at(l).row(m + l) * win.cast<cplx>();
            if (m == 0) {
              acc += radial * leg[size_t(l)];
            } else {
              // m and -m combined: 2 Re(F_{lm} Y_{lm}) for Hermitian tables
              acc += 2.0 * (radial * leg[size_t(l)] * e).real();
            }
          }
        }
        out.at(int(i), j, k) = acc.real();
      }
    }
  });
  return out;
}

grids::Grid reconstruct_volume_3d(const InvariantSet3D& invariants,
                                  const harmonics::ShellBasis& shells, const grids::Grid& like,
                                  const ShCoeffTable* gauge_oracle, double lambda,
                                  MarchResult* info) {
  MarchResult res = march(invariants, shells, invariants.L_max, lambda, gauge_oracle);
  grids::Grid volume = synthesize_volume(res.coeffs, shells, like);
  if (info) *info = std::move(res);
  return volume;
}

}  // namespace orbit::invert3d
