#pragma once

#include <vector>

#include "orbit/extract2d.hpp"

namespace orbit::invert2d {

using extract2d::Moment2_2D;
using extract2d::Moment3_2D;

// Amplitudes and phases of one ring's angular Fourier coefficients, harmonics
// 0..K; theta_1 = 0 fixes the per-ring gauge, negative harmonics follow by
// Hermitian symmetry.
struct RingSpectrum {
  VectorXd amplitudes;
  VectorXd phases;
  int K = 0;

  cplx coeff(int m) const {
    const int am = std::abs(m);
    if (am > K) return 0.0;
    cplx c = std::polar(amplitudes[am], phases[am]);
    return m >= 0 ? c : std::conj(c);
  }
};

struct SyncSolution {
  VectorXd offsets;           // theta_r, offsets[0] = 0
  double affinity_gap = 0.0;  // |lambda_2| / lambda_1 of the affinity matrix
};

inline int default_harmonic_cutoff(int N_phi) { return std::min((N_phi - 1) / 2, 64); }

// |c[m]| = sqrt(max(0, DFT{M2(q,q,.)}[m])); clamped bins counted if requested.
VectorXd amplitudes_from_m2(const Moment2_2D& m2, int ring, int K, int* clamped = nullptr);

// B[m1,m2] = c[m1] c[m2] c[-(m1+m2)] recovered from the (q,q,q) slice,
// returned as a centered (2K+1)^2 table.
MatrixXcd per_ring_bispectrum(const Moment3_2D& m3, int ring, int K);

// Sequential weighted-circular-mean phase recovery; theta_1 = 0 gauge.
VectorXd recover_phases(const MatrixXcd& bispec, const VectorXd& amplitudes, int K);

// Inverse DFT of the Hermitian-completed coefficients onto N_phi samples.
VectorXd assemble_ring(const RingSpectrum& spectrum, int N_phi);

// Spectral angular synchronization of per-ring rotations from M2 cross slices.
// Ring r of `estimates` is the truth rotated by alpha_r; the returned offsets
// are alpha_r - alpha_1, so multiplying coefficient m by exp(-i m offset)
// aligns every ring to the first ring's gauge.
SyncSolution sync_rings(const Moment2_2D& m2, const std::vector<RingSpectrum>& estimates,
                        const std::vector<int>& K_set);

// Full pipeline: per-ring inversion, synchronization, polar resampling onto a
// grid shaped like `like`.
grids::Grid reconstruct_image_2d(const Moment2_2D& m2, const Moment3_2D& m3,
                                 const grids::Grid& like, int K = -1);

}  // namespace orbit::invert2d
