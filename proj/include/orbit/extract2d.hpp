#pragma once

#include <array>
#include <string>
#include <vector>

#include "orbit/grid.hpp"
#include "orbit/observe.hpp"

namespace orbit::extract2d {

// Discretization of the boundary-limit extraction: rings, angular grids,
// boundary offset delta, and the translation grid Lambda.
struct PolarSpec2D {
  int R_max = 0;
  VectorXd ring_radii;        // physical, strictly increasing
  int N_phi = 0;              // ring-angle samples (even)
  int N_theta = 0;            // boundary-angle samples
  double delta = 0.0;         // boundary offset in (0,1)
  MatrixXd translation_grid;  // N_t x 2 physical centers
  std::vector<std::array<int, 3>> triples;  // stored q-triples, sorted ascending (0-based)
  int m_cut = 0;  // 0: full N_phi x N_phi spectral tables; else |m1|,|m2| <= m_cut

  int n_translations() const { return int(translation_grid.rows()); }
};

// Default spec: pixel-spaced rings r_q = q*h, Lambda = integer pixel centers
// within R*sqrt(1-(1-delta)^2) plus a margin (2 px default; raise it to cover
// the translation law when processing observation sets). All q1<=q2<=q3
// triples are kept by default; `diagonal_triples_only` keeps (q,q,q) only.
PolarSpec2D make_polar_spec(const grids::Grid& grid, int R_max, int N_phi, int N_theta,
                            double delta, double margin_px = 2.0,
                            bool diagonal_triples_only = false, int m_cut = 0);

struct BoundaryWeights {
  VectorXd s;     // s_h per translation center
  double D = 0.0; // sum of s
};

// s_h(t_j) = (2pi/N_theta) sum_k f(t_j+tau0(theta_k)) f(t_j+tau1(theta_k)).
BoundaryWeights boundary_weights(const grids::Grid& grid, const PolarSpec2D& spec);

// a_rq(phi_l) sampled around `center`; rows are rings.
MatrixXd ring_signals(const grids::Grid& grid, const Vector2d& center, const PolarSpec2D& spec);

// Second-order spectral accumulator: for each pair q1<=q2 a vector over
// m = 0..N_phi/2 of sum_j w_j c_q1[m] c_q2[-m]. Real-space slices synthesized
// on demand.
struct Gamma2 {
  int N_phi = 0;
  int R = 0;
  std::vector<VectorXcd> pair_spec;  // index pair_index(q1,q2)
  static long pair_index(int q1, int q2, int R) {  // q1 <= q2
    return long(q1) * R - long(q1) * (q1 - 1) / 2 + (q2 - q1);
  }
  VectorXd real_slice(int q1, int q2) const;  // length N_phi over delta-phi
  double max_imag() const;                     // synthesis residual diagnostic
};

// Third-order spectral accumulator per stored triple. Full mode stores the
// N_phi x N_phi table S[m1,m2]; cut mode the centered (2K+1)^2 block.
struct Gamma3 {
  int N_phi = 0;
  int m_cut = 0;
  std::vector<std::array<int, 3>> triples;
  std::vector<MatrixXcd> spec;
};

Gamma2 gamma2_fft(const grids::Grid& grid, const PolarSpec2D& spec, const VectorXd& weights);
Gamma3 gamma3_fft(const grids::Grid& grid, const PolarSpec2D& spec, const VectorXd& weights);

// M^2_ext(q1,q2,dphi): real slices stored for q1<=q2; value() applies
// M(q1,q2,dphi) = M(q2,q1,-dphi).
struct Moment2_2D {
  VectorXd ring_radii;
  int N_phi = 0;
  std::vector<VectorXd> slices;

  int R() const { return int(ring_radii.size()); }
  const VectorXd& stored(int q1, int q2) const {  // q1 <= q2
    return slices[size_t(Gamma2::pair_index(q1, q2, R()))];
  }
  double value(int q1, int q2, int dphi_idx) const {
    const int n = N_phi;
    int idx = ((dphi_idx % n) + n) % n;
    if (q1 <= q2) return stored(q1, q2)[idx];
    return stored(q2, q1)[(n - idx) % n];
  }
};

// M^3_ext stored spectrally per sorted triple; value() re-references lags to
// evaluate arbitrary ring orders.
struct Moment3_2D {
  VectorXd ring_radii;
  int N_phi = 0;
  int m_cut = 0;
  std::vector<std::array<int, 3>> triples;
  std::vector<MatrixXcd> spec;

  int R() const { return int(ring_radii.size()); }
  int triple_index(std::array<int, 3> sorted) const;
  cplx spec_at(int t, int m1, int m2) const;  // signed harmonics
  MatrixXd plane(int t) const;                // real N_phi x N_phi over (dphi1, dphi2)
  double value(int q1, int q2, int q3, int i1, int i2) const;
};

std::pair<Moment2_2D, Moment3_2D> extract_moments_2d(const grids::Grid& grid,
                                                     const PolarSpec2D& spec);

// Ground-truth SO(2) moments: ring products averaged over N_rot uniform
// rotations about the image center (N_rot rounded up to a multiple of N_phi).
std::pair<Moment2_2D, Moment3_2D> so2_moments_direct(const grids::Grid& grid,
                                                     const PolarSpec2D& spec, int N_rot);

struct EmpiricalMoments2D {
  Moment2_2D m2;
  Moment3_2D m3;
  double D_hat = 0.0;   // accumulated boundary normalizer
  Gamma2 gamma2;        // raw numerators (averaged over observations)
  Gamma3 gamma3;
  int n_observations = 0;
};

// Per-observation boundary weights and spectral accumulators averaged over the
// set; Wick corrections applied at coincident-lag bins using the known sigma.
EmpiricalMoments2D extract_moments_2d_empirical(const observe::SeObservationSet& set,
                                                const PolarSpec2D& spec);

// Normalized squared tensor distances, |a-b|_F^2 / |a|_F^2, counting ordered
// ring tuples with their multiplicities.
double moment2_mse(const Moment2_2D& truth, const Moment2_2D& other);
double moment3_mse(const Moment3_2D& truth, const Moment3_2D& other);

// Grid-file payload + JSON sidecar (<path> and <path>.json).
void save_moment2(const Moment2_2D& m, double delta, const std::string& path);
Moment2_2D load_moment2(const std::string& path);
void save_moment3(const Moment3_2D& m, double delta, const std::string& path);
Moment3_2D load_moment3(const std::string& path);

}  // namespace orbit::extract2d
