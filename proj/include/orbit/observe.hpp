#pragma once

#include <map>
#include <vector>

#include "orbit/grid.hpp"
#include "orbit/rng.hpp"

namespace orbit::observe {

struct RigidMotion {
  MatrixXd rotation;
  Vector3d translation = Vector3d::Zero();
};

// Observations live on the padded domain Dbar = D expanded by the support
// radius; the pad region carries noise only.
struct SeObservationSet {
  std::vector<grids::Grid> observations;
  double sigma = 0.0;
  double pad = 0.0;  // physical width of the noise-only margin (= R)
  std::vector<RigidMotion> true_motions;

  int count() const { return int(observations.size()); }
  // Half-width of the inner domain D along each axis.
  double domain_half(int axis = 0) const {
    const auto& g = observations.at(0);
    return 0.5 * (g.shape[axis] - 1) * g.spacing - pad;
  }
};

struct LagTuple {
  std::vector<Vector3d> lags;  // d in 1..5, each within the support ball
  int order() const { return int(lags.size()); }
};

// Uniform angle (2D) or uniform quaternion (3D).
MatrixXd haar_rotation(int dim, Rng& rng);

// Uniform on the box [-half_width, half_width]^dim; a zero box is a point mass.
struct TranslationLaw {
  Vector3d half_width = Vector3d::Zero();
  double max_norm() const { return half_width.norm(); }
};

// y_i = g_i . f + noise, per-pixel variance sigma^2 / h^n. domain_half < 0
// auto-sizes D to R + max translation.
SeObservationSet simulate_se_observations(const grids::Grid& f, int N, double sigma,
                                          const TranslationLaw& law, Rng& rng,
                                          bool keep_motions = true, double domain_half = -1.0);

// Mean over observations of h^n sum_{x in D} prod_j ytilde(x + tau_j).
double empirical_autocorr(const SeObservationSet& set, const LagTuple& lags);

// Discrete measure of the inner domain D (the empirical A^(0)).
double domain_measure(const SeObservationSet& set);

// raw - P^(d), with Dirac deltas realized as Kronecker/h^n. Lower-order
// population autocorrelation estimates are keyed by the sorted index subset.
double debias_autocorr(double raw, const LagTuple& lags, double sigma, double cell_volume,
                       const std::map<std::vector<int>, double>& lower_order_estimates);

// E[xi(tau_0)...xi(tau_{d-1})] for discrete white noise (Wick pairings).
double pure_noise_wick(const LagTuple& lags, double sigma, double cell_volume);

enum class SeparationMode { WellSeparated, NonOverlapping };

struct Micrograph {
  grids::Grid grid;  // over [-MR, MR]^n
  MatrixXd placements;               // N x dim
  std::vector<MatrixXd> rotations;   // N entries
  double gamma = 0.0;
  double sigma = 0.0;
  int M = 0;
  uint64_t seed = 0;
};

Micrograph simulate_micrograph(const grids::Grid& f, int N, int M, double sigma,
                               SeparationMode mode, Rng& rng, uint64_t seed_label = 0);

// (1/(2MR)^n) h^n sum_x prod_j ytilde(x+tau_j), zero padding outside the grid.
double mtd_autocorr(const Micrograph& m, const LagTuple& lags);

// Inverts a = gamma*abar + (1-gamma)*chi for the ensemble mean abar.
double unmix_mtd(double a_value, double chi_value, double gamma);

}  // namespace orbit::observe
