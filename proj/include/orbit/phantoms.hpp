#pragma once

#include <cstdint>

#include "orbit/extract3d.hpp"
#include "orbit/grid.hpp"

namespace orbit::phantoms {

// Deterministic smooth portrait-like test image: positive envelope up to the
// support boundary (non-vanishing antipodal correlation) plus asymmetric
// features. n x n canvas, ball support of the given radius.
grids::Grid portrait(int n, double support_radius);

// Random smooth asymmetric test image (seeded): envelope plus Gaussian bumps.
grids::Grid blob_image(int n, double support_radius, uint64_t seed, int n_blobs = 6);

// 3D analogue for extraction oracles.
grids::Grid blob_volume(int n, double support_radius, uint64_t seed, int n_blobs = 6);

// Random band-limited coefficient table obeying the real-signal conjugation
// symmetry, with decaying degree content and positive-dominant l=0 shells.
extract3d::ShCoeffTable random_coeff_table(int L_max, int R, uint64_t seed, double decay = 0.35);

// Smooth random band-limited volume together with its exact shell
// coefficients: the random draw acts as shell mixing weights, so the field
// stays as smooth as the Gaussian shells themselves.
struct BandLimitedVolume {
  grids::Grid volume;
  extract3d::ShCoeffTable truth;  // F = S * alpha
};
BandLimitedVolume band_limited_volume(int L_max, int R_shells,
                                      const harmonics::ShellBasis& shells, int n_grid,
                                      double support_radius, uint64_t seed);

}  // namespace orbit::phantoms
