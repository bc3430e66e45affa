#include "orbit/phantoms.hpp"

#include <cmath>

#include "orbit/harmonics.hpp"
#include "orbit/rng.hpp"

namespace orbit::phantoms {

namespace {

double envelope(double u) {
  if (u > 1.0) return 0.0;
  return 0.3 + 0.7 * (1.0 - u * u);
}

double bump(const Vector3d& x, const Vector3d& c, double sigma) {
  return std::exp(-0.5 * (x - c).squaredNorm() / (sigma * sigma));
}

}  // namespace

grids::Grid portrait(int n, double support_radius) {
  grids::Grid g = grids::Grid::zeros(2, n, 1.0, support_radius);
  const double R = support_radius;
  struct Feature {
    double x, y, sigma, amp;
  };
  const Feature feats[] = {
      {0.00, 0.10, 0.45, 0.55},    // head
      {-0.28, 0.30, 0.085, -0.45}, // left eye
      {0.24, 0.32, 0.065, -0.38},  // right eye (smaller: asymmetry)
      {0.02, 0.02, 0.10, 0.35},    // nose
      {-0.05, -0.32, 0.16, -0.40}, // mouth
      {0.30, -0.18, 0.12, 0.30},   // cheek highlight
      {-0.42, -0.05, 0.09, 0.22},  // off-center blob
  };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Vector3d x = g.coord(i, j);
      const double u = std::hypot(x[0], x[1]) / R;
      if (u > 1.0) continue;
      double v = envelope(u);
      for (const auto& f : feats) {
        v += f.amp * bump(x, {f.x * R, f.y * R, 0.0}, f.sigma * R);
      }
      g.at(i, j) = v;
    }
  }
  return g;
}

grids::Grid blob_image(int n, double support_radius, uint64_t seed, int n_blobs) {
  grids::Grid g = grids::Grid::zeros(2, n, 1.0, support_radius);
  const double R = support_radius;
  Rng rng(seed);
  std::vector<Vector3d> centers;
  std::vector<double> sigmas, amps;
  for (int b = 0; b < n_blobs; ++b) {
    const double rr = 0.72 * R * std::sqrt(rng.uniform());
    const double th = rng.uniform(0.0, kTwoPi);
    centers.push_back({rr * std::cos(th), rr * std::sin(th), 0.0});
    sigmas.push_back(R * rng.uniform(0.09, 0.22));
    amps.push_back(rng.uniform(0.25, 0.6) * (rng.uniform() < 0.35 ? -1.0 : 1.0));
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Vector3d x = g.coord(i, j);
      const double u = std::hypot(x[0], x[1]) / R;
      if (u > 1.0) continue;
      double v = envelope(u);
      for (int b = 0; b < n_blobs; ++b) v += amps[size_t(b)] * bump(x, centers[size_t(b)], sigmas[size_t(b)]);
      g.at(i, j) = v;
    }
  }
  return g;
}

grids::Grid blob_volume(int n, double support_radius, uint64_t seed, int n_blobs) {
  grids::Grid g = grids::Grid::zeros(3, n, 1.0, support_radius);
  const double R = support_radius;
  Rng rng(seed);
  std::vector<Vector3d> centers;
  std::vector<double> sigmas, amps;
  for (int b = 0; b < n_blobs; ++b) {
    const double rr = 0.68 * R * std::cbrt(rng.uniform());
    const double ct = rng.uniform(-1.0, 1.0);
    const double st = std::sqrt(1.0 - ct * ct);
    const double ph = rng.uniform(0.0, kTwoPi);
    centers.push_back({rr * st * std::cos(ph), rr * st * std::sin(ph), rr * ct});
    sigmas.push_back(R * rng.uniform(0.12, 0.26));
    amps.push_back(rng.uniform(0.3, 0.7) * (rng.uniform() < 0.35 ? -1.0 : 1.0));
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        const Vector3d x = g.coord(i, j, k);
        const double u = x.norm() / R;
        if (u > 1.0) continue;
        double v = envelope(u);
        for (int b = 0; b < n_blobs; ++b)
          v += amps[size_t(b)] * bump(x, centers[size_t(b)], sigmas[size_t(b)]);
        g.at(i, j, k) = v;
      }
    }
  }
  return g;
}

extract3d::ShCoeffTable random_coeff_table(int L_max, int R, uint64_t seed, double decay) {
  Rng rng(seed);
  auto table = extract3d::ShCoeffTable::zeros(L_max, R);
  for (int l = 0; l <= L_max; ++l) {
    const double amp = std::exp(-decay * l);
    for (int q = 0; q < R; ++q) {
      const double u = double(q + 1) / double(R + 1);
      // higher degrees live deeper inside; the outer shells stay l = 0
      // dominated so the antipodal correlation cannot cancel
      const double peak = std::max(0.25, 0.5 - 0.04 * l);
      double prof = std::exp(-6.0 * (u - peak) * (u - peak));
      if (l & 1) {
        // soften odd content near the boundary only, keeping C_f positive
        // without starving the outer-shell bispectrum equations
        const double s = std::clamp((u - 0.7) / 0.3, 0.0, 1.0);
        prof *= 1.0 - 0.8 * s * s * (3 - 2 * s);
      }
      for (int m = 0; m <= l; ++m) {
        cplx z(rng.normal(), m == 0 ? 0.0 : rng.normal());
        if (l == 0) z = cplx(1.5 + 0.3 * rng.normal() + (u > 0.7 ? 0.8 : 0.0), 0.0);
        z *= amp * prof;
        table.at(l)(m + l, q) = z;
        cplx neg = std::conj(z);
        if (m & 1) neg = -neg;
        table.at(l)(-m + l, q) = neg;
      }
    }
  }
  return table;
}

BandLimitedVolume band_limited_volume(int L_max, int R_shells,
                                      const harmonics::ShellBasis& shells, int n_grid,
                                      double support_radius, uint64_t seed) {
  const auto alpha = random_coeff_table(L_max, R_shells, seed);
  // F = S * alpha, so synthesize_volume's S^{-1} de-mixing lands back on the
  // smooth alpha field.
  auto truth = extract3d::ShCoeffTable::zeros(L_max, R_shells);
  for (int l = 0; l <= L_max; ++l) truth.at(l) = alpha.at(l) * shells.overlap.transpose();

  grids::Grid like = grids::Grid::zeros(3, n_grid, 1.0, support_radius);
  grids::Grid vol = grids::Grid::zeros(3, n_grid, 1.0, support_radius);
  const int L = L_max;
  std::vector<double> leg(size_t(L + 1));
  VectorXd win(R_shells);
  for (int i = 0; i < n_grid; ++i)
    for (int j = 0; j < n_grid; ++j)
      for (int k = 0; k < n_grid; ++k) {
        const Vector3d x = vol.coord(i, j, k);
        const double r = x.norm();
        const double rn = r / support_radius;
        if (rn > 1.0) continue;
        for (int q = 0; q < R_shells; ++q) win[q] = shells.window(q, rn);
        const double z = r > 1e-12 ? x[2] / r : 1.0;
        const double phi = std::atan2(x[1], x[0]);
        double acc = 0.0;
        for (int m = 0; m <= L; ++m) {
          orbit::harmonics::normalized_assoc_legendre(L, m, z, leg.data());
          const cplx e = std::polar(1.0, double(m) * phi);
          for (int l = m; l <= L; ++l) {
            const cplx radial = (alpha.at(l).row(m + l) * win.cast<cplx>()).value();
            if (m == 0)
              acc += (radial * leg[size_t(l)]).real();
            else
              acc += 2.0 * (radial * leg[size_t(l)] * e).real();
          }
        }
        vol.at(i, j, k) = acc;
      }
  return {std::move(vol), std::move(truth)};
}

}  // namespace orbit::phantoms
