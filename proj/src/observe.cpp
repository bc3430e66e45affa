#include "orbit/observe.hpp"

#include <algorithm>
#include <cmath>

#include "orbit/parallel.hpp"

namespace orbit::observe {

namespace {

bool grid_aligned(const Vector3d& tau, double h, int dim, std::array<long, 3>* shift) {
  for (int a = 0; a < dim; ++a) {
    const double s = tau[a] / h;
    const double r = std::round(s);
    if (std::abs(s - r) > 1e-9) return false;
    (*shift)[size_t(a)] = long(r);
  }
  for (int a = dim; a < 3; ++a) (*shift)[size_t(a)] = 0;
  return true;
}

double product_sum(const grids::Grid& g, const LagTuple& lags, double inner_half) {
  // sum over nodes x with |x_a| <= inner_half of prod_j g(x + tau_j).
  const int d = lags.order();
  const double h = g.spacing;
  std::array<std::array<long, 3>, 5> shifts{};
  bool aligned = true;
  for (int j = 0; j < d && aligned; ++j) aligned = grid_aligned(lags.lags[size_t(j)], h, g.dim, &shifts[size_t(j)]);

  const double tol = 1e-9 * h;
  auto in_inner = [&](double c) { return std::abs(c) <= inner_half + tol; };

  double acc = 0.0;
  for (int i = 0; i < g.shape[0]; ++i) {
    for (int j = 0; j < g.shape[1]; ++j) {
      for (int k = 0; k < g.shape[2]; ++k) {
        const Vector3d x = g.coord(i, j, k);
        if (!in_inner(x[0]) || !in_inner(x[1]) || (g.dim == 3 && !in_inner(x[2]))) continue;
        double p = 1.0;
        if (aligned) {
          for (int t = 0; t < d; ++t) {
            const long ii = i + shifts[size_t(t)][0];
            const long jj = j + shifts[size_t(t)][1];
            const long kk = k + shifts[size_t(t)][2];
            if (ii < 0 || ii >= g.shape[0] || jj < 0 || jj >= g.shape[1] || kk < 0 ||
                kk >= g.shape[2]) {
              p = 0.0;
              break;
            }
            p *= g.at(int(ii), int(jj), int(kk));
          }
        } else {
          for (int t = 0; t < d; ++t) {
            p *= grids::sample(g, x + lags.lags[size_t(t)]);
            if (p == 0.0) break;
          }
        }
        acc += p;
      }
    }
  }
  return acc;
}

}  // namespace

MatrixXd haar_rotation(int dim, Rng& rng) {
  if (dim == 2) return grids::rotation2(rng.uniform(0.0, kTwoPi));
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  while (q.norm() < 1e-12) q = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return grids::rotation3(q.normalized());
}

SeObservationSet simulate_se_observations(const grids::Grid& f, int N, double sigma,
                                          const TranslationLaw& law, Rng& rng, bool keep_motions,
                                          double domain_half) {
  const double R = f.support_radius;
  const double tmax = law.half_width.head(f.dim).lpNorm<Eigen::Infinity>();
  if (domain_half < 0.0) domain_half = R + tmax;
  require(R + tmax <= domain_half + 1e-12, "translation-exceeds-domain",
          "translation law pushes support outside D");

  const double h = f.spacing;
  const int extra = int(std::ceil((domain_half + R) / h - 0.5 * (f.shape[0] - 1)));
  const int pad_nodes = std::max(0, extra);

  SeObservationSet set;
  set.sigma = sigma;
  set.observations.resize(size_t(N));
  const double noise_std = sigma / std::pow(h, f.dim / 2.0);

  std::vector<RigidMotion> motions(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) {  // draw all motions/seeds first so layout is schedule-free
    motions[size_t(i)].rotation = haar_rotation(f.dim, rng);
    for (int a = 0; a < f.dim; ++a) {
      motions[size_t(i)].translation[a] =
          law.half_width[a] > 0 ? rng.uniform(-law.half_width[a], law.half_width[a]) : 0.0;
    }
  }
  std::vector<uint64_t> noise_seeds(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) noise_seeds[size_t(i)] = rng.next_u64();

  parallel_for(N, [&](long i) {
    const auto& m = motions[size_t(i)];
    grids::Grid obs = grids::Grid::zeros(f.dim, f.shape[0] + 2 * pad_nodes, h, R);
    Eigen::Matrix3d rinv = Eigen::Matrix3d::Identity();
    rinv.topLeftCorner(f.dim, f.dim) = m.rotation.transpose();
    for (int ix = 0; ix < obs.shape[0]; ++ix)
      for (int jy = 0; jy < obs.shape[1]; ++jy)
        for (int kz = 0; kz < obs.shape[2]; ++kz) {
          const Vector3d x = obs.coord(ix, jy, kz);
          double v = 0.0;
          if ((x - m.translation).norm() <= R + 2 * h) v = grids::sample(f, rinv * (x - m.translation));
          obs.at(ix, jy, kz) = v;
        }
    if (sigma > 0) {
      Rng noise(noise_seeds[size_t(i)]);
      for (long p = 0; p < obs.size(); ++p) obs.values[p] += noise_std * noise.normal();
    }
    set.observations[size_t(i)] = std::move(obs);
  });
  set.pad = (0.5 * (f.shape[0] - 1 + 2 * pad_nodes)) * h - domain_half;
  if (keep_motions) set.true_motions = std::move(motions);
  return set;
}

double domain_measure(const SeObservationSet& set) {
  const auto& g = set.observations.at(0);
  const double inner = set.domain_half();
  const double tol = 1e-9 * g.spacing;
  long count1d[3] = {0, 0, 0};
  for (int a = 0; a < g.dim; ++a) {
    for (int i = 0; i < g.shape[a]; ++i) {
      const double c = (i - 0.5 * (g.shape[a] - 1)) * g.spacing;
      if (std::abs(c) <= inner + tol) ++count1d[a];
    }
  }
  double cells = 1.0;
  for (int a = 0; a < g.dim; ++a) cells *= double(count1d[a]);
  return cells * g.cell_volume();
}

double empirical_autocorr(const SeObservationSet& set, const LagTuple& lags) {
  require(set.count() > 0, "empty-set", "empirical_autocorr needs observations");
  require(lags.order() >= 1 && lags.order() <= 5, "bad-argument", "lag order must be 1..5");
  const auto& g0 = set.observations[0];
  const double inner = set.domain_half();
  const double hn = g0.cell_volume();
  std::vector<double> per(size_t(set.count()));
  parallel_for(set.count(), [&](long i) {
    per[size_t(i)] = product_sum(set.observations[size_t(i)], lags, inner) * hn;
  });
  double acc = 0.0;
  for (double v : per) acc += v;
  return acc / double(set.count());
}

namespace {

// Sum over perfect matchings of `idx` of prod Kronecker(tau_i == tau_j)/h^n.
double pairing_sum(const std::vector<int>& idx, const LagTuple& lags, double hn, double tol) {
  if (idx.empty()) return 1.0;
  const int first = idx[0];
  double total = 0.0;
  for (size_t p = 1; p < idx.size(); ++p) {
    const int partner = idx[p];
    const double dist = (lags.lags[size_t(first)] - lags.lags[size_t(partner)]).norm();
    if (dist > tol) continue;
    std::vector<int> rest;
    for (size_t q = 1; q < idx.size(); ++q)
      if (q != p) rest.push_back(idx[q]);
    total += (1.0 / hn) * pairing_sum(rest, lags, hn, tol);
  }
  return total;
}

}  // namespace

double pure_noise_wick(const LagTuple& lags, double sigma, double cell_volume) {
  const int d = lags.order();
  if (d & 1) return 0.0;
  std::vector<int> idx(static_cast<size_t>(d));
  for (int i = 0; i < d; ++i) idx[size_t(i)] = i;
  const double tol = 1e-9;
  return std::pow(sigma, d) * pairing_sum(idx, lags, cell_volume, tol);
}

double debias_autocorr(double raw, const LagTuple& lags, double sigma, double cell_volume,
                       const std::map<std::vector<int>, double>& lower_order_estimates) {
  const int d = lags.order();
  const double tol = 1e-9;
  double correction = 0.0;
  // Proper subsets S with even complement; complement indices must pair up.
  for (int mask = 0; mask < (1 << d) - 1; ++mask) {
    std::vector<int> inside, outside;
    for (int j = 0; j < d; ++j) {
      if (mask & (1 << j))
        inside.push_back(j);
      else
        outside.push_back(j);
    }
    if (outside.size() & 1) continue;
    const double pairings = pairing_sum(outside, lags, cell_volume, tol);
    if (pairings == 0.0) continue;
    const auto it = lower_order_estimates.find(inside);
    require(it != lower_order_estimates.end(), "missing-lower-order",
            "debias_autocorr lacks an estimate for a required subset");
    correction += std::pow(sigma, double(outside.size())) * it->second * pairings;
  }
  return raw - correction;
}

namespace {

double ball_volume(int dim, double r) {
  return dim == 2 ? kPi * r * r : (4.0 / 3.0) * kPi * r * r * r;
}

}  // namespace

Micrograph simulate_micrograph(const grids::Grid& f, int N, int M, double sigma,
                               SeparationMode mode, Rng& rng, uint64_t seed_label) {
  const double R = f.support_radius;
  const double h = f.spacing;
  const int dim = f.dim;
  const double half = M * R;

  Micrograph m;
  m.M = M;
  m.sigma = sigma;
  m.seed = seed_label;
  m.gamma = double(N) * ball_volume(dim, 2 * R) / std::pow(2 * half, dim);
  require(m.gamma <= 1.0 + 1e-12, "bad-argument", "requested density gamma exceeds 1");

  int n_side = int(std::round(2.0 * half / h)) + 1;
  if (!(n_side & 1)) ++n_side;
  m.grid = grids::Grid::zeros(dim, n_side, h, R);

  const double r_sep = (mode == SeparationMode::WellSeparated ? 4.0 * R : 2.0 * R) + h;
  const double place_half = half - R;
  require(place_half > 0, "bad-argument", "micrograph too small for one instance");

  m.placements.resize(N, dim);
  const long budget = 64L * std::max(1, N);
  int placed = 0;
  for (long attempt = 0; attempt < budget && placed < N; ++attempt) {
    Vector3d c = Vector3d::Zero();
    for (int a = 0; a < dim; ++a) c[a] = rng.uniform(-place_half, place_half);
    bool ok = true;
    for (int p = 0; p < placed && ok; ++p) {
      double d2 = 0.0;
      for (int a = 0; a < dim; ++a) {
        const double dd = c[a] - m.placements(p, a);
        d2 += dd * dd;
      }
      ok = d2 >= r_sep * r_sep;
    }
    if (!ok) continue;
    for (int a = 0; a < dim; ++a) m.placements(placed, a) = c[a];
    ++placed;
  }
  require(placed == N, "packing-failed",
          "placed " + std::to_string(placed) + " of " + std::to_string(N) + " instances");

  for (int i = 0; i < N; ++i) m.rotations.push_back(haar_rotation(dim, rng));

  // Paint each rotated instance into its disjoint window.
  for (int i = 0; i < N; ++i) {
    Eigen::Matrix3d rinv = Eigen::Matrix3d::Identity();
    rinv.topLeftCorner(dim, dim) = m.rotations[size_t(i)].transpose();
    Vector3d c = Vector3d::Zero();
    for (int a = 0; a < dim; ++a) c[a] = m.placements(i, a);
    std::array<int, 3> lo{0, 0, 0}, hi{0, 0, 1};
    for (int a = 0; a < dim; ++a) {
      const double center_idx = c[a] / h + 0.5 * (m.grid.shape[a] - 1);
      lo[size_t(a)] = std::max(0, int(std::floor(center_idx - R / h - 2)));
      hi[size_t(a)] = std::min(m.grid.shape[a], int(std::ceil(center_idx + R / h + 3)));
    }
    if (dim == 2) {
      lo[2] = 0;
      hi[2] = 1;
    }
    for (int ix = lo[0]; ix < hi[0]; ++ix)
      for (int jy = lo[1]; jy < hi[1]; ++jy)
        for (int kz = lo[2]; kz < hi[2]; ++kz) {
          const Vector3d x = m.grid.coord(ix, jy, kz) - c;
          if (x.norm() > R + 2 * h) continue;
          m.grid.at(ix, jy, kz) += grids::sample(f, rinv * x);
        }
  }
  if (sigma > 0) {
    const double noise_std = sigma / std::pow(h, dim / 2.0);
    for (long p = 0; p < m.grid.size(); ++p) m.grid.values[p] += noise_std * rng.normal();
  }
  return m;
}

double mtd_autocorr(const Micrograph& m, const LagTuple& lags) {
  require(lags.order() >= 1 && lags.order() <= 5, "bad-argument", "lag order must be 1..5");
  const double inner = 0.5 * (m.grid.shape[0] - 1) * m.grid.spacing;
  const double sum = product_sum(m.grid, lags, inner) * m.grid.cell_volume();
  return sum / std::pow(2.0 * m.M * m.grid.support_radius, m.grid.dim);
}

double unmix_mtd(double a_value, double chi_value, double gamma) {
  require(gamma > 0.0, "bad-argument", "unmix_mtd needs gamma > 0");
  return (a_value - (1.0 - gamma) * chi_value) / gamma;
}

}  // namespace orbit::observe
