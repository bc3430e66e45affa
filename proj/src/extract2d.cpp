#include "orbit/extract2d.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "orbit/fft.hpp"
#include "orbit/parallel.hpp"

namespace orbit::extract2d {

namespace {

using grids::Grid;
using json = nlohmann::json;

int wrap(int m, int n) { return ((m % n) + n) % n; }

// Spectral conventions used throughout this module, with c the unitary
// angular DFT of a ring signal:
//   pair table   spec2(q1,q2)[m]   = sum_j w_j conj(c_q1[m]) c_q2[m]
//     synthesizes G2(dphi) = sum_j w_j (1/N) sum_l a_q1(l) a_q2(l+dphi)
//     through slice(dphi) = (1/N) sum_m spec[m] e^{i m dphi}
//   triple table spec3(a,b,c)[m1,m2] = N^{-3/2} sum_j w_j c_b[m1] c_c[m2] conj(c_a[m1+m2])
//     synthesizes G3(d1,d2) = sum_j w_j (1/N) sum_l a_a(l) a_b(l+d1) a_c(l+d2)
//     via P(d1,d2) = sum_{m1,m2} S[m1,m2] e^{2 pi i (m1 d1 + m2 d2)/N}.

// Per-spec precomputation: ring/boundary offsets and triple layout.
struct Geometry {
  int N = 0, Ntheta = 0, R = 0, K = -1;  // K: centered half-width, -1 = full tables
  MatrixXd ring_dx, ring_dy;             // R x N physical offsets
  VectorXd b0x, b0y, b1x, b1y;
  MatrixXd lambda;
  std::vector<std::array<int, 3>> triples;
  VectorXd radii;
  double boundary_radius = 0.0;

  int spec_rows() const { return K < 0 ? N : 2 * K + 1; }
};

Geometry make_geometry(const Grid& grid, const PolarSpec2D& spec) {
  require(spec.N_phi > 0 && spec.N_phi % 2 == 0, "bad-argument", "N_phi must be positive even");
  require(spec.delta > 0.0 && spec.delta < 1.0, "bad-argument", "delta must lie in (0,1)");
  for (int q = 1; q < spec.R_max; ++q) {
    require(spec.ring_radii[q] > spec.ring_radii[q - 1], "bad-argument",
            "ring radii must increase");
  }
  require(spec.ring_radii[spec.R_max - 1] <= grid.support_radius + 1e-9, "bad-argument",
          "ring radii exceed the support radius");
  Geometry g;
  g.N = spec.N_phi;
  g.Ntheta = spec.N_theta;
  g.R = spec.R_max;
  g.K = spec.m_cut > 0 ? std::min(spec.m_cut, spec.N_phi / 2 - 1) : -1;
  g.lambda = spec.translation_grid;
  g.triples = spec.triples;
  g.radii = spec.ring_radii;
  g.boundary_radius = grid.support_radius * (1.0 - spec.delta);

  g.ring_dx.resize(g.R, g.N);
  g.ring_dy.resize(g.R, g.N);
  for (int q = 0; q < g.R; ++q) {
    for (int l = 0; l < g.N; ++l) {
      const double phi = kTwoPi * l / g.N;
      g.ring_dx(q, l) = spec.ring_radii[q] * std::cos(phi);
      g.ring_dy(q, l) = spec.ring_radii[q] * std::sin(phi);
    }
  }
  g.b0x.resize(g.Ntheta);
  g.b0y.resize(g.Ntheta);
  g.b1x.resize(g.Ntheta);
  g.b1y.resize(g.Ntheta);
  for (int k = 0; k < g.Ntheta; ++k) {
    const double th = kTwoPi * k / g.Ntheta;
    g.b0x[k] = g.boundary_radius * std::cos(th);
    g.b0y[k] = g.boundary_radius * std::sin(th);
    g.b1x[k] = -g.b0x[k];
    g.b1y[k] = -g.b0y[k];
  }
  return g;
}

// Branch-light bilinear reader for the hot sampling loops (0 outside).
struct Fast2D {
  const double* v;
  int nx, ny;
  double cx, cy, inv_h;
  explicit Fast2D(const Grid& g)
      : v(g.values.data()),
        nx(g.shape[0]),
        ny(g.shape[1]),
        cx(0.5 * (g.shape[0] - 1)),
        cy(0.5 * (g.shape[1] - 1)),
        inv_h(1.0 / g.spacing) {}
  double operator()(double x, double y) const {
    const double fx = x * inv_h + cx;
    const double fy = y * inv_h + cy;
    const int i0 = int(std::floor(fx));
    const int j0 = int(std::floor(fy));
    if (i0 < 0 || j0 < 0 || i0 + 1 >= nx || j0 + 1 >= ny) {
      if (i0 < -1 || j0 < -1 || i0 > nx - 1 || j0 > ny - 1) return 0.0;
      // border cell: fall back to the zero-padded generic rule
      const double ax = fx - i0, ay = fy - j0;
      auto at = [&](int i, int j) -> double {
        return (i < 0 || i >= nx || j < 0 || j >= ny) ? 0.0 : v[long(i) * ny + j];
      };
      return (1 - ax) * ((1 - ay) * at(i0, j0) + ay * at(i0, j0 + 1)) +
             ax * ((1 - ay) * at(i0 + 1, j0) + ay * at(i0 + 1, j0 + 1));
    }
    const double ax = fx - i0, ay = fy - j0;
    const double* p = v + long(i0) * ny + j0;
    return (1 - ax) * ((1 - ay) * p[0] + ay * p[1]) + ax * ((1 - ay) * p[ny] + ay * p[ny + 1]);
  }
};

MatrixXd sample_rings(const Grid& grid, double tx, double ty, const Geometry& g) {
  const Fast2D f(grid);
  MatrixXd rings(g.R, g.N);
  for (int q = 0; q < g.R; ++q) {
    for (int l = 0; l < g.N; ++l) {
      rings(q, l) = f(tx + g.ring_dx(q, l), ty + g.ring_dy(q, l));
    }
  }
  return rings;
}

MatrixXcd ring_spectra(const MatrixXd& rings) {
  MatrixXcd spec(rings.rows(), rings.cols());
  for (int q = 0; q < rings.rows(); ++q) {
    spec.row(q) = unitary_fft(rings.row(q).transpose()).transpose();
  }
  return spec;
}

double boundary_weight_at(const Grid& grid, double tx, double ty, const Geometry& g) {
  const Fast2D f(grid);
  double acc = 0.0;
  for (int k = 0; k < g.Ntheta; ++k) {
    acc += f(tx + g.b0x[k], ty + g.b0y[k]) * f(tx + g.b1x[k], ty + g.b1y[k]);
  }
  return acc * kTwoPi / g.Ntheta;
}

// ---- Wick correction kernels (empirical path) ------------------------------
//
// White noise read through bilinear interpolation is correlated between nearby
// off-grid points: Cov = (sigma^2/h^2) B(p,p') with B the stencil overlap.
// Kernels carry the ring-averaged overlap G(q1,q2,s) = (1/N) sum_l B(p_{q1,l},
// p_{q2,l+s}) as spectra g[m] = (1/N) sum_s G(s) e^{-2 pi i m s/N}.

double axis_overlap(double a, double b) {
  const double fa = std::floor(a), fb = std::floor(b);
  const double xa = a - fa, xb = b - fb;
  const int d = int(fb - fa);
  if (d == 0) return (1 - xa) * (1 - xb) + xa * xb;
  if (d == 1) return xa * (1 - xb);
  if (d == -1) return xb * (1 - xa);
  return 0.0;
}

MatrixXcd wick_kernel_spectra(const Grid& geom_grid, double tx, double ty, const Geometry& g,
                              const std::vector<std::pair<int, int>>& pairs) {
  const double h = geom_grid.spacing;
  const int N = g.N;
  MatrixXcd out = MatrixXcd::Zero(long(pairs.size()), N);
  const double cx = 0.5 * (geom_grid.shape[0] - 1);
  const double cy = 0.5 * (geom_grid.shape[1] - 1);
  VectorXd G(N);
  for (size_t p = 0; p < pairs.size(); ++p) {
    const int q1 = pairs[p].first, q2 = pairs[p].second;
    const double r1 = g.radii[q1], r2 = g.radii[q2];
    G.setZero();
    bool any = false;
    for (int s = 0; s < N; ++s) {
      const int sw = s <= N / 2 ? s : s - N;
      const double ang = kTwoPi * std::abs(sw) / N;
      const double chord2 = r1 * r1 + r2 * r2 - 2 * r1 * r2 * std::cos(ang);
      if (chord2 > 9.0 * h * h) continue;  // stencils cannot overlap
      double acc = 0.0;
      for (int l = 0; l < N; ++l) {
        const int l2 = wrap(l + s, N);
        const double ax = (tx + g.ring_dx(q1, l)) / h + cx;
        const double ay = (ty + g.ring_dy(q1, l)) / h + cy;
        const double bx = (tx + g.ring_dx(q2, l2)) / h + cx;
        const double by = (ty + g.ring_dy(q2, l2)) / h + cy;
        acc += axis_overlap(ax, bx) * axis_overlap(ay, by);
      }
      if (acc != 0.0) {
        G[s] = acc / N;
        any = true;
      }
    }
    if (!any) continue;
    for (int m = 0; m < N; ++m) {
      cplx z = 0.0;
      for (int s = 0; s < N; ++s) {
        if (G[s] != 0.0) z += G[s] * std::polar(1.0, -kTwoPi * double(m) * s / N);
      }
      out(long(p), m) = z / double(N);
    }
  }
  return out;
}

// ---- accumulation ----------------------------------------------------------

struct GammaPack {
  Gamma2 g2;
  Gamma3 g3;
  double d_hat = 0.0;
  long n_items = 0;
  bool wick = false;
  VectorXd s_tot;                  // per translation
  std::vector<VectorXcd> pattern;  // 3 per stored triple, length N

  void merge(GammaPack& other) {
    for (size_t p = 0; p < g2.pair_spec.size(); ++p) g2.pair_spec[p] += other.g2.pair_spec[p];
    for (size_t t = 0; t < g3.spec.size(); ++t) g3.spec[t] += other.g3.spec[t];
    d_hat += other.d_hat;
    n_items += other.n_items;
    if (wick) {
      s_tot += other.s_tot;
      for (size_t i = 0; i < pattern.size(); ++i) pattern[i] += other.pattern[i];
    }
  }
};

GammaPack make_pack(const Geometry& g, bool wick) {
  GammaPack pack;
  pack.g2.N_phi = g.N;
  pack.g2.R = g.R;
  const long npairs = Gamma2::pair_index(g.R - 1, g.R - 1, g.R) + 1;
  pack.g2.pair_spec.assign(size_t(npairs), VectorXcd::Zero(g.N / 2 + 1));
  pack.g3.N_phi = g.N;
  pack.g3.m_cut = g.K < 0 ? 0 : g.K;
  pack.g3.triples = g.triples;
  const int rows = g.spec_rows();
  pack.g3.spec.assign(g.triples.size(), MatrixXcd::Zero(rows, rows));
  pack.wick = wick;
  if (wick) {
    pack.s_tot = VectorXd::Zero(g.lambda.rows());
    pack.pattern.assign(g.triples.size() * 3, VectorXcd::Zero(g.N));
  }
  return pack;
}

void accumulate_spectra(GammaPack& pack, const Geometry& g, const MatrixXcd& C, double w) {
  const int N = g.N;
  const int Nh = N / 2;
  for (int q1 = 0; q1 < g.R; ++q1) {
    for (int q2 = q1; q2 < g.R; ++q2) {
      auto& acc = pack.g2.pair_spec[size_t(Gamma2::pair_index(q1, q2, g.R))];
      acc.array() += w * C.row(q1).head(Nh + 1).conjugate().array() * C.row(q2).head(Nh + 1).array();
    }
  }
  if (g.triples.empty()) return;
  const double scale = std::pow(double(N), -1.5);
  if (g.K < 0) {
    const MatrixXcd Cc = C.conjugate();
    for (size_t t = 0; t < g.triples.size(); ++t) {
      const auto [a, b, c] = g.triples[t];
      MatrixXcd& S = pack.g3.spec[t];
      for (int m1 = 0; m1 < N; ++m1) {
        const cplx f = w * scale * C(b, m1);
        // conj(c_a[m1+m2]) splits at the wrap point
        const int tail = N - m1;
        S.row(m1).head(tail).array() +=
            f * C.row(c).head(tail).array() * Cc.row(a).segment(m1, tail).array();
        if (m1 > 0) {
          S.row(m1).tail(m1).array() += f * C.row(c).tail(m1).array() * Cc.row(a).head(m1).array();
        }
      }
    }
  } else {
    const int K = g.K;
    MatrixXcd E(g.R, 4 * K + 1);  // E(q,j) = c_q[j-2K]
    for (int q = 0; q < g.R; ++q)
      for (int j = 0; j <= 4 * K; ++j) E(q, j) = C(q, wrap(j - 2 * K, N));
    for (size_t t = 0; t < g.triples.size(); ++t) {
      const auto [a, b, c] = g.triples[t];
      MatrixXcd& S = pack.g3.spec[t];
      const auto Cq = E.row(c).segment(K, 2 * K + 1);
      for (int m1 = -K; m1 <= K; ++m1) {
        const cplx f = w * scale * E(b, m1 + 2 * K);
        S.row(m1 + K).array() +=
            f * Cq.array() * E.row(a).segment(m1 + K, 2 * K + 1).conjugate().array();
      }
    }
  }
}

void accumulate_wick(GammaPack& pack, const Geometry& g, const MatrixXcd& C, double w,
                     long t_index, const MatrixXcd& kernels, const std::vector<int>& pair_slot) {
  const int N = g.N;
  pack.s_tot[t_index] += w;
  auto slot = [&](int a, int b) {
    return pair_slot[size_t(std::min(a, b)) * size_t(g.R) + size_t(std::max(a, b))];
  };
  const double inv_sqrt_n = 1.0 / std::sqrt(double(N));
  for (size_t t = 0; t < g.triples.size(); ++t) {
    const auto [a, b, c] = g.triples[t];
    const double mean_a = C(a, 0).real() * inv_sqrt_n;
    const double mean_b = C(b, 0).real() * inv_sqrt_n;
    const double mean_c = C(c, 0).real() * inv_sqrt_n;
    const int s_ab = slot(a, b), s_ac = slot(a, c), s_bc = slot(b, c);
    if (s_ab >= 0) pack.pattern[t * 3 + 0] += (w * mean_c) * kernels.row(s_ab).transpose();
    if (s_ac >= 0) pack.pattern[t * 3 + 1] += (w * mean_b) * kernels.row(s_ac).transpose();
    if (s_bc >= 0) pack.pattern[t * 3 + 2] += (w * mean_a) * kernels.row(s_bc).transpose();
  }
}

Moment2_2D normalize_m2(const Gamma2& g2, const VectorXd& radii, double D) {
  Moment2_2D m;
  m.ring_radii = radii;
  m.N_phi = g2.N_phi;
  m.slices.reserve(g2.pair_spec.size());
  for (const auto& spec : g2.pair_spec) {
    VectorXcd full(g2.N_phi);
    for (int mm = 0; mm <= g2.N_phi / 2; ++mm) full[mm] = spec[mm];
    for (int mm = g2.N_phi / 2 + 1; mm < g2.N_phi; ++mm) full[mm] = std::conj(spec[g2.N_phi - mm]);
    VectorXcd plane = dft_inverse(full);  // slice(D) = (1/N) sum_m spec[m] e^{imD}
    m.slices.push_back(plane.real() / D);
  }
  return m;
}

Moment3_2D normalize_m3(const Gamma3& g3, const VectorXd& radii, double D) {
  Moment3_2D m;
  m.ring_radii = radii;
  m.N_phi = g3.N_phi;
  m.m_cut = g3.m_cut;
  m.triples = g3.triples;
  m.spec.reserve(g3.spec.size());
  for (const auto& S : g3.spec) m.spec.push_back(S / D);
  return m;
}

GammaPack run_single_image(const Grid& grid, const PolarSpec2D& spec, const Geometry& g,
                           const VectorXd& weights) {
  const long n_t = spec.n_translations();
  return chunked_reduce<GammaPack>(
      n_t, 64, [&] { return make_pack(g, false); },
      [&](GammaPack& pack, long j) {
        if (weights[j] == 0.0) return;
        const MatrixXd rings = sample_rings(grid, g.lambda(j, 0), g.lambda(j, 1), g);
        const MatrixXcd C = ring_spectra(rings);
        accumulate_spectra(pack, g, C, weights[j]);
        pack.d_hat += weights[j];
        pack.n_items += 1;
      },
      [](GammaPack& a, GammaPack& b) { a.merge(b); });
}

}  // namespace

PolarSpec2D make_polar_spec(const Grid& grid, int R_max, int N_phi, int N_theta, double delta,
                            double margin_px, bool diagonal_triples_only, int m_cut) {
  require(R_max >= 1, "bad-argument", "R_max must be >= 1");
  require(double(R_max) * grid.spacing <= grid.support_radius + 1e-12, "bad-argument",
          "pixel rings exceed the support radius; reduce R_max");
  PolarSpec2D spec;
  spec.R_max = R_max;
  spec.ring_radii.resize(R_max);
  for (int q = 0; q < R_max; ++q) spec.ring_radii[q] = (q + 1) * grid.spacing;
  spec.N_phi = N_phi;
  spec.N_theta = N_theta;
  spec.delta = delta;
  spec.m_cut = m_cut;

  const double R = grid.support_radius;
  const double radius =
      R * std::sqrt(std::max(0.0, 1.0 - (1.0 - delta) * (1.0 - delta))) + margin_px * grid.spacing;
  const int n_px = int(std::floor(radius / grid.spacing));
  std::vector<Vector2d> centers;
  for (int i = -n_px; i <= n_px; ++i) {
    for (int j = -n_px; j <= n_px; ++j) {
      const double x = i * grid.spacing, y = j * grid.spacing;
      if (x * x + y * y <= radius * radius) centers.push_back({x, y});
    }
  }
  spec.translation_grid.resize(long(centers.size()), 2);
  for (size_t c = 0; c < centers.size(); ++c) spec.translation_grid.row(long(c)) = centers[c];

  if (diagonal_triples_only) {
    for (int q = 0; q < R_max; ++q) spec.triples.push_back({q, q, q});
  } else {
    for (int a = 0; a < R_max; ++a)
      for (int b = a; b < R_max; ++b)
        for (int c = b; c < R_max; ++c) spec.triples.push_back({a, b, c});
  }
  return spec;
}

MatrixXd ring_signals(const Grid& grid, const Vector2d& center, const PolarSpec2D& spec) {
  Geometry g = make_geometry(grid, spec);
  return sample_rings(grid, center[0], center[1], g);
}

BoundaryWeights boundary_weights(const Grid& grid, const PolarSpec2D& spec) {
  Geometry g = make_geometry(grid, spec);
  BoundaryWeights bw;
  bw.s.resize(spec.n_translations());
  parallel_for(spec.n_translations(), [&](long j) {
    bw.s[j] = boundary_weight_at(grid, g.lambda(j, 0), g.lambda(j, 1), g);
  });
  bw.D = bw.s.sum();
  require(bw.D != 0.0, "degenerate-boundary",
          "boundary weights vanish; antipodal-correlation assumption violated numerically");
  return bw;
}

VectorXd Gamma2::real_slice(int q1, int q2) const {
  const auto& spec = pair_spec[size_t(pair_index(std::min(q1, q2), std::max(q1, q2), R))];
  VectorXcd full(N_phi);
  for (int m = 0; m <= N_phi / 2; ++m) full[m] = spec[m];
  for (int m = N_phi / 2 + 1; m < N_phi; ++m) full[m] = std::conj(spec[N_phi - m]);
  if (q1 > q2) full = full.conjugate().eval();
  VectorXcd plane = dft_inverse(full);
  return plane.real();
}

double Gamma2::max_imag() const {
  double mx = 0.0;
  for (const auto& spec : pair_spec) {
    VectorXcd full(N_phi);
    for (int m = 0; m <= N_phi / 2; ++m) full[m] = spec[m];
    for (int m = N_phi / 2 + 1; m < N_phi; ++m) full[m] = std::conj(spec[N_phi - m]);
    VectorXcd plane = dft_inverse(full);
    mx = std::max(mx, plane.imag().cwiseAbs().maxCoeff());
  }
  return mx;
}

Gamma2 gamma2_fft(const Grid& grid, const PolarSpec2D& spec, const VectorXd& weights) {
  Geometry g = make_geometry(grid, spec);
  require(weights.size() == spec.n_translations(), "bad-argument", "weights/Lambda size mismatch");
  GammaPack pack = run_single_image(grid, spec, g, weights);
  return std::move(pack.g2);
}

Gamma3 gamma3_fft(const Grid& grid, const PolarSpec2D& spec, const VectorXd& weights) {
  Geometry g = make_geometry(grid, spec);
  require(weights.size() == spec.n_translations(), "bad-argument", "weights/Lambda size mismatch");
  GammaPack pack = run_single_image(grid, spec, g, weights);
  return std::move(pack.g3);
}

int Moment3_2D::triple_index(std::array<int, 3> sorted) const {
  for (size_t t = 0; t < triples.size(); ++t)
    if (triples[t] == sorted) return int(t);
  return -1;
}

cplx Moment3_2D::spec_at(int t, int m1, int m2) const {
  const MatrixXcd& S = spec[size_t(t)];
  if (m_cut == 0) return S(wrap(m1, N_phi), wrap(m2, N_phi));
  const int K = (int(S.rows()) - 1) / 2;
  if (std::abs(m1) > K || std::abs(m2) > K) return 0.0;
  return S(m1 + K, m2 + K);
}

MatrixXd Moment3_2D::plane(int t) const {
  MatrixXcd full = MatrixXcd::Zero(N_phi, N_phi);
  if (m_cut == 0) {
    full = spec[size_t(t)];
  } else {
    const int K = (int(spec[size_t(t)].rows()) - 1) / 2;
    for (int m1 = -K; m1 <= K; ++m1)
      for (int m2 = -K; m2 <= K; ++m2)
        full(wrap(m1, N_phi), wrap(m2, N_phi)) = spec[size_t(t)](m1 + K, m2 + K);
  }
  MatrixXcd tmp(N_phi, N_phi);
  for (int r = 0; r < N_phi; ++r)
    tmp.row(r) = (dft_inverse(full.row(r).transpose()) * double(N_phi)).transpose();
  MatrixXd P(N_phi, N_phi);
  for (int c = 0; c < N_phi; ++c) {
    VectorXcd col = dft_inverse(VectorXcd(tmp.col(c))) * double(N_phi);
    P.col(c) = col.real();
  }
  return P;
}

double Moment3_2D::value(int q1, int q2, int q3, int i1, int i2) const {
  std::array<int, 3> rings{q1, q2, q3};
  std::array<int, 3> offs{0, i1, i2};
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return rings[size_t(a)] < rings[size_t(b)]; });
  const std::array<int, 3> sorted{rings[size_t(order[0])], rings[size_t(order[1])],
                                  rings[size_t(order[2])]};
  const int t = triple_index(sorted);
  require(t >= 0, "missing-triple", "ring triple not stored");
  const int oA = offs[size_t(order[0])], oB = offs[size_t(order[1])], oC = offs[size_t(order[2])];
  const int d1 = wrap(oB - oA, N_phi), d2 = wrap(oC - oA, N_phi);
  cplx acc = 0.0;
  const MatrixXcd& S = spec[size_t(t)];
  if (m_cut == 0) {
    for (int m1 = 0; m1 < N_phi; ++m1)
      for (int m2 = 0; m2 < N_phi; ++m2)
        acc += S(m1, m2) * std::polar(1.0, kTwoPi * (double(m1) * d1 + double(m2) * d2) / N_phi);
  } else {
    const int K = (int(S.rows()) - 1) / 2;
    for (int m1 = -K; m1 <= K; ++m1)
      for (int m2 = -K; m2 <= K; ++m2)
        acc += S(m1 + K, m2 + K) *
               std::polar(1.0, kTwoPi * (double(m1) * d1 + double(m2) * d2) / N_phi);
  }
  return acc.real();
}

std::pair<Moment2_2D, Moment3_2D> extract_moments_2d(const Grid& grid, const PolarSpec2D& spec) {
  Geometry g = make_geometry(grid, spec);
  BoundaryWeights bw = boundary_weights(grid, spec);
  GammaPack pack = run_single_image(grid, spec, g, bw.s);
  return {normalize_m2(pack.g2, spec.ring_radii, bw.D),
          normalize_m3(pack.g3, spec.ring_radii, bw.D)};
}

std::pair<Moment2_2D, Moment3_2D> so2_moments_direct(const Grid& grid, const PolarSpec2D& spec,
                                                     int N_rot) {
  require(N_rot >= spec.N_phi, "bad-argument", "N_rot must be >= N_phi");
  const int N = spec.N_phi;
  const int Nr = ((N_rot + N - 1) / N) * N;
  const int R = spec.R_max;

  MatrixXd dense(R, Nr);
  const Fast2D f(grid);
  for (int q = 0; q < R; ++q) {
    for (int k = 0; k < Nr; ++k) {
      const double phi = kTwoPi * k / Nr;
      dense(q, k) = f(spec.ring_radii[q] * std::cos(phi), spec.ring_radii[q] * std::sin(phi));
    }
  }
  MatrixXcd B(R, Nr);
  for (int q = 0; q < R; ++q) B.row(q) = unitary_fft(dense.row(q).transpose()).transpose();

  Moment2_2D m2;
  m2.ring_radii = spec.ring_radii;
  m2.N_phi = N;
  const long npairs = Gamma2::pair_index(R - 1, R - 1, R) + 1;
  m2.slices.assign(size_t(npairs), VectorXd::Zero(N));
  for (int q1 = 0; q1 < R; ++q1) {
    for (int q2 = q1; q2 < R; ++q2) {
      auto& slice = m2.slices[size_t(Gamma2::pair_index(q1, q2, R))];
      for (int s = 0; s < N; ++s) {
        // mean_k b1(k) b2(k + stride*s), stride = Nr/N
        cplx acc = 0.0;
        for (int m = 0; m < Nr; ++m) {
          acc += std::conj(B(q1, m)) * B(q2, m) * std::polar(1.0, kTwoPi * double(m) * s / N);
        }
        slice[s] = acc.real() / double(Nr);
      }
    }
  }

  Moment3_2D m3;
  m3.ring_radii = spec.ring_radii;
  m3.N_phi = N;
  m3.m_cut = spec.m_cut > 0 ? std::min(spec.m_cut, N / 2 - 1) : 0;
  m3.triples = spec.triples;
  const double scale = std::pow(double(Nr), -1.5);
  for (size_t t = 0; t < spec.triples.size(); ++t) {
    const auto [a, b, c] = spec.triples[t];
    MatrixXcd Sfull = MatrixXcd::Zero(N, N);
    // S[n1,n2] = Nr^{-3/2} sum_{m1 = n1 (N), m2 = n2 (N)} B_b[m1] B_c[m2] conj(B_a[m1+m2])
    for (int m1 = 0; m1 < Nr; ++m1) {
      const cplx fb = scale * B(b, m1);
      for (int m2 = 0; m2 < Nr; ++m2) {
        Sfull(m1 % N, m2 % N) += fb * B(c, m2) * std::conj(B(a, (m1 + m2) % Nr));
      }
    }
    if (m3.m_cut == 0) {
      m3.spec.push_back(Sfull);
    } else {
      const int K = m3.m_cut;
      MatrixXcd Sc(2 * K + 1, 2 * K + 1);
      for (int u = -K; u <= K; ++u)
        for (int v = -K; v <= K; ++v) Sc(u + K, v + K) = Sfull(wrap(u, N), wrap(v, N));
      m3.spec.push_back(Sc);
    }
  }
  return {m2, m3};
}

EmpiricalMoments2D extract_moments_2d_empirical(const observe::SeObservationSet& set,
                                                const PolarSpec2D& spec) {
  require(set.count() > 0, "empty-set", "empirical extraction needs observations");
  const Grid& g0 = set.observations[0];
  Geometry g = make_geometry(g0, spec);
  const bool wick = set.sigma > 0.0;

  std::vector<std::pair<int, int>> wpairs;
  std::vector<int> pair_slot(size_t(g.R) * size_t(g.R), -1);
  std::vector<MatrixXcd> kernels;
  if (wick) {
    const double h = g0.spacing;
    for (int a = 0; a < g.R; ++a)
      for (int b = a; b < g.R; ++b)
        if (std::abs(spec.ring_radii[a] - spec.ring_radii[b]) <= 3.0 * h) {
          pair_slot[size_t(a) * size_t(g.R) + size_t(b)] = int(wpairs.size());
          wpairs.push_back({a, b});
        }
    kernels.resize(size_t(spec.n_translations()));
    parallel_for(spec.n_translations(), [&](long j) {
      kernels[size_t(j)] = wick_kernel_spectra(g0, g.lambda(j, 0), g.lambda(j, 1), g, wpairs);
    });
  }

  GammaPack total = chunked_reduce<GammaPack>(
      set.count(), 128, [&] { return make_pack(g, wick); },
      [&](GammaPack& pack, long i) {
        const Grid& obs = set.observations[size_t(i)];
        for (long j = 0; j < spec.n_translations(); ++j) {
          const double w = boundary_weight_at(obs, g.lambda(j, 0), g.lambda(j, 1), g);
          const MatrixXd rings = sample_rings(obs, g.lambda(j, 0), g.lambda(j, 1), g);
          const MatrixXcd C = ring_spectra(rings);
          accumulate_spectra(pack, g, C, w);
          if (wick) accumulate_wick(pack, g, C, w, j, kernels[size_t(j)], pair_slot);
          pack.d_hat += w;
        }
        pack.n_items += 1;
      },
      [](GammaPack& a, GammaPack& b) { a.merge(b); });

  require(total.d_hat != 0.0, "degenerate-boundary", "accumulated boundary weights vanish");

  if (wick) {
    const double noise_pow = set.sigma * set.sigma / g0.cell_volume();
    const int N = g.N;
    // second order: spectral bias is N * g[m] per unit boundary weight
    for (size_t p = 0; p < wpairs.size(); ++p) {
      auto& acc =
          total.g2.pair_spec[size_t(Gamma2::pair_index(wpairs[p].first, wpairs[p].second, g.R))];
      VectorXcd bias = VectorXcd::Zero(N / 2 + 1);
      for (long j = 0; j < spec.n_translations(); ++j) {
        bias += total.s_tot[j] * kernels[size_t(j)].row(long(p)).head(N / 2 + 1).transpose();
      }
      acc -= (noise_pow * double(N)) * bias;
    }
    // third order: coincidence patterns live on spectral lines
    for (size_t t = 0; t < g.triples.size(); ++t) {
      MatrixXcd& S = total.g3.spec[t];
      const auto& P0 = total.pattern[t * 3 + 0];  // (slot1,slot2): column m2 = 0
      const auto& P1 = total.pattern[t * 3 + 1];  // (slot1,slot3): row m1 = 0
      const auto& P2 = total.pattern[t * 3 + 2];  // (slot2,slot3): line m1 = -m2
      if (g.K < 0) {
        for (int m1 = 0; m1 < N; ++m1) S(m1, 0) -= noise_pow * P0[m1];
        for (int m2 = 0; m2 < N; ++m2) S(0, m2) -= noise_pow * P1[m2];
        for (int m2 = 0; m2 < N; ++m2) S(wrap(-m2, N), m2) -= noise_pow * P2[m2];
      } else {
        const int K = g.K;
        for (int m1 = -K; m1 <= K; ++m1) S(m1 + K, K) -= noise_pow * P0[wrap(m1, N)];
        for (int m2 = -K; m2 <= K; ++m2) S(K, m2 + K) -= noise_pow * P1[wrap(m2, N)];
        for (int m2 = -K; m2 <= K; ++m2) S(K - m2, m2 + K) -= noise_pow * P2[wrap(m2, N)];
      }
    }
  }

  EmpiricalMoments2D out;
  out.n_observations = set.count();
  out.D_hat = total.d_hat;
  out.m2 = normalize_m2(total.g2, spec.ring_radii, total.d_hat);
  out.m3 = normalize_m3(total.g3, spec.ring_radii, total.d_hat);
  const double inv = 1.0 / double(set.count());
  for (auto& v : total.g2.pair_spec) v *= inv;
  for (auto& s : total.g3.spec) s *= inv;
  out.gamma2 = std::move(total.g2);
  out.gamma3 = std::move(total.g3);
  return out;
}

double moment2_mse(const Moment2_2D& truth, const Moment2_2D& other) {
  require(truth.N_phi == other.N_phi && truth.R() == other.R(), "shape-mismatch",
          "moment2_mse shape mismatch");
  double num = 0.0, den = 0.0;
  for (int q1 = 0; q1 < truth.R(); ++q1) {
    for (int q2 = q1; q2 < truth.R(); ++q2) {
      const double wgt = q1 == q2 ? 1.0 : 2.0;  // ordered-pair multiplicity
      const auto& a = truth.stored(q1, q2);
      const auto& b = other.stored(q1, q2);
      num += wgt * (a - b).squaredNorm();
      den += wgt * a.squaredNorm();
    }
  }
  require(den > 0.0, "zero-reference", "moment2_mse reference is zero");
  return num / den;
}

double moment3_mse(const Moment3_2D& truth, const Moment3_2D& other) {
  require(truth.N_phi == other.N_phi && truth.triples == other.triples &&
              truth.m_cut == other.m_cut,
          "shape-mismatch", "moment3_mse layout mismatch");
  // Parseval: plane norms are N^2 x spectral norms, so the ratio needs no factor.
  double num = 0.0, den = 0.0;
  for (size_t t = 0; t < truth.triples.size(); ++t) {
    const auto [a, b, c] = truth.triples[t];
    double wgt = 6.0;  // ordered-triple multiplicity
    if (a == b && b == c)
      wgt = 1.0;
    else if (a == b || b == c || a == c)
      wgt = 3.0;
    num += wgt * (truth.spec[t] - other.spec[t]).squaredNorm();
    den += wgt * truth.spec[t].squaredNorm();
  }
  require(den > 0.0, "zero-reference", "moment3_mse reference is zero");
  return num / den;
}

// ---- serialization ---------------------------------------------------------

void save_moment2(const Moment2_2D& m, double delta, const std::string& path) {
  const int R = m.R();
  Grid payload;
  payload.dim = 3;
  payload.shape = {R, R, m.N_phi};
  payload.spacing = 1.0;
  payload.support_radius = m.ring_radii[R - 1];
  payload.values.resize(payload.size());
  for (int a = 0; a < R; ++a)
    for (int b = 0; b < R; ++b)
      for (int k = 0; k < m.N_phi; ++k) payload.values[payload.index(a, b, k)] = m.value(a, b, k);
  grids::save_grid(payload, path);
  json side;
  side["order"] = 2;
  side["ring_radii"] = std::vector<double>(m.ring_radii.data(), m.ring_radii.data() + R);
  side["N_phi"] = m.N_phi;
  side["delta"] = delta;
  std::ofstream os(path + ".json");
  os << side.dump(2) << "\n";
}

Moment2_2D load_moment2(const std::string& path) {
  Grid payload = grids::load_grid(path);
  require(payload.dim == 3 && payload.shape[0] == payload.shape[1], "bad-magic",
          "not a second-order moment file");
  std::ifstream is(path + ".json");
  require(bool(is), "io", "missing sidecar for " + path);
  json side = json::parse(is);
  Moment2_2D m;
  const auto radii = side.at("ring_radii").get<std::vector<double>>();
  m.ring_radii = Eigen::Map<const VectorXd>(radii.data(), long(radii.size()));
  m.N_phi = side.at("N_phi").get<int>();
  const int R = int(radii.size());
  const long npairs = Gamma2::pair_index(R - 1, R - 1, R) + 1;
  m.slices.assign(size_t(npairs), VectorXd::Zero(m.N_phi));
  for (int a = 0; a < R; ++a)
    for (int b = a; b < R; ++b)
      for (int k = 0; k < m.N_phi; ++k)
        m.slices[size_t(Gamma2::pair_index(a, b, R))][k] = payload.values[payload.index(a, b, k)];
  return m;
}

void save_moment3(const Moment3_2D& m, double delta, const std::string& path) {
  const int T = int(m.triples.size());
  Grid payload;
  payload.dim = 3;
  payload.shape = {T, m.N_phi, m.N_phi};
  payload.spacing = 1.0;
  payload.support_radius = m.ring_radii[m.R() - 1];
  payload.values.resize(payload.size());
  for (int t = 0; t < T; ++t) {
    const MatrixXd P = m.plane(t);
    for (int i = 0; i < m.N_phi; ++i)
      for (int j = 0; j < m.N_phi; ++j) payload.values[payload.index(t, i, j)] = P(i, j);
  }
  grids::save_grid(payload, path);
  json side;
  side["order"] = 3;
  side["ring_radii"] = std::vector<double>(m.ring_radii.data(), m.ring_radii.data() + m.R());
  side["N_phi"] = m.N_phi;
  side["delta"] = delta;
  side["m_cut"] = m.m_cut;
  json triples = json::array();
  for (const auto& t : m.triples) triples.push_back({t[0], t[1], t[2]});
  side["triples"] = triples;
  std::ofstream os(path + ".json");
  os << side.dump(2) << "\n";
}

Moment3_2D load_moment3(const std::string& path) {
  Grid payload = grids::load_grid(path);
  require(payload.dim == 3 && payload.shape[1] == payload.shape[2], "bad-magic",
          "not a third-order moment file");
  std::ifstream is(path + ".json");
  require(bool(is), "io", "missing sidecar for " + path);
  json side = json::parse(is);
  Moment3_2D m;
  const auto radii = side.at("ring_radii").get<std::vector<double>>();
  m.ring_radii = Eigen::Map<const VectorXd>(radii.data(), long(radii.size()));
  m.N_phi = side.at("N_phi").get<int>();
  m.m_cut = side.at("m_cut").get<int>();
  for (const auto& t : side.at("triples"))
    m.triples.push_back({t[0].get<int>(), t[1].get<int>(), t[2].get<int>()});
  const int N = m.N_phi;
  for (int t = 0; t < payload.shape[0]; ++t) {
    MatrixXcd P(N, N);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) P(i, j) = payload.values[payload.index(t, i, j)];
    MatrixXcd tmp(N, N);
    for (int r = 0; r < N; ++r)
      tmp.row(r) = dft_forward(VectorXcd(P.row(r).transpose())).transpose() / double(N);
    MatrixXcd S(N, N);
    for (int c = 0; c < N; ++c) S.col(c) = dft_forward(VectorXcd(tmp.col(c))) / double(N);
    if (m.m_cut == 0) {
      m.spec.push_back(S);
    } else {
      const int K = std::min(m.m_cut, N / 2 - 1);
      MatrixXcd Sc(2 * K + 1, 2 * K + 1);
      for (int u = -K; u <= K; ++u)
        for (int v = -K; v <= K; ++v) Sc(u + K, v + K) = S(wrap(u, N), wrap(v, N));
      m.spec.push_back(Sc);
    }
  }
  return m;
}

}  // namespace orbit::extract2d
