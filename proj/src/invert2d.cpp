#include "orbit/invert2d.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "orbit/fft.hpp"
#include "orbit/parallel.hpp"

namespace orbit::invert2d {

namespace {

int wrap(int m, int n) { return ((m % n) + n) % n; }

double principal(double a) {
  while (a > kPi) a -= kTwoPi;
  while (a <= -kPi) a += kTwoPi;
  return a;
}

}  // namespace

VectorXd amplitudes_from_m2(const Moment2_2D& m2, int ring, int K, int* clamped) {
  const VectorXd& slice = m2.stored(ring, ring);
  require(slice.cwiseAbs().maxCoeff() > 0.0, "empty-ring",
          "second-moment slice is identically zero for ring " + std::to_string(ring));
  const int N = m2.N_phi;
  VectorXd amps(K + 1);
  int nclamp = 0;
  for (int m = 0; m <= K; ++m) {
    cplx acc = 0.0;
    for (int k = 0; k < N; ++k) acc += slice[k] * std::polar(1.0, -kTwoPi * double(m) * k / N);
    const double power = acc.real();
    if (power < 0.0) ++nclamp;
    amps[m] = std::sqrt(std::max(0.0, power));
  }
  if (clamped) *clamped = nclamp;
  return amps;
}

MatrixXcd per_ring_bispectrum(const Moment3_2D& m3, int ring, int K) {
  const int t = m3.triple_index({ring, ring, ring});
  require(t >= 0, "missing-triple", "diagonal triple not stored for ring " + std::to_string(ring));
  MatrixXcd B(2 * K + 1, 2 * K + 1);
  const double scale = std::pow(double(m3.N_phi), 1.5);
  for (int m1 = -K; m1 <= K; ++m1)
    for (int m2 = -K; m2 <= K; ++m2) B(m1 + K, m2 + K) = scale * m3.spec_at(t, m1, m2);
  return B;
}

VectorXd recover_phases(const MatrixXcd& bispec, const VectorXd& amplitudes, int K) {
  require(int(amplitudes.size()) >= K + 1, "bad-argument", "amplitude vector too short");
  const int Kb = (int(bispec.rows()) - 1) / 2;
  require(Kb >= K, "bad-argument", "bispectrum table smaller than requested cutoff");
  const double amax = amplitudes.maxCoeff();
  const double floor_amp = 1e-7 * amax;
  require(amplitudes[1] > 1e-9, "gauge-anchor-missing",
          "first harmonic amplitude vanishes; theta_1 = 0 gauge unusable");

  VectorXd theta = VectorXd::Zero(K + 1);
  // theta_0: sign of c[0] from B[m,-m] = |c[m]|^2 c[0].
  cplx dc = 0.0;
  for (int m = 1; m <= K; ++m) {
    if (amplitudes[m] <= floor_amp) continue;
    dc += bispec(m + Kb, -m + Kb);
  }
  theta[0] = (dc.real() < 0.0) ? kPi : 0.0;
  theta[1] = 0.0;
  for (int m = 2; m <= K; ++m) {
    if (amplitudes[m] <= floor_amp) {
      theta[m] = 0.0;
      continue;
    }
    cplx acc = 0.0;
    for (int j = 1; j < m; ++j) {
      const int k = m - j;
      if (amplitudes[j] <= floor_amp || amplitudes[k] <= floor_amp) continue;
      const cplx b = bispec(j + Kb, k + Kb);  // c[j] c[k] conj(c[m]) phase
      if (std::abs(b) == 0.0) continue;
      const double w = amplitudes[j] * amplitudes[k] * amplitudes[m];
      acc += w * std::polar(1.0, theta[j] + theta[k] - std::arg(b));
    }
    theta[m] = std::abs(acc) > 0.0 ? std::arg(acc) : 0.0;
  }
  return theta;
}

VectorXd assemble_ring(const RingSpectrum& spectrum, int N_phi) {
  VectorXcd full = VectorXcd::Zero(N_phi);
  for (int m = -spectrum.K; m <= spectrum.K; ++m) full[wrap(m, N_phi)] = spectrum.coeff(m);
  VectorXcd a = unitary_ifft(full);
  require(a.imag().cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + a.real().cwiseAbs().maxCoeff()),
          "conjugation-violated", "assembled ring is not real");
  return a.real();
}

SyncSolution sync_rings(const Moment2_2D& m2, const std::vector<RingSpectrum>& estimates,
                        const std::vector<int>& K_set) {
  const int R = int(estimates.size());
  require(R >= 2, "bad-argument", "synchronization needs at least two rings");
  require(R == m2.R(), "shape-mismatch", "estimate count must match the moment rings");
  const int N = m2.N_phi;

  // Pairwise pooled edges.
  MatrixXcd H = MatrixXcd::Zero(R, R);
  double wmax = 0.0;
  std::vector<std::tuple<int, int, double, double>> edges;  // i, j, delta, weight
  for (int i = 0; i < R; ++i) {
    for (int j = i + 1; j < R; ++j) {
      const VectorXd& slice = m2.stored(i, j);
      // m2hat[k] = (1/N) sum_d slice(d) e^{-ikd} = conj(c_i[k]) c_j[k]
      struct Meas {
        int k;
        double raw;  // principal arg of q_ij[k]
        double w;
      };
      std::vector<Meas> meas;
      for (int k : K_set) {
        if (k < 1 || k > estimates[size_t(i)].K || k > estimates[size_t(j)].K) continue;
        cplx m2hat = 0.0;
        for (int d = 0; d < N; ++d) m2hat += slice[d] * std::polar(1.0, -kTwoPi * double(k) * d / N);
        const cplx ci = estimates[size_t(i)].coeff(k);
        const cplx cj = estimates[size_t(j)].coeff(k);
        const double w = std::abs(m2hat) * std::abs(ci) * std::abs(cj);
        if (w <= 0.0 || std::abs(m2hat) < 1e-14) continue;
        const cplx q = std::conj(ci) * cj / m2hat;  // = exp(i k (alpha_j - alpha_i))
        meas.push_back({k, std::arg(q), w});
      }
      if (meas.empty()) continue;
      // Pool with phase de-scaling; branches resolved against the lowest
      // usable harmonic to keep arg(q)/k on a consistent sheet.
      std::sort(meas.begin(), meas.end(), [](const Meas& a, const Meas& b) { return a.k < b.k; });
      const double anchor = meas.front().raw / meas.front().k;
      cplx pooled = 0.0;
      for (const auto& me : meas) {
        const double branch = std::round((me.k * anchor - me.raw) / kTwoPi);
        const double angle = (me.raw + kTwoPi * branch) / me.k;
        pooled += me.w * std::polar(1.0, angle);
      }
      const double W = std::abs(pooled);
      if (W <= 0.0) continue;
      const double dtheta = std::arg(pooled);  // ~ alpha_j - alpha_i
      edges.emplace_back(i, j, dtheta, W);
      wmax = std::max(wmax, W);
    }
  }

  // Connectivity over usable edges.
  std::vector<int> parent(static_cast<size_t>(R));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[size_t(x)] != x) x = parent[size_t(x)] = parent[size_t(parent[size_t(x)])];
    return x;
  };
  for (const auto& [i, j, dtheta, W] : edges) {
    if (W > 1e-12 * wmax) parent[size_t(find(i))] = find(j);
  }
  for (int r = 1; r < R; ++r) {
    require(find(r) == find(0), "sync-disconnected",
            "measurement graph is disconnected at ring " + std::to_string(r));
  }

  for (const auto& [i, j, dtheta, W] : edges) {
    H(i, j) = W * std::polar(1.0, dtheta);
    H(j, i) = std::conj(H(i, j));
  }

  // Leading eigenvector by power iteration, deterministic all-ones start. A
  // Gershgorin shift keeps the top eigenvalue strictly dominant (H has zero
  // diagonal, so its spectrum can be symmetric around 0).
  const double shift = H.cwiseAbs().rowwise().sum().maxCoeff() + 1.0;
  const MatrixXcd Hs = H + shift * MatrixXcd::Identity(R, R);
  VectorXcd u = VectorXcd::Constant(R, 1.0);
  u.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 20000; ++it) {
    VectorXcd v = Hs * u;
    const double nv = v.norm();
    if (nv == 0.0) break;
    v /= nv;
    const double drift = (v - u * (u.dot(v) / u.dot(u))).norm();
    u = v;
    lambda = std::real(u.dot(H * u));
    if (drift < 1e-12) break;
  }
  // Second eigenvalue from deflated iterations on the shifted matrix.
  double lambda2 = 0.0;
  {
    VectorXcd w = VectorXcd::Zero(R);
    w[0] = 1.0;
    w[R - 1] = cplx(0.0, 1.0);
    w -= u * u.dot(w);
    if (w.norm() > 1e-14) {
      w.normalize();
      for (int it = 0; it < 500; ++it) {
        VectorXcd v = Hs * w;
        v -= u * u.dot(v);
        const double nv = v.norm();
        if (nv == 0.0) break;
        w = v / nv;
      }
      lambda2 = std::abs(std::real(w.dot(H * w)));
    }
  }

  SyncSolution sol;
  sol.offsets.resize(R);
  const double base = std::arg(u[0]);
  for (int r = 0; r < R; ++r) sol.offsets[r] = principal(-(std::arg(u[r]) - base));
  sol.offsets[0] = 0.0;
  sol.affinity_gap = lambda > 0.0 ? std::clamp(lambda2 / lambda, 0.0, 1.0) : 0.0;
  return sol;
}

grids::Grid reconstruct_image_2d(const Moment2_2D& m2, const Moment3_2D& m3,
                                 const grids::Grid& like, int K) {
  const int R = m2.R();
  const int N = m2.N_phi;
  if (K < 0) K = default_harmonic_cutoff(N);

  std::vector<RingSpectrum> rings(static_cast<size_t>(R));
  parallel_for(R, [&](long q) {
    RingSpectrum rs;
    rs.K = K;
    rs.amplitudes = amplitudes_from_m2(m2, int(q), K);
    const MatrixXcd B = per_ring_bispectrum(m3, int(q), K);
    rs.phases = recover_phases(B, rs.amplitudes, K);
    rings[size_t(q)] = std::move(rs);
  });

  std::vector<int> K_set(static_cast<size_t>(K));
  std::iota(K_set.begin(), K_set.end(), 1);
  const SyncSolution sync = sync_rings(m2, rings, K_set);

  // Apply offsets and synthesize ring samples.
  MatrixXd samples(R, N);
  for (int q = 0; q < R; ++q) {
    RingSpectrum aligned = rings[size_t(q)];
    for (int m = 0; m <= aligned.K; ++m) aligned.phases[m] -= m * sync.offsets[q];
    samples.row(q) = assemble_ring(aligned, N).transpose();
  }

  // Polar -> Cartesian: linear interpolation in (r, phi).
  grids::Grid out = grids::Grid::zeros(2, like.shape[0], like.spacing, like.support_radius);
  const VectorXd& radii = m2.ring_radii;
  parallel_for(out.shape[0], [&](long i) {
    for (int j = 0; j < out.shape[1]; ++j) {
      const Vector3d x = out.coord(int(i), j);
      const double r = std::hypot(x[0], x[1]);
      if (r > radii[R - 1]) {
        out.at(int(i), j) = 0.0;
        continue;
      }
      double phi = std::atan2(x[1], x[0]);
      if (phi < 0) phi += kTwoPi;
      const double fphi = phi / kTwoPi * N;
      const int p0 = int(std::floor(fphi)) % N;
      const int p1 = (p0 + 1) % N;
      const double ap = fphi - std::floor(fphi);
      auto ring_value = [&](int q) {
        return (1.0 - ap) * samples(q, p0) + ap * samples(q, p1);
      };
      if (r <= radii[0]) {
        out.at(int(i), j) = ring_value(0);  // clamp inside the innermost ring
        continue;
      }
      int q0 = 0;
      while (q0 + 1 < R - 1 && radii[q0 + 1] < r) ++q0;
      const double ar = (r - radii[q0]) / (radii[q0 + 1] - radii[q0]);
      out.at(int(i), j) = (1.0 - ar) * ring_value(q0) + ar * ring_value(q0 + 1);
    }
  });
  return out;
}

}  // namespace orbit::invert2d
