#include "orbit/harmonics.hpp"

#include <algorithm>
#include <cmath>

namespace orbit::harmonics {

namespace {

// log(n!) table, covers arguments needed by wigner3j up to kMaxWigner.
const std::vector<double>& log_factorials() {
  static const std::vector<double> table = [] {
    std::vector<double> t(4 * kMaxWigner + 8);
    t[0] = 0.0;
    for (size_t n = 1; n < t.size(); ++n) t[n] = t[n - 1] + std::log(double(n));
    return t;
  }();
  return table;
}

inline double lfac(int n) { return log_factorials()[size_t(n)]; }

}  // namespace

double legendre_p(int ell, double x) {
  require(ell >= 0 && ell <= kMaxDegree, "degree-overflow",
          "legendre_p degree " + std::to_string(ell) + " out of range");
  require(std::abs(x) <= 1.0 + 1e-12, "domain", "legendre_p argument outside [-1,1]");
  if (ell == 0) return 1.0;
  double pm1 = 1.0, p = x;
  for (int n = 1; n < ell; ++n) {
    const double pn1 = ((2 * n + 1) * x * p - n * pm1) / double(n + 1);
    pm1 = p;
    p = pn1;
  }
  return p;
}

void normalized_assoc_legendre(int L, int m, double x, double* out) {
  // out[l] valid for l in [m, L]; lower entries untouched.
  const double s2 = std::max(0.0, 1.0 - x * x);
  const double s = std::sqrt(s2);
  // P̄_mm with Condon-Shortley phase.
  double pmm = std::sqrt(1.0 / kFourPi);
  for (int k = 1; k <= m; ++k) {
    pmm *= -std::sqrt(double(2 * k + 1) / double(2 * k)) * s;
  }
  out[m] = pmm;
  if (L == m) return;
  double pm1 = pmm;
  double p = x * std::sqrt(double(2 * m + 3)) * pmm;
  out[m + 1] = p;
  for (int l = m + 2; l <= L; ++l) {
    const double a = std::sqrt(double(4 * l * l - 1) / double(l * l - m * m));
    const double b = std::sqrt(double((l - 1) * (l - 1) - m * m) / double(4 * (l - 1) * (l - 1) - 1));
    const double pl = a * (x * p - b * pm1);
    pm1 = p;
    p = pl;
    out[l] = pl;
  }
}

cplx sph_harm(int ell, int m, double theta, double phi) {
  require(ell >= 0 && ell <= kMaxDegree, "degree-overflow",
          "sph_harm degree " + std::to_string(ell) + " out of range");
  require(std::abs(m) <= ell, "order-out-of-range", "|m| > ell in sph_harm");
  const int am = std::abs(m);
  std::vector<double> col(size_t(ell + 1));
  normalized_assoc_legendre(ell, am, std::cos(theta), col.data());
  const cplx e = std::polar(1.0, double(am) * phi);
  cplx y = col[size_t(ell)] * e;
  if (m < 0) {
    y = std::conj(y);
    if (am & 1) y = -y;
  }
  return y;
}

double wigner3j(int l1, int l2, int l3, int m1, int m2, int m3) {
  // Out-of-rule inputs give 0 by definition.
  if (l1 < 0 || l2 < 0 || l3 < 0) return 0.0;
  if (l1 > kMaxWigner || l2 > kMaxWigner || l3 > kMaxWigner) {
    fail("degree-overflow", "wigner3j degree beyond supported maximum");
  }
  if (m1 + m2 + m3 != 0) return 0.0;
  if (std::abs(m1) > l1 || std::abs(m2) > l2 || std::abs(m3) > l3) return 0.0;
  if (l3 < std::abs(l1 - l2) || l3 > l1 + l2) return 0.0;
  if (m1 == 0 && m2 == 0 && ((l1 + l2 + l3) & 1)) return 0.0;

  // Racah sum in log-factorial form.
  const double log_delta = lfac(l1 + l2 - l3) + lfac(l1 - l2 + l3) + lfac(-l1 + l2 + l3) -
                           lfac(l1 + l2 + l3 + 1);
  const double log_pre = 0.5 * (log_delta + lfac(l1 + m1) + lfac(l1 - m1) + lfac(l2 + m2) +
                                lfac(l2 - m2) + lfac(l3 + m3) + lfac(l3 - m3));
  const int t_min = std::max({0, l2 - l3 - m1, l1 - l3 + m2});
  const int t_max = std::min({l1 + l2 - l3, l1 - m1, l2 + m2});
  double sum = 0.0, comp = 0.0;
  for (int t = t_min; t <= t_max; ++t) {
    const double log_term = log_pre - lfac(t) - lfac(l3 - l2 + t + m1) - lfac(l3 - l1 + t - m2) -
                            lfac(l1 + l2 - l3 - t) - lfac(l1 - t - m1) - lfac(l2 - t + m2);
    double term = std::exp(log_term);
    if (t & 1) term = -term;
    // Kahan compensation against cancellation in the alternating sum.
    const double y = term - comp;
    const double s = sum + y;
    comp = (s - sum) - y;
    sum = s;
  }
  if ((l1 - l2 - m3) & 1) sum = -sum;
  return sum;
}

double gaunt(int l1, int l2, int l3, int m1, int m2, int m3) {
  if (m1 + m2 + m3 != 0) return 0.0;
  const double w0 = wigner3j(l1, l2, l3, 0, 0, 0);
  if (w0 == 0.0) return 0.0;
  const double wm = wigner3j(l1, l2, l3, m1, m2, m3);
  if (wm == 0.0) return 0.0;
  return std::sqrt(double(2 * l1 + 1) * double(2 * l2 + 1) * double(2 * l3 + 1) / kFourPi) * w0 * wm;
}

Quadrature1D gauss_legendre(int K) {
  require(K >= 1, "bad-argument", "gauss_legendre needs K >= 1");
  Quadrature1D q;
  q.nodes.resize(K);
  q.weights.resize(K);
  for (int i = 0; i < (K + 1) / 2; ++i) {
    double x = std::cos(kPi * (double(i) + 0.75) / (double(K) + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      // Evaluate P_K and derivative by recurrence.
      double pm1 = 1.0, p = x;
      for (int n = 1; n < K; ++n) {
        const double pn1 = ((2 * n + 1) * x * p - n * pm1) / double(n + 1);
        pm1 = p;
        p = pn1;
      }
      pp = double(K) * (x * p - pm1) / (x * x - 1.0);
      const double dx = p / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * pp * pp);
    q.nodes[i] = -x;  // ascending order: the cos initial guesses start near +1
    q.weights[i] = w;
    q.nodes[K - 1 - i] = x;
    q.weights[K - 1 - i] = w;
  }
  if (K & 1) {
    // middle node is exactly 0
    q.nodes[K / 2] = 0.0;
  }
  return q;
}

Quadrature1D radial_quadrature_01(int N_r) {
  Quadrature1D gl = gauss_legendre(N_r);
  Quadrature1D q;
  q.nodes.resize(N_r);
  q.weights.resize(N_r);
  for (int i = 0; i < N_r; ++i) {
    const double r = 0.5 * (gl.nodes[i] + 1.0);
    q.nodes[i] = r;
    q.weights[i] = 0.5 * gl.weights[i] * r * r;
  }
  return q;
}

SphereQuadrature fibonacci_sphere(int N_ang) {
  require(N_ang >= 16, "bad-argument", "fibonacci_sphere needs N_ang >= 16");
  SphereQuadrature sq;
  sq.directions.resize(N_ang, 3);
  sq.weights = VectorXd::Constant(N_ang, kFourPi / double(N_ang));
  const double golden_angle = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < N_ang; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / double(N_ang);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden_angle * double(i);
    sq.directions(i, 0) = rho * std::cos(phi);
    sq.directions(i, 1) = rho * std::sin(phi);
    sq.directions(i, 2) = z;
  }
  return sq;
}

ShellBasis make_shell_basis(int R_max, double sigma_sh, int N_r) {
  require(R_max >= 1, "bad-argument", "make_shell_basis needs R_max >= 1");
  require(sigma_sh > 0.0, "bad-argument", "shell width must be positive");
  ShellBasis basis;
  basis.width = sigma_sh;
  basis.centers.resize(R_max);
  for (int q = 0; q < R_max; ++q) basis.centers[q] = double(q + 1) / double(R_max + 1);
  basis.radial_quadrature = radial_quadrature_01(N_r);
  const VectorXd& r = basis.radial_quadrature.nodes;
  const VectorXd& w = basis.radial_quadrature.weights;

  basis.normalizers.resize(R_max);
  MatrixXd samples(R_max, N_r);  // W_q(r_n)
  for (int q = 0; q < R_max; ++q) {
    double norm2 = 0.0;
    for (int n = 0; n < N_r; ++n) {
      const double d = r[n] - basis.centers[q];
      norm2 += w[n] * std::exp(-d * d / (sigma_sh * sigma_sh));
    }
    basis.normalizers[q] = 1.0 / std::sqrt(norm2);
    for (int n = 0; n < N_r; ++n) {
      const double d = r[n] - basis.centers[q];
      samples(q, n) = basis.normalizers[q] * std::exp(-0.5 * d * d / (sigma_sh * sigma_sh));
    }
  }
  basis.overlap.resize(R_max, R_max);
  for (int a = 0; a < R_max; ++a) {
    for (int b = a; b < R_max; ++b) {
      double s = 0.0;
      for (int n = 0; n < N_r; ++n) s += w[n] * samples(a, n) * samples(b, n);
      basis.overlap(a, b) = s;
      basis.overlap(b, a) = s;
    }
  }
  basis.triple_overlap.assign(size_t(R_max) * R_max * R_max, 0.0);
  for (int a = 0; a < R_max; ++a) {
    for (int b = a; b < R_max; ++b) {
      for (int c = b; c < R_max; ++c) {
        double t = 0.0;
        for (int n = 0; n < N_r; ++n) t += w[n] * samples(a, n) * samples(b, n) * samples(c, n);
        const int perm[6][3] = {{a, b, c}, {a, c, b}, {b, a, c}, {b, c, a}, {c, a, b}, {c, b, a}};
        for (const auto& p : perm) {
          basis.triple_overlap[size_t((p[0] * R_max + p[1]) * R_max + p[2])] = t;
        }
      }
    }
  }
  return basis;
}

GauntTable::GauntTable(int L_max) : L_(L_max) {
  require(L_max >= 0 && L_max <= kMaxWigner, "degree-overflow", "GauntTable L_max out of range");
  block_of_.assign(size_t((L_ + 1) * (L_ + 1) * (L_ + 1)), -1);
  for (int l1 = 0; l1 <= L_; ++l1) {
    for (int l2 = 0; l2 <= L_; ++l2) {
      for (int l3 = std::abs(l1 - l2); l3 <= std::min(L_, l1 + l2); ++l3) {
        if ((l1 + l2 + l3) & 1) continue;
        MatrixXd block(2 * l1 + 1, 2 * l2 + 1);
        for (int m1 = -l1; m1 <= l1; ++m1) {
          for (int m2 = -l2; m2 <= l2; ++m2) {
            block(m1 + l1, m2 + l2) = gaunt(l1, l2, l3, m1, m2, -m1 - m2);
          }
        }
        block_of_[size_t((l1 * (L_ + 1) + l2) * (L_ + 1) + l3)] = int(blocks_.size());
        blocks_.push_back(std::move(block));
      }
    }
  }
}

}  // namespace orbit::harmonics
