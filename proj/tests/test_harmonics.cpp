#include <doctest.h>

#include <cmath>

#include "orbit/harmonics.hpp"
#include "orbit/rng.hpp"
#include "oracles.hpp"

using namespace orbit;
using namespace orbit::harmonics;

TEST_CASE("legendre polynomial basics") {
  CHECK(legendre_p(0, 0.3) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(legendre_p(1, -0.7) == doctest::Approx(-0.7).epsilon(1e-15));
  CHECK(legendre_p(2, 0.5) == doctest::Approx(-0.125).epsilon(1e-14));
  CHECK_THROWS_AS(legendre_p(kMaxDegree + 1, 0.0), OrbitError);
}

TEST_CASE("spherical harmonics values and symmetry") {
  CHECK(std::abs(sph_harm(0, 0, 0.7, 1.3) - cplx(1.0 / std::sqrt(kFourPi), 0.0)) < 1e-14);
  CHECK(std::abs(sph_harm(1, 0, 0.0, 0.4) - cplx(std::sqrt(3.0 / kFourPi), 0.0)) < 1e-14);
  // independent recurrence oracle
  CHECK(std::abs(sph_harm(5, 3, 1.1, 0.4) - oracles::sph_harm_oracle(5, 3, 1.1, 0.4)) < 1e-12);
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int l = int(rng.uniform(0, 13));
    const int m = int(rng.uniform(0, double(l + 1)));
    const double th = rng.uniform(0, kPi), ph = rng.uniform(0, kTwoPi);
    const cplx a = sph_harm(l, m, th, ph);
    CHECK(std::abs(a - oracles::sph_harm_oracle(l, m, th, ph)) < 1e-12);
    cplx want = std::conj(a);
    if (m & 1) want = -want;
    CHECK(std::abs(sph_harm(l, -m, th, ph) - want) < 1e-13);
  }
  CHECK_THROWS_AS(sph_harm(2, 3, 0.5, 0.5), OrbitError);
}

TEST_CASE("wigner3j values, selection rules, orthogonality") {
  CHECK(wigner3j(1, 1, 0, 0, 0, 0) == doctest::Approx(-1.0 / std::sqrt(3.0)).epsilon(1e-13));
  CHECK(wigner3j(1, 1, 1, 0, 0, 0) == 0.0);  // odd ell sum at zero orders, exact
  CHECK(wigner3j(1, 2, 4, 0, 0, 0) == 0.0);  // triangle violation, exact
  CHECK(wigner3j(2, 2, 2, 1, 0, 0) == 0.0);  // m-sum rule, exact

  // brute-force Clebsch-Gordan ladder oracle
  {
    oracles::CgLadder cg(2, 2, 2);
    CHECK(wigner3j(2, 2, 2, 1, -1, 0) == doctest::Approx(cg.wigner3j(1, -1, 0)).epsilon(1e-12));
  }
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const int l1 = int(rng.uniform(0, 9));
    const int l2 = int(rng.uniform(0, 9));
    const int lo = std::abs(l1 - l2), hi = l1 + l2;
    const int l3 = lo + int(rng.uniform(0, double(hi - lo + 1)));
    oracles::CgLadder cg(l1, l2, l3);
    for (int m1 = -l1; m1 <= l1; ++m1) {
      for (int m2 = -l2; m2 <= l2; ++m2) {
        const int m3 = -m1 - m2;
        if (std::abs(m3) > l3) continue;
        CHECK(wigner3j(l1, l2, l3, m1, m2, m3) ==
              doctest::Approx(cg.wigner3j(m1, m2, m3)).epsilon(5e-11).scale(1.0));
      }
    }
  }

  // orthogonality: sum_{m1,m2} (2 l3 + 1) 3j(...)^2 = 1 at each fixed m3
  for (int l1 = 0; l1 <= 12; l1 += 3) {
    for (int l2 = 0; l2 <= 12; l2 += 4) {
      for (int l3 = std::abs(l1 - l2); l3 <= l1 + l2 && l3 <= 12; ++l3) {
        for (int m3 = -l3; m3 <= l3; m3 += std::max(1, l3)) {
          double acc = 0.0;
          for (int m1 = -l1; m1 <= l1; ++m1) {
            const int m2 = -m3 - m1;
            if (std::abs(m2) > l2) continue;
            const double w = wigner3j(l1, l2, l3, m1, m2, m3);
            acc += (2 * l3 + 1) * w * w;
          }
          CHECK(acc == doctest::Approx(1.0).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("gaunt coefficients against quadrature") {
  CHECK(gaunt(0, 0, 0, 0, 0, 0) == doctest::Approx(1.0 / std::sqrt(kFourPi)).epsilon(1e-13));
  CHECK(gaunt(1, 2, 4, 0, 0, 0) == 0.0);

  auto quad_gaunt = [](int l1, int l2, int l3, int m1, int m2, int m3) {
    auto re = [&](double th, double ph) {
      return (oracles::sph_harm_oracle(l1, m1, th, ph) * oracles::sph_harm_oracle(l2, m2, th, ph) *
              oracles::sph_harm_oracle(l3, m3, th, ph))
          .real();
    };
    const int K = l1 + l2 + l3 + 2;
    return oracles::sphere_quadrature(re, K, 2 * K + 1);
  };
  CHECK(gaunt(2, 2, 2, 1, 1, -2) == doctest::Approx(quad_gaunt(2, 2, 2, 1, 1, -2)).epsilon(1e-10));
  CHECK(gaunt(3, 5, 4, 2, -1, -1) ==
        doctest::Approx(quad_gaunt(3, 5, 4, 2, -1, -1)).epsilon(1e-10).scale(1.0));

  // symmetry under simultaneous column permutations
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const int l1 = int(rng.uniform(0, 7)), l2 = int(rng.uniform(0, 7)), l3 = int(rng.uniform(0, 7));
    const int m1 = l1 ? int(rng.uniform(0, double(2 * l1 + 1))) - l1 : 0;
    const int m2 = l2 ? int(rng.uniform(0, double(2 * l2 + 1))) - l2 : 0;
    const int m3 = -m1 - m2;
    if (std::abs(m3) > l3) continue;
    const double g = gaunt(l1, l2, l3, m1, m2, m3);
    CHECK(gaunt(l2, l1, l3, m2, m1, m3) == doctest::Approx(g).epsilon(1e-12).scale(1.0));
    CHECK(gaunt(l3, l2, l1, m3, m2, m1) == doctest::Approx(g).epsilon(1e-12).scale(1.0));
  }

  // dense table agrees with the scalar path
  GauntTable table(6);
  for (int l1 = 0; l1 <= 6; ++l1)
    for (int l2 = 0; l2 <= 6; ++l2)
      for (int l3 = 0; l3 <= 6; ++l3)
        for (int m1 = -l1; m1 <= l1; ++m1)
          for (int m2 = -l2; m2 <= l2; ++m2) {
            CHECK(table(l1, l2, l3, m1, m2) ==
                  doctest::Approx(gaunt(l1, l2, l3, m1, m2, -m1 - m2)).epsilon(1e-13).scale(1.0));
          }
}

TEST_CASE("gauss-legendre quadrature") {
  CHECK_THROWS_AS(gauss_legendre(0), OrbitError);
  {
    const auto q = gauss_legendre(2);
    double acc = 0.0;
    for (int i = 0; i < 2; ++i) acc += q.weights[i] * q.nodes[i] * q.nodes[i];
    CHECK(acc == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  }
  {
    const auto q = gauss_legendre(4);
    double acc = 0.0;
    for (int i = 0; i < 4; ++i) {
      const double p3 = legendre_p(3, q.nodes[i]);
      acc += q.weights[i] * p3 * p3;
    }
    CHECK(acc == doctest::Approx(2.0 / 7.0).epsilon(1e-13));
  }
  for (int K : {1, 3, 8, 33, 64}) {
    const auto q = gauss_legendre(K);
    CHECK(q.weights.sum() == doctest::Approx(2.0).epsilon(1e-13));
    for (int i = 1; i < K; ++i) CHECK(q.nodes[i] > q.nodes[i - 1]);
    double acc = 0.0;
    const int deg = 2 * K - 1;  // exactness boundary (odd, integral 0)
    for (int i = 0; i < K; ++i) acc += q.weights[i] * std::pow(q.nodes[i], deg);
    CHECK(acc == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
  }
}

TEST_CASE("fibonacci sphere quadrature") {
  CHECK_THROWS_AS(fibonacci_sphere(8), OrbitError);
  const auto sq = fibonacci_sphere(3072);
  CHECK(sq.weights.sum() == doctest::Approx(kFourPi).epsilon(1e-12));
  Vector3d mean = Vector3d::Zero();
  for (int i = 0; i < sq.size(); ++i) {
    CHECK(std::abs(sq.directions.row(i).norm() - 1.0) < 1e-12);
    mean += sq.directions.row(i).transpose();
  }
  CHECK(mean.norm() / sq.size() < 1e-3);
  cplx y10 = 0.0;
  for (int i = 0; i < sq.size(); ++i) {
    const double th = std::acos(sq.directions(i, 2));
    const double ph = std::atan2(sq.directions(i, 1), sq.directions(i, 0));
    y10 += sq.weights[i] * sph_harm(1, 0, th, ph);
  }
  CHECK(std::abs(y10) < 1e-6);
}

TEST_CASE("spherical-harmonic orthonormality under fibonacci quadrature") {
  const int L = 12;
  const auto sq = fibonacci_sphere(12288);
  const int nlm = (L + 1) * (L + 1);
  MatrixXcd Y(sq.size(), nlm);
  for (int i = 0; i < sq.size(); ++i) {
    const double th = std::acos(std::clamp(sq.directions(i, 2), -1.0, 1.0));
    const double ph = std::atan2(sq.directions(i, 1), sq.directions(i, 0));
    for (int l = 0; l <= L; ++l)
      for (int m = -l; m <= l; ++m) Y(i, l * l + l + m) = sph_harm(l, m, th, ph);
  }
  MatrixXcd G = Y.adjoint() * (sq.weights.asDiagonal() * Y);
  double worst = 0.0;
  for (int a = 0; a < nlm; ++a)
    for (int b = 0; b < nlm; ++b) {
      const double want = a == b ? 1.0 : 0.0;
      worst = std::max(worst, std::abs(G(a, b) - want));
    }
  CHECK(worst <= 1e-3);
}

TEST_CASE("addition theorem") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Vector3d w1(rng.normal(), rng.normal(), rng.normal());
    Vector3d w2(rng.normal(), rng.normal(), rng.normal());
    w1.normalize();
    w2.normalize();
    const double th1 = std::acos(w1[2]), ph1 = std::atan2(w1[1], w1[0]);
    const double th2 = std::acos(w2[2]), ph2 = std::atan2(w2[1], w2[0]);
    for (int l : {0, 1, 4, 9}) {
      cplx acc = 0.0;
      for (int m = -l; m <= l; ++m)
        acc += sph_harm(l, m, th1, ph1) * std::conj(sph_harm(l, m, th2, ph2));
      const double want = (2 * l + 1) / kFourPi * legendre_p(l, w1.dot(w2));
      CHECK(std::abs(acc - want) < 1e-10);
    }
  }
}

TEST_CASE("gaussian shell basis") {
  CHECK_THROWS_AS(make_shell_basis(4, -1.0, 64), OrbitError);
  const int R = 4;
  const auto basis = make_shell_basis(R, 0.01, 256);  // centers 0.2,0.4,0.6,0.8
  for (int q = 0; q < R; ++q) CHECK(basis.overlap(q, q) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(std::abs(basis.overlap(0, 3)) < 1e-8);  // widely separated shells
  CHECK((basis.overlap - basis.overlap.transpose()).norm() == 0.0);
  for (int q = 0; q < R; ++q) CHECK(basis.triple(q, q, q) > 0.0);
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const int a = int(rng.uniform(0, R)), b = int(rng.uniform(0, R)), c = int(rng.uniform(0, R));
    CHECK(basis.triple(a, b, c) == basis.triple(c, a, b));
    CHECK(basis.triple(a, b, c) == basis.triple(b, a, c));
  }
  const auto wide = make_shell_basis(8, default_shell_width(8), 128);
  for (int q = 0; q < 8; ++q) CHECK(wide.overlap(q, q) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(wide.centers[0] == doctest::Approx(1.0 / 9.0));
}
