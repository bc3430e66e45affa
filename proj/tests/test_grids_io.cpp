#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "orbit/grid.hpp"
#include "orbit/phantoms.hpp"
#include "orbit/rng.hpp"

using namespace orbit;
using namespace orbit::grids;

namespace {

Grid smooth_disk(int n, double R, bool symmetric) {
  Grid g = Grid::zeros(2, n, 1.0, R);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Vector3d x = g.coord(i, j);
      const double r = x.norm();
      if (r > R) continue;
      double v = 1.0 - (r / R) * (r / R);
      if (!symmetric) v += 0.4 * std::exp(-0.5 * (x - Vector3d(0.3 * R, -0.1 * R, 0)).squaredNorm() / (0.2 * R * 0.2 * R));
      g.at(i, j) = v;
    }
  return g;
}

}  // namespace

TEST_CASE("sample interpolation") {
  Grid g = Grid::zeros(2, 8, 1.0, 4.0);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) g.at(i, j) = 10.0 * i + j;
  // on-node point is exact
  CHECK(sample(g, g.coord(3, 5)) == doctest::Approx(35.0).epsilon(1e-15));
  // midpoint of 1 and 3 along one axis -> 2
  Grid h = Grid::zeros(2, 4, 1.0, 2.0);
  h.at(1, 1) = 1.0;
  h.at(2, 1) = 3.0;
  const Vector3d mid = 0.5 * (h.coord(1, 1) + h.coord(2, 1));
  CHECK(sample(h, mid) == doctest::Approx(2.0).epsilon(1e-15));
  // constant grid stays constant off-node
  Grid c = Grid::zeros(2, 6, 0.5, 1.0);
  c.values.setConstant(4.25);
  CHECK(sample(c, {0.13, -0.21, 0.0}) == doctest::Approx(4.25).epsilon(1e-14));
  // outside -> 0, NaN rejects
  CHECK(sample(c, {100.0, 0.0, 0.0}) == 0.0);
  CHECK_THROWS_AS(sample(c, {std::nan(""), 0.0, 0.0}), OrbitError);
  // 3D trilinear
  Grid v = Grid::zeros(3, 4, 1.0, 2.0);
  v.at(1, 1, 1) = 1.0;
  v.at(1, 1, 2) = 5.0;
  const Vector3d mid3 = 0.5 * (v.coord(1, 1, 1) + v.coord(1, 1, 2));
  CHECK(sample(v, mid3) == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("rigid motion action") {
  Grid f = smooth_disk(64, 24.0, false);
  // identity motion: exact copy
  Grid id = apply_rigid_motion(f, rotation2(0.0), Vector3d::Zero());
  CHECK((id.values - f.values).cwiseAbs().maxCoeff() == 0.0);
  // rotation by pi of a centrally symmetric image returns the image
  Grid sym = smooth_disk(64, 24.0, true);
  Grid rot = apply_rigid_motion(sym, rotation2(kPi), Vector3d::Zero());
  CHECK((rot.values - sym.values).cwiseAbs().maxCoeff() <= 1e-6 * sym.values.cwiseAbs().maxCoeff());
  // translation round trip within interpolation error; the tolerance is the
  // measured bilinear floor (5.5e-3 for this image) with headroom
  Grid smooth = Grid::zeros(2, 64, 1.0, 24.0);
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j) {
      const Vector3d x = smooth.coord(i, j);
      const double r = x.norm();
      if (r > 24.0) continue;
      const double u = 1.0 - (r / 24.0) * (r / 24.0);
      smooth.at(i, j) = u * u + 0.4 * std::exp(-0.5 * (x - Vector3d(7.2, -2.4, 0)).squaredNorm() /
                                               (8.4 * 8.4));
    }
  const Vector3d t(1.4, -2.3, 0.0);
  Grid fwd = apply_rigid_motion(smooth, rotation2(0.0), t);
  Grid back = apply_rigid_motion(fwd, rotation2(0.0), -t);
  double num = 0.0, den = 0.0;
  for (int i = 8; i < 56; ++i)
    for (int j = 8; j < 56; ++j) {
      num += std::pow(back.at(i, j) - smooth.at(i, j), 2);
      den += std::pow(smooth.at(i, j), 2);
    }
  CHECK(std::sqrt(num / den) <= 8e-3);
}

TEST_CASE("antipodal correlation") {
  // constant c on ball, radius inside support: 2 pi c^2
  Grid c = Grid::zeros(2, 64, 1.0, 20.0);
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j)
      if (c.coord(i, j).norm() <= 20.0) c.at(i, j) = 3.0;
  CHECK(antipodal_correlation(c, 10.0, 256) == doctest::Approx(kTwoPi * 9.0).epsilon(1e-6));
  // odd image: f(-x) = -f(x) gives a non-positive value
  Grid odd = Grid::zeros(2, 64, 1.0, 20.0);
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j) {
      const Vector3d x = odd.coord(i, j);
      if (x.norm() <= 20.0) odd.at(i, j) = x[0] / 20.0;
    }
  CHECK(antipodal_correlation(odd, 12.0, 256) < 0.0);
  // rejects beyond the sampled box
  CHECK_THROWS_AS(antipodal_correlation(c, 1000.0, 64), OrbitError);
  // rotation invariance (interpolation limited)
  Grid f = phantoms::blob_image(96, 36.0, 42);
  const double base = antipodal_correlation(f, 30.0, 512);
  Rng rng(17);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    Grid rot = apply_rigid_motion(f, rotation2(rng.uniform(0.0, kTwoPi)), Vector3d::Zero());
    worst = std::max(worst, std::abs(antipodal_correlation(rot, 30.0, 512) - base) / std::abs(base));
  }
  CHECK(worst <= 2e-3);
}

TEST_CASE("aligned mse and ssim") {
  Grid f = smooth_disk(48, 18.0, false);
  const auto same = aligned_mse(f, f, 90);
  CHECK(same.mse_aligned == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(same.ssim == doctest::Approx(1.0).epsilon(1e-9));

  Grid rot = apply_rigid_motion(f, rotation2(kPi / 6.0), Vector3d::Zero());
  const auto rep = aligned_mse(rot, f, 360);
  CHECK(rep.mse_aligned <= 1e-3);

  Grid neg = f;
  neg.values = -f.values;
  // min over rotations of |g.(-f) - f|^2/|f|^2 for a generic asymmetric f is ~4
  const auto flip = aligned_mse(neg, f, 180);
  CHECK(flip.mse_aligned >= 3.5);
  CHECK(flip.mse_aligned <= 4.0 + 1e-9);

  // aligned <= identity-rotation mse, always
  Rng rng(5);
  for (int k = 0; k < 3; ++k) {
    Grid pert = apply_rigid_motion(f, rotation2(rng.uniform(0.0, kTwoPi)), Vector3d::Zero());
    const double ident = (pert.values - f.values).matrix().squaredNorm() /
                         f.values.matrix().squaredNorm();
    CHECK(aligned_mse(pert, f, 120).mse_aligned <= ident + 1e-12);
  }

  CHECK_THROWS_AS(aligned_mse(f, Grid::zeros(2, 48, 1.0, 18.0), 16), OrbitError);
}

TEST_CASE("grid file round trip and error codes") {
  const char* path = "test_grid_io.orgd";
  Grid g = Grid::zeros(3, 10, 0.7, 3.1);
  Rng rng(23);
  for (long i = 0; i < g.size(); ++i) g.values[i] = double(float(rng.normal()));  // f32-exact
  save_grid(g, path);
  Grid h = load_grid(path);
  CHECK(h.dim == g.dim);
  CHECK(h.shape == g.shape);
  CHECK(h.spacing == g.spacing);
  CHECK(h.support_radius == g.support_radius);
  CHECK((h.values - g.values).cwiseAbs().maxCoeff() == 0.0);  // bit-exact

  {
    std::ofstream bad("test_bad_magic.orgd", std::ios::binary);
    bad << "NOPE" << std::string(64, '\0');
  }
  CHECK_THROWS_WITH_AS(load_grid("test_bad_magic.orgd"), doctest::Contains("bad-magic"),
                       OrbitError);
  {
    std::ofstream trunc("test_trunc.orgd", std::ios::binary);
  }
  CHECK_THROWS_WITH_AS(load_grid("test_trunc.orgd"), doctest::Contains("truncated"), OrbitError);
  {
    std::ofstream cut("test_cut.orgd", std::ios::binary);
    cut << "ORGD";
    const uint8_t d = 2;
    cut.write(reinterpret_cast<const char*>(&d), 1);
  }
  CHECK_THROWS_WITH_AS(load_grid("test_cut.orgd"), doctest::Contains("truncated"), OrbitError);
  Grid nang = Grid::zeros(2, 4, 1.0, 1.0);
  nang.values[3] = std::nan("");
  CHECK_THROWS_WITH_AS(save_grid(nang, "test_nan.orgd"), doctest::Contains("nan-values"),
                       OrbitError);
  std::remove(path);
  std::remove("test_bad_magic.orgd");
  std::remove("test_trunc.orgd");
  std::remove("test_cut.orgd");
}

TEST_CASE("ball support predicate") {
  Grid g = smooth_disk(32, 10.0, false);
  CHECK(ball_supported(g, 0.0));
  g.at(0, 0) = 1.0;  // corner, far outside the ball
  CHECK(!ball_supported(g, 1e-9));
}

TEST_CASE("3d aligned mse finds a known rotation") {
  Grid v = phantoms::blob_volume(32, 12.0, 7, 4);
  Eigen::Quaterniond q(Eigen::AngleAxisd(0.35, Vector3d(0.2, 0.9, -0.1).normalized()));
  Grid rot = apply_rigid_motion(v, rotation3(q), Vector3d::Zero());
  const auto rep = aligned_mse(rot, v, 576);
  CHECK(rep.mse_aligned <= 2e-2);
  const double ident =
      (rot.values - v.values).matrix().squaredNorm() / v.values.matrix().squaredNorm();
  CHECK(rep.mse_aligned < ident);
}
