#pragma once

#include <array>
#include <string>

#include <Eigen/Geometry>

#include "orbit/common.hpp"

namespace orbit::grids {

// Uniform Cartesian sample array of a real signal, origin at the geometric
// center, row-major with the last axis fastest.
struct Grid {
  int dim = 2;
  std::array<int, 3> shape{0, 0, 1};  // shape[2] == 1 when dim == 2
  double spacing = 1.0;
  double support_radius = 1.0;
  ArrayXd values;

  long size() const { return long(shape[0]) * shape[1] * shape[2]; }
  long index(int i, int j, int k = 0) const { return (long(i) * shape[1] + j) * shape[2] + k; }
  double& at(int i, int j, int k = 0) { return values[index(i, j, k)]; }
  double at(int i, int j, int k = 0) const { return values[index(i, j, k)]; }

  // Physical coordinate of a node.
  Vector3d coord(int i, int j, int k = 0) const {
    return {(i - 0.5 * (shape[0] - 1)) * spacing, (j - 0.5 * (shape[1] - 1)) * spacing,
            dim == 3 ? (k - 0.5 * (shape[2] - 1)) * spacing : 0.0};
  }
  double cell_volume() const { return dim == 3 ? spacing * spacing * spacing : spacing * spacing; }
  // Largest |x| along an axis still inside the sampled box.
  double extent() const {
    double e = 0.5 * (shape[0] - 1) * spacing;
    for (int a = 1; a < dim; ++a) e = std::min(e, 0.5 * (shape[a] - 1) * spacing);
    return e;
  }

  static Grid zeros(int dim, int n, double spacing, double support_radius);
};

// Bilinear / trilinear interpolation; 0 outside the sampled box.
double sample(const Grid& grid, const Vector3d& point);

MatrixXd rotation2(double angle);
MatrixXd rotation3(const Eigen::Quaterniond& q);

// output(x) = input(R^-1 (x - t)), sampled on the same grid geometry.
Grid apply_rigid_motion(const Grid& grid, const MatrixXd& rotation, const Vector3d& translation);

// Integral of f(r w) f(-r w) over the unit sphere of directions w
// (measure d_theta in 2D, Fibonacci-weighted dw in 3D).
double antipodal_correlation(const Grid& grid, double radius, int n_dirs);

struct MetricReport {
  double mse_aligned = 0.0;
  double ssim = 0.0;
  MatrixXd best_rotation;
};

// min over a rotation grid (plus local refinement) of |g.est - ref|^2/|ref|^2,
// SSIM evaluated on the aligned pair.
MetricReport aligned_mse(const Grid& estimate, const Grid& reference, int rotation_grid);

double ssim(const Grid& a, const Grid& b);

// True when all samples outside the support ball vanish (|v| <= tol).
bool ball_supported(const Grid& grid, double tol);

// Binary format: magic "ORGD", u8 dim, u32 per-axis shape (LE), f64 spacing,
// f64 support_radius, f32 LE row-major payload.
void save_grid(const Grid& grid, const std::string& path);
Grid load_grid(const std::string& path);

}  // namespace orbit::grids
