#include "orbit/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <vector>

#include "orbit/harmonics.hpp"
#include "orbit/parallel.hpp"

namespace orbit::grids {

Grid Grid::zeros(int dim, int n, double spacing, double support_radius) {
  Grid g;
  g.dim = dim;
  g.shape = {n, n, dim == 3 ? n : 1};
  g.spacing = spacing;
  g.support_radius = support_radius;
  g.values = ArrayXd::Zero(g.size());
  return g;
}

double sample(const Grid& grid, const Vector3d& point) {
  require(point.allFinite(), "nan-coordinate", "sample() given a non-finite coordinate");
  const double fx = point[0] / grid.spacing + 0.5 * (grid.shape[0] - 1);
  const double fy = point[1] / grid.spacing + 0.5 * (grid.shape[1] - 1);
  const int i0 = int(std::floor(fx));
  const int j0 = int(std::floor(fy));
  const double ax = fx - i0, ay = fy - j0;
  if (grid.dim == 2) {
    if (i0 < -1 || i0 >= grid.shape[0] || j0 < -1 || j0 >= grid.shape[1]) return 0.0;
    auto v = [&](int i, int j) -> double {
      if (i < 0 || i >= grid.shape[0] || j < 0 || j >= grid.shape[1]) return 0.0;
      return grid.at(i, j);
    };
    return (1 - ax) * ((1 - ay) * v(i0, j0) + ay * v(i0, j0 + 1)) +
           ax * ((1 - ay) * v(i0 + 1, j0) + ay * v(i0 + 1, j0 + 1));
  }
  const double fz = point[2] / grid.spacing + 0.5 * (grid.shape[2] - 1);
  const int k0 = int(std::floor(fz));
  const double az = fz - k0;
  if (i0 < -1 || i0 >= grid.shape[0] || j0 < -1 || j0 >= grid.shape[1] || k0 < -1 ||
      k0 >= grid.shape[2]) {
    return 0.0;
  }
  auto v = [&](int i, int j, int k) -> double {
    if (i < 0 || i >= grid.shape[0] || j < 0 || j >= grid.shape[1] || k < 0 || k >= grid.shape[2]) {
      return 0.0;
    }
    return grid.at(i, j, k);
  };
  auto plane = [&](int k) {
    return (1 - ax) * ((1 - ay) * v(i0, j0, k) + ay * v(i0, j0 + 1, k)) +
           ax * ((1 - ay) * v(i0 + 1, j0, k) + ay * v(i0 + 1, j0 + 1, k));
  };
  return (1 - az) * plane(k0) + az * plane(k0 + 1);
}

MatrixXd rotation2(double angle) {
  MatrixXd r(2, 2);
  const double c = std::cos(angle), s = std::sin(angle);
  r << c, -s, s, c;
  return r;
}

MatrixXd rotation3(const Eigen::Quaterniond& q) { return q.normalized().toRotationMatrix(); }

Grid apply_rigid_motion(const Grid& grid, const MatrixXd& rotation, const Vector3d& translation) {
  require(rotation.rows() == grid.dim && rotation.cols() == grid.dim, "bad-argument",
          "rotation dimension mismatch");
  Grid out = grid;
  Eigen::Matrix3d rinv = Eigen::Matrix3d::Identity();
  rinv.topLeftCorner(grid.dim, grid.dim) = rotation.transpose();
  parallel_for(grid.shape[0], [&](long i) {
    for (int j = 0; j < grid.shape[1]; ++j) {
      for (int k = 0; k < grid.shape[2]; ++k) {
        const Vector3d x = grid.coord(int(i), j, k) - translation;
        out.at(int(i), j, k) = sample(grid, rinv * x);
      }
    }
  });
  return out;
}

double antipodal_correlation(const Grid& grid, double radius, int n_dirs) {
  require(radius <= grid.extent(), "radius-exceeds-extent",
          "antipodal correlation radius outside sampled box");
  if (grid.dim == 2) {
    double acc = 0.0;
    for (int k = 0; k < n_dirs; ++k) {
      const double th = kTwoPi * k / n_dirs;
      const Vector3d w(std::cos(th), std::sin(th), 0.0);
      acc += sample(grid, radius * w) * sample(grid, -radius * w);
    }
    return acc * kTwoPi / n_dirs;
  }
  const auto sq = harmonics::fibonacci_sphere(n_dirs);
  double acc = 0.0;
  for (int i = 0; i < sq.size(); ++i) {
    const Vector3d w = sq.directions.row(i).transpose();
    acc += sq.weights[i] * sample(grid, radius * w) * sample(grid, -radius * w);
  }
  return acc;
}

namespace {

double mse_for_rotation(const Grid& est, const Grid& ref, const MatrixXd& rot, double ref_norm2) {
  // |rot.est - ref|^2 accumulated over nodes of ref's grid.
  Eigen::Matrix3d rinv = Eigen::Matrix3d::Identity();
  rinv.topLeftCorner(est.dim, est.dim) = rot.transpose();
  double acc = 0.0;
  for (int i = 0; i < ref.shape[0]; ++i) {
    for (int j = 0; j < ref.shape[1]; ++j) {
      for (int k = 0; k < ref.shape[2]; ++k) {
        const Vector3d x = ref.coord(i, j, k);
        const double d = sample(est, rinv * x) - ref.at(i, j, k);
        acc += d * d;
      }
    }
  }
  return acc / ref_norm2;
}

// Super-Fibonacci covering of SO(3) (uniform low-discrepancy quaternions).
std::vector<Eigen::Quaterniond> so3_covering(int n) {
  std::vector<Eigen::Quaterniond> qs;
  qs.reserve(size_t(n));
  const double phi = std::sqrt(2.0);
  const double psi = 1.533751168755204288118041;
  for (int i = 0; i < n; ++i) {
    const double s = i + 0.5;
    const double t = s / n;
    const double d = kTwoPi * s;
    const double r = std::sqrt(t), R = std::sqrt(1.0 - t);
    const double alpha = d / phi, beta = d / psi;
    qs.emplace_back(R * std::cos(beta), r * std::sin(alpha), r * std::cos(alpha), R * std::sin(beta));
  }
  return qs;
}

double golden_min(const std::function<double(double)>& f, double a, double b, int iters) {
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < iters; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = f(d);
    }
  }
  return fc < fd ? c : d;
}

}  // namespace

double ssim(const Grid& a, const Grid& b) {
  // Standard constants, 11-sample Gaussian window (sigma 1.5) per axis.
  const int W = 11, H = W / 2;
  VectorXd win(W);
  for (int i = 0; i < W; ++i) {
    const double d = i - H;
    win[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
  }
  win /= win.sum();
  const double L = b.values.maxCoeff() - b.values.minCoeff();
  const double c1 = (0.01 * L) * (0.01 * L);
  const double c2 = (0.03 * L) * (0.03 * L);

  // Separable filtering helper over the grid interior (window fully inside).
  auto filt = [&](const ArrayXd& v) {
    Grid tmp = a;
    tmp.values = v;
    Grid out = tmp;
    for (int axis = 0; axis < a.dim; ++axis) {
      Grid next = out;
      for (int i = 0; i < a.shape[0]; ++i)
        for (int j = 0; j < a.shape[1]; ++j)
          for (int k = 0; k < a.shape[2]; ++k) {
            double s = 0.0;
            for (int o = -H; o <= H; ++o) {
              int ii = i + (axis == 0 ? o : 0);
              int jj = j + (axis == 1 ? o : 0);
              int kk = k + (axis == 2 ? o : 0);
              ii = std::clamp(ii, 0, a.shape[0] - 1);
              jj = std::clamp(jj, 0, a.shape[1] - 1);
              kk = std::clamp(kk, 0, a.shape[2] - 1);
              s += win[o + H] * out.at(ii, jj, kk);
            }
            next.at(i, j, k) = s;
          }
      out = next;
    }
    return out.values;
  };

  const ArrayXd mu_a = filt(a.values), mu_b = filt(b.values);
  const ArrayXd saa = filt(a.values * a.values) - mu_a * mu_a;
  const ArrayXd sbb = filt(b.values * b.values) - mu_b * mu_b;
  const ArrayXd sab = filt(a.values * b.values) - mu_a * mu_b;
  const ArrayXd num = (2.0 * mu_a * mu_b + c1) * (2.0 * sab + c2);
  const ArrayXd den = (mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2);
  return (num / den).mean();
}

MetricReport aligned_mse(const Grid& estimate, const Grid& reference, int rotation_grid) {
  require(estimate.dim == reference.dim && estimate.shape == reference.shape, "shape-mismatch",
          "aligned_mse needs matching shapes");
  const double ref_norm2 = reference.values.square().sum();
  require(ref_norm2 > 0.0, "zero-reference", "aligned_mse reference has zero norm");

  MetricReport report;
  if (estimate.dim == 2) {
    std::vector<double> mses(static_cast<size_t>(rotation_grid));
    parallel_for(rotation_grid, [&](long i) {
      mses[size_t(i)] = mse_for_rotation(estimate, reference, rotation2(kTwoPi * i / rotation_grid),
                                         ref_norm2);
    });
    int best = 0;
    for (int i = 1; i < rotation_grid; ++i)
      if (mses[size_t(i)] < mses[size_t(best)]) best = i;
    const double step = kTwoPi / rotation_grid;
    const double center = step * best;
    const double refined = golden_min(
        [&](double ang) { return mse_for_rotation(estimate, reference, rotation2(ang), ref_norm2); },
        center - step, center + step, 40);
    const double coarse = mses[size_t(best)];
    const double fine = mse_for_rotation(estimate, reference, rotation2(refined), ref_norm2);
    const double angle = fine <= coarse ? refined : center;
    report.best_rotation = rotation2(angle);
    report.mse_aligned = std::min(fine, coarse);
  } else {
    auto qs = so3_covering(rotation_grid);
    qs.emplace_back(1.0, 0.0, 0.0, 0.0);  // identity always among the candidates
    std::vector<double> mses(qs.size());
    parallel_for(long(qs.size()), [&](long i) {
      mses[size_t(i)] = mse_for_rotation(estimate, reference, rotation3(qs[size_t(i)]), ref_norm2);
    });
    size_t best = 0;
    for (size_t i = 1; i < qs.size(); ++i)
      if (mses[i] < mses[best]) best = i;
    Eigen::Quaterniond q = qs[best].normalized();
    double cur = mses[best];
    // Local refinement: golden-section along the three body axes, two rounds.
    const double cell = kPi / std::cbrt(double(rotation_grid));
    for (int round = 0; round < 2; ++round) {
      for (int axis = 0; axis < 3; ++axis) {
        Vector3d u = Vector3d::Zero();
        u[axis] = 1.0;
        auto eval = [&](double ang) {
          const Eigen::Quaterniond dq(Eigen::AngleAxisd(ang, u));
          return mse_for_rotation(estimate, reference, rotation3(q * dq), ref_norm2);
        };
        const double span = cell / (round + 1);
        const double ang = golden_min(eval, -span, span, 28);
        const double val = eval(ang);
        if (val < cur) {
          cur = val;
          q = q * Eigen::Quaterniond(Eigen::AngleAxisd(ang, u));
        }
      }
    }
    report.best_rotation = rotation3(q);
    report.mse_aligned = cur;
  }
  Grid aligned = apply_rigid_motion(estimate, report.best_rotation, Vector3d::Zero());
  report.ssim = ssim(aligned, reference);
  return report;
}

bool ball_supported(const Grid& grid, double tol) {
  for (int i = 0; i < grid.shape[0]; ++i)
    for (int j = 0; j < grid.shape[1]; ++j)
      for (int k = 0; k < grid.shape[2]; ++k) {
        if (grid.coord(i, j, k).norm() > grid.support_radius &&
            std::abs(grid.at(i, j, k)) > tol) {
          return false;
        }
      }
  return true;
}

namespace {

template <typename T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(bool(is), "truncated", "grid file ended early");
  return v;
}

}  // namespace

void save_grid(const Grid& grid, const std::string& path) {
  require(grid.values.allFinite(), "nan-values", "refusing to save non-finite grid");
  std::ofstream os(path, std::ios::binary);
  require(bool(os), "io", "cannot open " + path + " for writing");
  os.write("ORGD", 4);
  put<uint8_t>(os, uint8_t(grid.dim));
  for (int a = 0; a < grid.dim; ++a) put<uint32_t>(os, uint32_t(grid.shape[a]));
  put<double>(os, grid.spacing);
  put<double>(os, grid.support_radius);
  for (long i = 0; i < grid.size(); ++i) put<float>(os, float(grid.values[i]));
  require(bool(os), "io", "short write to " + path);
}

Grid load_grid(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(bool(is), "io", "cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  require(bool(is), "truncated", "grid file shorter than header");
  require(std::memcmp(magic, "ORGD", 4) == 0, "bad-magic", "not a grid file: " + path);
  Grid g;
  g.dim = get<uint8_t>(is);
  require(g.dim == 2 || g.dim == 3, "bad-magic", "unsupported dimension in " + path);
  g.shape = {1, 1, 1};
  for (int a = 0; a < g.dim; ++a) g.shape[a] = int(get<uint32_t>(is));
  g.spacing = get<double>(is);
  g.support_radius = get<double>(is);
  g.values.resize(g.size());
  for (long i = 0; i < g.size(); ++i) g.values[i] = double(get<float>(is));
  require(g.values.allFinite(), "nan-values", "grid payload contains non-finite values");
  return g;
}

}  // namespace orbit::grids
