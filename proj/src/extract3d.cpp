#include "orbit/extract3d.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "orbit/parallel.hpp"

namespace orbit::extract3d {

namespace {

using grids::Grid;
using json = nlohmann::json;

// Matrix of w_i * conj(Y_lm(w_i)) used by the discrete SHT, N_ang x (L+1)^2.
MatrixXcd sht_matrix(const harmonics::SphereQuadrature& sq, int L) {
  const int n = sq.size();
  const int nlm = (L + 1) * (L + 1);
  MatrixXcd Y(n, nlm);
  std::vector<double> col(size_t(L + 1));
  for (int i = 0; i < n; ++i) {
    const double z = sq.directions(i, 2);
    const double phi = std::atan2(sq.directions(i, 1), sq.directions(i, 0));
    for (int m = 0; m <= L; ++m) {
      harmonics::normalized_assoc_legendre(L, m, z, col.data());
      const cplx e = std::polar(1.0, -double(m) * phi);  // conj(e^{im phi})
      for (int l = m; l <= L; ++l) {
        const cplx ylm_conj = col[size_t(l)] * e;
        Y(i, lm_index(l, m)) = sq.weights[i] * ylm_conj;
        if (m > 0) {
          // conj(Y_{l,-m}) = (-1)^m Y_{lm}
          cplx y = col[size_t(l)] * std::polar(1.0, double(m) * phi);
          if (m & 1) y = -y;
          Y(i, lm_index(l, -m)) = sq.weights[i] * y;
        }
      }
    }
  }
  return Y;
}

struct Engine {
  const SphericalSpec3D& spec;
  double R_sup = 0.0;      // physical support radius
  double boundary_r = 0.0;
  MatrixXcd Yw;            // N_ang x nlm
  MatrixXd Wmat;           // R x N_r, radial weights folded
  // flattened gaunt plans per ell triple: (lm1, lm2, lm3, coeff)
  struct Term {
    int lm1, lm2, lm3;
    double g;
  };
  std::vector<std::vector<Term>> plans;

  explicit Engine(const Grid& grid, const SphericalSpec3D& s) : spec(s) {
    R_sup = grid.support_radius;
    boundary_r = R_sup * (1.0 - s.delta);
    Yw = sht_matrix(s.sphere_quad, s.L_max);
    const auto& rq = s.shells.radial_quadrature;
    Wmat.resize(s.R(), s.N_r);
    for (int q = 0; q < s.R(); ++q)
      for (int n = 0; n < s.N_r; ++n) Wmat(q, n) = rq.weights[n] * s.shells.window(q, rq.nodes[n]);
    plans.resize(s.ell_triples.size());
    for (size_t t = 0; t < s.ell_triples.size(); ++t) {
      const auto [l1, l2, l3] = s.ell_triples[t];
      for (int m1 = -l1; m1 <= l1; ++m1) {
        for (int m2 = -l2; m2 <= l2; ++m2) {
          const int m3 = -m1 - m2;
          if (std::abs(m3) > l3) continue;
          const double g = (*s.gaunt)(l1, l2, l3, m1, m2);
          if (g == 0.0) continue;
          plans[t].push_back({lm_index(l1, m1), lm_index(l2, m2), lm_index(l3, m3), g});
        }
      }
    }
  }

  // Shell-projected coefficients H (R x nlm) around translation t.
  MatrixXcd shell_coeffs(const Grid& grid, const Vector3d& t) const {
    const int Nr = spec.N_r;
    const int na = spec.sphere_quad.size();
    MatrixXd F(Nr, na);
    for (int n = 0; n < Nr; ++n) {
      const double r = spec.shells.radial_quadrature.nodes[n] * R_sup;
      for (int i = 0; i < na; ++i) {
        const Vector3d p = t + r * spec.sphere_quad.directions.row(i).transpose();
        F(n, i) = grids::sample(grid, p);
      }
    }
    // C = F * Yw (real x complex via two real products)
    MatrixXcd C(Nr, Yw.cols());
    C.real() = F * Yw.real();
    C.imag() = F * Yw.imag();
    return Wmat * C;  // R x nlm
  }

  double boundary_weight(const Grid& grid, const Vector3d& t) const {
    double acc = 0.0;
    for (int i = 0; i < spec.sphere_quad.size(); ++i) {
      const Vector3d w = spec.sphere_quad.directions.row(i).transpose();
      acc += spec.sphere_quad.weights[i] * grids::sample(grid, t + boundary_r * w) *
             grids::sample(grid, t - boundary_r * w);
    }
    return acc;
  }
};

struct Accum {
  std::vector<MatrixXcd> gram;    // per l
  std::vector<MatrixXcd> bispec;  // per ell triple (Gaunt sums, no T factor)
  double D = 0.0;

  void merge(Accum& o) {
    for (size_t l = 0; l < gram.size(); ++l) gram[l] += o.gram[l];
    for (size_t t = 0; t < bispec.size(); ++t) bispec[t] += o.bispec[t];
    D += o.D;
  }
};

Accum make_accum(const SphericalSpec3D& spec) {
  Accum a;
  for (int l = 0; l <= spec.L_max; ++l) a.gram.emplace_back(MatrixXcd::Zero(spec.R(), spec.R()));
  const long npairs = InvariantSet3D::qpair_index(spec.R() - 1, spec.R() - 1, spec.R()) + 1;
  a.bispec.assign(spec.ell_triples.size(), MatrixXcd::Zero(npairs, spec.R()));
  return a;
}

void accumulate_invariants(Accum& acc, const Engine& eng, const MatrixXcd& H, double w) {
  const SphericalSpec3D& spec = eng.spec;
  const int R = spec.R();
  for (int l = 0; l <= spec.L_max; ++l) {
    const auto Hl = H.middleCols(lm_index(l, -l), 2 * l + 1);  // R x (2l+1)
    acc.gram[size_t(l)] += w * (Hl.conjugate() * Hl.transpose());
  }
  for (size_t t = 0; t < spec.ell_triples.size(); ++t) {
    MatrixXcd& B = acc.bispec[t];
    for (const auto& term : eng.plans[t]) {
      // non-conjugated Gaunt contraction: rotation-invariant for any
      // coefficient table (and real-valued on real signals)
      const Eigen::RowVectorXcd h3 = H.col(term.lm3).transpose();
      for (int q1 = 0; q1 < R; ++q1) {
        const cplx f1 = w * term.g * H(q1, term.lm1);
        for (int q2 = q1; q2 < R; ++q2) {
          B.row(InvariantSet3D::qpair_index(q1, q2, R)) += (f1 * H(q2, term.lm2)) * h3;
        }
      }
    }
  }
  acc.D += w;
}

Accum run_extraction(const Grid& grid, const SphericalSpec3D& spec, const Engine& eng) {
  const long n_t = spec.n_translations();
  Accum total = chunked_reduce<Accum>(
      n_t, 16, [&] { return make_accum(spec); },
      [&](Accum& acc, long j) {
        const Vector3d t = spec.translation_grid.row(j).transpose();
        const double w = eng.boundary_weight(grid, t);
        if (w == 0.0) return;
        const MatrixXcd H = eng.shell_coeffs(grid, t);
        accumulate_invariants(acc, eng, H, w);
      },
      [](Accum& a, Accum& b) { a.merge(b); });
  require(total.D != 0.0, "degenerate-boundary",
          "boundary weights vanish; antipodal-correlation assumption violated numerically");
  return total;
}

std::vector<MatrixXd> legendre_synthesis(const std::vector<MatrixXcd>& gram,
                                         const VectorXd& mu_nodes) {
  std::vector<MatrixXd> out;
  for (long k = 0; k < mu_nodes.size(); ++k) {
    MatrixXcd acc = MatrixXcd::Zero(gram[0].rows(), gram[0].cols());
    for (size_t l = 0; l < gram.size(); ++l) {
      acc += double(2 * l + 1) * harmonics::legendre_p(int(l), mu_nodes[k]) * gram[l];
    }
    out.push_back(acc.real());
  }
  return out;
}

InvariantSet3D finalize(const Accum& acc, const SphericalSpec3D& spec) {
  InvariantSet3D inv;
  inv.L_max = spec.L_max;
  inv.R = spec.R();
  inv.ell_triples = spec.ell_triples;
  inv.mu_nodes = spec.gl_nodes.nodes;
  for (const auto& G : acc.gram) inv.gram.push_back(G / acc.D);
  for (size_t t = 0; t < acc.bispec.size(); ++t) {
    MatrixXcd B = acc.bispec[t] / acc.D;
    // fold in the radial triple overlap (Definition-style invariant)
    for (int q1 = 0; q1 < inv.R; ++q1)
      for (int q2 = q1; q2 < inv.R; ++q2)
        for (int q3 = 0; q3 < inv.R; ++q3)
          B(InvariantSet3D::qpair_index(q1, q2, inv.R), q3) *= spec.shells.triple(q1, q2, q3);
    inv.bispec.push_back(std::move(B));
  }
  inv.m2_legendre = legendre_synthesis(inv.gram, inv.mu_nodes);
  return inv;
}

}  // namespace

double ShCoeffTable::conjugation_defect() const {
  double mx = 0.0;
  for (int l = 0; l <= L_max; ++l) {
    for (int m = -l; m <= l; ++m) {
      for (int q = 0; q < R; ++q) {
        cplx want = std::conj(coeff(l, m, q));
        if (m & 1) want = -want;
        mx = std::max(mx, std::abs(coeff(l, -m, q) - want));
      }
    }
  }
  return mx;
}

void ShCoeffTable::hermitianize() {
  for (int l = 0; l <= L_max; ++l) {
    for (int m = 1; m <= l; ++m) {
      for (int q = 0; q < R; ++q) {
        cplx a = coeff(l, m, q);
        cplx b = std::conj(coeff(l, -m, q));
        if (m & 1) b = -b;
        const cplx avg = 0.5 * (a + b);
        blocks[size_t(l)](m + l, q) = avg;
        cplx neg = std::conj(avg);
        if (m & 1) neg = -neg;
        blocks[size_t(l)](-m + l, q) = neg;
      }
    }
    for (int q = 0; q < R; ++q)
      blocks[size_t(l)](l, q) = cplx(blocks[size_t(l)](l, q).real(), 0.0);
  }
}

SphericalSpec3D make_spherical_spec(const Grid& grid, int L_max, int R_max, int N_ang, int N_r,
                                    double delta, double margin_vox, int K_gl) {
  require(grid.dim == 3, "bad-argument", "3D spec needs a volume grid");
  SphericalSpec3D spec;
  spec.L_max = L_max;
  spec.N_r = N_r > 0 ? N_r : std::max(64, 8 * R_max);
  spec.delta = delta;
  spec.shells = harmonics::make_shell_basis(R_max, harmonics::default_shell_width(R_max), spec.N_r);
  spec.sphere_quad = harmonics::fibonacci_sphere(N_ang);
  spec.gl_nodes = harmonics::gauss_legendre(K_gl > 0 ? K_gl : 2 * L_max + 2);
  spec.gaunt = std::make_shared<harmonics::GauntTable>(L_max);

  const double R = grid.support_radius;
  const double radius =
      R * std::sqrt(std::max(0.0, 1.0 - (1.0 - delta) * (1.0 - delta))) + margin_vox * grid.spacing;
  const int n_vox = int(std::floor(radius / grid.spacing));
  std::vector<Vector3d> centers;
  for (int i = -n_vox; i <= n_vox; ++i)
    for (int j = -n_vox; j <= n_vox; ++j)
      for (int k = -n_vox; k <= n_vox; ++k) {
        const Vector3d t(i * grid.spacing, j * grid.spacing, k * grid.spacing);
        if (t.norm() <= radius) centers.push_back(t);
      }
  spec.translation_grid.resize(long(centers.size()), 3);
  for (size_t c = 0; c < centers.size(); ++c) spec.translation_grid.row(long(c)) = centers[c];

  // Default triple list: admissible (l1,l2,l3), l1,l2 <= l3 <= L_max.
  for (int l3 = 0; l3 <= L_max; ++l3)
    for (int l1 = 0; l1 <= l3; ++l1)
      for (int l2 = 0; l2 <= l3; ++l2) {
        if (l3 < std::abs(l1 - l2) || l3 > l1 + l2) continue;
        if ((l1 + l2 + l3) & 1) continue;
        spec.ell_triples.push_back({l1, l2, l3});
      }
  return spec;
}

int InvariantSet3D::triple_index(int l1, int l2, int l3) const {
  for (size_t t = 0; t < ell_triples.size(); ++t) {
    if (ell_triples[t][0] == l1 && ell_triples[t][1] == l2 && ell_triples[t][2] == l3)
      return int(t);
  }
  return -1;
}

cplx InvariantSet3D::bispec_at(int l1, int l2, int l3, int a, int b, int c,
                               bool* admissible) const {
  if (admissible) *admissible = true;
  const bool bad_triangle = l3 < std::abs(l1 - l2) || l3 > l1 + l2 || ((l1 + l2 + l3) & 1);
  if (bad_triangle) {
    if (admissible) *admissible = false;
    return 0.0;
  }
  int L1 = l1, L2 = l2, A = a, B = b;
  if (A > B) {  // B(l1,l2,l3)(a,b,c) = B(l2,l1,l3)(b,a,c)
    std::swap(L1, L2);
    std::swap(A, B);
  }
  const int t = triple_index(L1, L2, l3);
  require(t >= 0, "missing-triple", "bispectrum triple not stored");
  return bispec[size_t(t)](qpair_index(A, B, R), c);
}

VectorXcd sht_at_translation(const Grid& grid, const Vector3d& t, double radius,
                             const SphericalSpec3D& spec) {
  const int nlm = (spec.L_max + 1) * (spec.L_max + 1);
  VectorXcd out = VectorXcd::Zero(nlm);
  std::vector<double> col(size_t(spec.L_max + 1));
  for (int i = 0; i < spec.sphere_quad.size(); ++i) {
    const Vector3d w = spec.sphere_quad.directions.row(i).transpose();
    const double f = grids::sample(grid, t + radius * w);
    if (f == 0.0) continue;
    const double z = w[2];
    const double phi = std::atan2(w[1], w[0]);
    for (int m = 0; m <= spec.L_max; ++m) {
      harmonics::normalized_assoc_legendre(spec.L_max, m, z, col.data());
      const cplx e = std::polar(1.0, -double(m) * phi);
      for (int l = m; l <= spec.L_max; ++l) {
        const cplx contrib = spec.sphere_quad.weights[i] * f * col[size_t(l)];
        out[lm_index(l, m)] += contrib * e;
        if (m > 0) {
          cplx y = contrib * std::conj(e);
          if (m & 1) y = -y;
          out[lm_index(l, -m)] += y;
        }
      }
    }
  }
  return out;
}

ShCoeffTable shell_project(const MatrixXcd& radial_coeffs, const SphericalSpec3D& spec) {
  require(radial_coeffs.rows() == spec.N_r, "bad-argument", "radial sample count mismatch");
  const auto& rq = spec.shells.radial_quadrature;
  ShCoeffTable table = ShCoeffTable::zeros(spec.L_max, spec.R());
  for (int q = 0; q < spec.R(); ++q) {
    for (int l = 0; l <= spec.L_max; ++l) {
      for (int m = -l; m <= l; ++m) {
        cplx acc = 0.0;
        for (int n = 0; n < spec.N_r; ++n) {
          acc += rq.weights[n] * spec.shells.window(q, rq.nodes[n]) * radial_coeffs(n, lm_index(l, m));
        }
        table.at(l)(m + l, q) = acc;
      }
    }
  }
  return table;
}

BoundaryWeights3D boundary_weights_3d(const Grid& grid, const SphericalSpec3D& spec) {
  Engine eng(grid, spec);
  BoundaryWeights3D bw;
  bw.s.resize(spec.n_translations());
  parallel_for(spec.n_translations(), [&](long j) {
    bw.s[j] = eng.boundary_weight(grid, spec.translation_grid.row(j).transpose());
  });
  bw.D = bw.s.sum();
  require(bw.D != 0.0, "degenerate-boundary",
          "boundary weights vanish; antipodal-correlation assumption violated numerically");
  return bw;
}

Gamma2_3D gamma2_3d(const Grid& grid, const SphericalSpec3D& spec) {
  Engine eng(grid, spec);
  Accum acc = run_extraction(grid, spec, eng);
  Gamma2_3D out;
  for (const auto& G : acc.gram) out.gram.push_back(G / acc.D);
  out.mu_nodes = spec.gl_nodes.nodes;
  out.m2_legendre = legendre_synthesis(out.gram, out.mu_nodes);
  return out;
}

std::vector<MatrixXcd> gamma3_3d(const Grid& grid, const SphericalSpec3D& spec) {
  Engine eng(grid, spec);
  Accum acc = run_extraction(grid, spec, eng);
  std::vector<MatrixXcd> out;
  for (const auto& B : acc.bispec) out.push_back(B / acc.D);
  return out;
}

InvariantSet3D extract_invariants_3d(const Grid& grid, const SphericalSpec3D& spec) {
  Engine eng(grid, spec);
  Accum acc = run_extraction(grid, spec, eng);
  return finalize(acc, spec);
}

std::vector<MatrixXcd> gram_of(const ShCoeffTable& table) {
  std::vector<MatrixXcd> gram;
  for (int l = 0; l <= table.L_max; ++l) {
    const MatrixXcd& F = table.at(l);  // (2l+1) x R
    gram.push_back(F.adjoint() * F);   // R x R
  }
  return gram;
}

InvariantSet3D invariants_of(const ShCoeffTable& table, const SphericalSpec3D& spec) {
  InvariantSet3D inv;
  inv.L_max = table.L_max;
  inv.R = table.R;
  inv.ell_triples = spec.ell_triples;
  inv.gram = gram_of(table);
  inv.mu_nodes = spec.gl_nodes.nodes;
  inv.m2_legendre = legendre_synthesis(inv.gram, inv.mu_nodes);
  const int R = table.R;
  const long npairs = InvariantSet3D::qpair_index(R - 1, R - 1, R) + 1;
  for (const auto& [l1, l2, l3] : spec.ell_triples) {
    MatrixXcd B = MatrixXcd::Zero(npairs, R);
    for (int m1 = -l1; m1 <= l1; ++m1) {
      for (int m2 = -l2; m2 <= l2; ++m2) {
        const int m3 = -m1 - m2;
        if (std::abs(m3) > l3) continue;
        const double g = (*spec.gaunt)(l1, l2, l3, m1, m2);
        if (g == 0.0) continue;
        for (int q1 = 0; q1 < R; ++q1) {
          const cplx f1 = g * table.coeff(l1, m1, q1);
          for (int q2 = q1; q2 < R; ++q2) {
            const cplx f12 = f1 * table.coeff(l2, m2, q2);
            for (int q3 = 0; q3 < R; ++q3) {
              B(InvariantSet3D::qpair_index(q1, q2, R), q3) += f12 * table.coeff(l3, m3, q3);
            }
          }
        }
      }
    }
    for (int q1 = 0; q1 < R; ++q1)
      for (int q2 = q1; q2 < R; ++q2)
        for (int q3 = 0; q3 < R; ++q3)
          B(InvariantSet3D::qpair_index(q1, q2, R), q3) *= spec.shells.triple(q1, q2, q3);
    inv.bispec.push_back(std::move(B));
  }
  return inv;
}

InvariantSet3D so3_moments_direct(const Grid& volume, const SphericalSpec3D& spec,
                                  int rotation_quad) {
  Engine eng(volume, spec);
  // Super-Fibonacci rotation set.
  std::vector<Eigen::Matrix3d> rots;
  {
    const double phi = std::sqrt(2.0);
    const double psi = 1.533751168755204288118041;
    for (int i = 0; i < rotation_quad; ++i) {
      const double s = i + 0.5;
      const double tt = s / rotation_quad;
      const double d = kTwoPi * s;
      const double r = std::sqrt(tt), Rr = std::sqrt(1.0 - tt);
      Eigen::Quaterniond q(Rr * std::cos(d / psi), r * std::sin(d / phi), r * std::cos(d / phi),
                           Rr * std::sin(d / psi));
      rots.push_back(q.normalized().toRotationMatrix());
    }
  }
  const int Nr = spec.N_r;
  const int na = spec.sphere_quad.size();

  Accum total = chunked_reduce<Accum>(
      long(rots.size()), 8, [&] { return make_accum(spec); },
      [&](Accum& acc, long k) {
        // coefficients of the rotated volume: sample along rotated directions
        const Eigen::Matrix3d Rinv = rots[size_t(k)].transpose();
        MatrixXd F(Nr, na);
        for (int n = 0; n < Nr; ++n) {
          const double r = spec.shells.radial_quadrature.nodes[n] * eng.R_sup;
          for (int i = 0; i < na; ++i) {
            const Vector3d w = Rinv * spec.sphere_quad.directions.row(i).transpose();
            F(n, i) = grids::sample(volume, r * w);
          }
        }
        MatrixXcd C(Nr, eng.Yw.cols());
        C.real() = F * eng.Yw.real();
        C.imag() = F * eng.Yw.imag();
        const MatrixXcd H = eng.Wmat * C;
        accumulate_invariants(acc, eng, H, 1.0);
      },
      [](Accum& a, Accum& b) { a.merge(b); });
  return finalize(total, spec);
}

double invariant_rel_error(const InvariantSet3D& truth, const InvariantSet3D& other) {
  double num = 0.0, den = 0.0;
  for (size_t l = 0; l < truth.gram.size(); ++l) {
    num += (truth.gram[l] - other.gram[l]).squaredNorm();
    den += truth.gram[l].squaredNorm();
  }
  for (size_t t = 0; t < truth.bispec.size(); ++t) {
    num += (truth.bispec[t] - other.bispec[t]).squaredNorm();
    den += truth.bispec[t].squaredNorm();
  }
  return std::sqrt(num / den);
}

// ---- serialization: JSON index + little-endian f64 payload blocks ----------

namespace {

void write_block(std::ofstream& os, const MatrixXcd& m) {
  for (long c = 0; c < m.cols(); ++c)
    for (long r = 0; r < m.rows(); ++r) {
      const double re = m(r, c).real(), im = m(r, c).imag();
      os.write(reinterpret_cast<const char*>(&re), 8);
      os.write(reinterpret_cast<const char*>(&im), 8);
    }
}

MatrixXcd read_block(std::ifstream& is, long rows, long cols) {
  MatrixXcd m(rows, cols);
  for (long c = 0; c < cols; ++c)
    for (long r = 0; r < rows; ++r) {
      double re, im;
      is.read(reinterpret_cast<char*>(&re), 8);
      is.read(reinterpret_cast<char*>(&im), 8);
      require(bool(is), "truncated", "invariant payload ended early");
      m(r, c) = cplx(re, im);
    }
  return m;
}

}  // namespace

void save_invariants(const InvariantSet3D& inv, const std::string& path) {
  json idx;
  idx["kind"] = "invariants3d";
  idx["L_max"] = inv.L_max;
  idx["R"] = inv.R;
  idx["mu_nodes"] = std::vector<double>(inv.mu_nodes.data(), inv.mu_nodes.data() + inv.mu_nodes.size());
  json triples = json::array();
  for (const auto& t : inv.ell_triples) triples.push_back({t[0], t[1], t[2]});
  idx["ell_triples"] = triples;
  std::ofstream js(path + ".json");
  require(bool(js), "io", "cannot write " + path + ".json");
  js << idx.dump(2) << "\n";

  std::ofstream os(path + ".bin", std::ios::binary);
  require(bool(os), "io", "cannot write " + path + ".bin");
  for (const auto& G : inv.gram) write_block(os, G);
  for (const auto& B : inv.bispec) write_block(os, B);
  for (const auto& M : inv.m2_legendre) write_block(os, M.cast<cplx>());
}

InvariantSet3D load_invariants(const std::string& path) {
  std::ifstream js(path + ".json");
  require(bool(js), "io", "cannot open " + path + ".json");
  json idx = json::parse(js);
  require(idx.value("kind", "") == std::string("invariants3d"), "bad-magic",
          "not an invariant index");
  InvariantSet3D inv;
  inv.L_max = idx.at("L_max").get<int>();
  inv.R = idx.at("R").get<int>();
  const auto mu = idx.at("mu_nodes").get<std::vector<double>>();
  inv.mu_nodes = Eigen::Map<const VectorXd>(mu.data(), long(mu.size()));
  for (const auto& t : idx.at("ell_triples"))
    inv.ell_triples.push_back({t[0].get<int>(), t[1].get<int>(), t[2].get<int>()});
  std::ifstream is(path + ".bin", std::ios::binary);
  require(bool(is), "io", "cannot open " + path + ".bin");
  const long npairs = InvariantSet3D::qpair_index(inv.R - 1, inv.R - 1, inv.R) + 1;
  for (int l = 0; l <= inv.L_max; ++l) inv.gram.push_back(read_block(is, inv.R, inv.R));
  for (size_t t = 0; t < inv.ell_triples.size(); ++t)
    inv.bispec.push_back(read_block(is, npairs, inv.R));
  for (long k = 0; k < inv.mu_nodes.size(); ++k)
    inv.m2_legendre.push_back(read_block(is, inv.R, inv.R).real());
  return inv;
}

void save_coeff_table(const ShCoeffTable& t, const std::string& path) {
  json idx;
  idx["kind"] = "shcoeff";
  idx["L_max"] = t.L_max;
  idx["R"] = t.R;
  std::ofstream js(path + ".json");
  require(bool(js), "io", "cannot write " + path + ".json");
  js << idx.dump(2) << "\n";
  std::ofstream os(path + ".bin", std::ios::binary);
  require(bool(os), "io", "cannot write " + path + ".bin");
  for (const auto& b : t.blocks) write_block(os, b);
}

ShCoeffTable load_coeff_table(const std::string& path) {
  std::ifstream js(path + ".json");
  require(bool(js), "io", "cannot open " + path + ".json");
  json idx = json::parse(js);
  require(idx.value("kind", "") == std::string("shcoeff"), "bad-magic", "not a coefficient table");
  ShCoeffTable t = ShCoeffTable::zeros(idx.at("L_max").get<int>(), idx.at("R").get<int>());
  std::ifstream is(path + ".bin", std::ios::binary);
  require(bool(is), "io", "cannot open " + path + ".bin");
  for (int l = 0; l <= t.L_max; ++l) t.blocks[size_t(l)] = read_block(is, 2 * l + 1, t.R);
  return t;
}

}  // namespace orbit::extract3d
