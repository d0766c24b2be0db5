#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "core.hpp"
#include "functionals.hpp"
#include "measures.hpp"
#include "processes.hpp"
#include "quadrature.hpp"

namespace fklab::spectral {

using processes::ProcessSpec;
using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;
using Trip = Eigen::Triplet<double>;

struct Mesh {
  double h = 1.0 / 64;
  double L = 8.0;
};

enum class Mode { grid1d, radial3d };

// Discretized pieces of Q(f,g) = E(f,g) + E(u,fg) - H(f,g) on Dirichlet nodes.
struct FormDiscretization {
  Mode mode = Mode::grid1d;
  Mesh mesh;
  ProcessSpec spec;
  std::vector<double> nodes;  // x_i (grid1d) or r_i (radial3d); unknowns are f_i or g_i = r_i f(r_i)
  SpMat stiffness;
  SpMat drift_coupling;
  SpMat H_matrix;
  SpMat mass_m;
  Vec mass_mubar1;  // diagonal of mu_bar_1
  Vec mass_mubar2;  // diagonal of mu_bar_2
  double jump_tail_bound = 0.0;
  bool has_jump_block = false;

  std::size_t size() const { return nodes.size(); }
  double weight() const { return mode == Mode::radial3d ? 4.0 * kPi * mesh.h : mesh.h; }

  // diagonal mass of a (positive) density on the nodes, cell-averaged
  Vec mass_of(const std::function<double(double)>& dens, double support) const {
    const double h = mesh.h;
    Vec m = Vec::Zero(size());
    for (std::size_t i = 0; i < size(); ++i) {
      const double c = nodes[i];
      const double a = c - 0.5 * h, b = c + 0.5 * h;
      if (std::min(std::abs(a), std::abs(b)) > support && a * b > 0.0) continue;
      // split at the support edge so discontinuities sit on breakpoints
      std::vector<double> br{a, b};
      for (double e : {-support, support, 0.0})
        if (e > a && e < b) br.push_back(e);
      std::sort(br.begin(), br.end());
      double s = 0.0;
      for (std::size_t k = 1; k < br.size(); ++k) s += quad::gk(dens, br[k - 1], br[k], 1e-10, 10).value;
      m[i] = weight() * s / h;
    }
    return m;
  }

  Vec mass_of(const MeasureSpec& mu, int part = +1) const {
    if (mu.is_zero()) return Vec::Zero(size());
    if (mode == Mode::radial3d) {
      if (!mu.radial()) fail(Errc::unsupported_regime, "radial mode needs radial measures");
      return mass_of([&](double r) { return mu.radial_value(std::abs(r), part); }, mu.support_radius);
    }
    return mass_of(
        [&](double x) {
          const double p[1] = {x};
          const PointView v(p, 1);
          return part > 0 ? mu.pos(v) : (part < 0 ? mu.neg(v) : mu.total(v));
        },
        mu.support_radius);
  }

  // discrete integral of f^2 against a diagonal mass
  double quad_form(const Vec& f, const Vec& mass) const { return f.dot(mass.asDiagonal() * f); }
};

// ---------------------------------------------------------------------------
// assembly

namespace detail {

inline SpMat diag(const Vec& d) {
  SpMat m(d.size(), d.size());
  std::vector<Trip> t;
  for (int i = 0; i < d.size(); ++i)
    if (d[i] != 0.0) t.emplace_back(i, i, d[i]);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

// 1/2 * coef/h * sum (f_{i+1}-f_i)^2 with zero Dirichlet ends
inline SpMat laplacian(std::size_t n, double coef) {
  std::vector<Trip> t;
  for (std::size_t i = 0; i < n; ++i) {
    t.emplace_back(i, i, coef);
    if (i + 1 < n) {
      t.emplace_back(i, i + 1, -0.5 * coef);
      t.emplace_back(i + 1, i, -0.5 * coef);
    }
  }
  SpMat m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

}  // namespace detail

inline FormDiscretization assemble(const ProcessSpec& spec, const functionals::PotentialU* u, const MeasureSpec& mu,
                                   const JumpPerturbation* F, const Mesh& mesh) {
  spec.validate();
  FormDiscretization D;
  D.mesh = mesh;
  D.spec = spec;
  const double h = mesh.h, L = mesh.L;
  if (!(h > 0.0) || !(L > 0.0)) fail(Errc::mesh_too_coarse, "mesh needs h > 0 and L > 0");
  double supp = mu.is_zero() ? 0.0 : mu.support_radius;
  if (u && u->kind == functionals::PotentialU::Kind::resolvent_potential) {
    if (!u->nu1.is_zero()) supp = std::max(supp, u->nu1.support_radius);
    if (!u->nu2.is_zero()) supp = std::max(supp, u->nu2.support_radius);
  }
  if (supp > 0.0 && h > supp / 8.0 * (1.0 + 1e-12)) fail(Errc::mesh_too_coarse, "need >= 8 cells across the support");
  if (L < 3.0 * supp * (1.0 - 1e-12)) fail(Errc::mesh_too_coarse, "box half-width must be >= 3 support radii");

  const bool jump = spec.is_stable();
  if (spec.dim == 1) {
    D.mode = Mode::grid1d;
    const long n = std::lround(2.0 * L / h) - 1;
    if (n < 3) fail(Errc::mesh_too_coarse, "fewer than 3 interior nodes");
    for (long i = 1; i <= n; ++i) D.nodes.push_back(-L + i * h);
  } else if (spec.dim == 3 && spec.is_brownian()) {
    D.mode = Mode::radial3d;
    if (!mu.radial()) fail(Errc::unsupported_regime, "d=3 assembly uses the radial reduction");
    if (u && u->kind == functionals::PotentialU::Kind::ell_beta) fail(Errc::unsupported_process, "l_beta is 1-d");
    const long n = std::lround(L / h) - 1;
    for (long i = 1; i <= n; ++i) D.nodes.push_back(i * h);
  } else {
    fail(Errc::unsupported_process, "assembly supports d=1 (Brownian or stable) and radial d=3 Brownian");
  }
  const std::size_t n = D.size();
  const double w = D.weight();

  // E(f,f)
  if (!jump) {
    const double coef = D.mode == Mode::radial3d ? 4.0 * kPi / h : 1.0 / h;
    D.stiffness = detail::laplacian(n, coef);
  } else {
    const double a = spec.alpha_stable_index, C = processes::levy_constant(a);
    auto tail = [&](double d) { return C * std::pow(d, -a) / a; };  // int_d^inf nu
    std::vector<double> W(n + 1, 0.0);
    for (std::size_t m = 1; m <= n; ++m) W[m] = tail((m - 0.5) * h) - tail((m + 0.5) * h);
    const double local = 2.0 * C * std::pow(0.5 * h, 2.0 - a) / (2.0 - a);  // int_{|z|<h/2} z^2 nu
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      double diag = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double wij = h * W[i > j ? i - j : j - i];
        S(i, j) -= wij;
        diag += wij;
      }
      const double xi = D.nodes[i];
      diag += h * (tail(xi - (-L + 0.5 * h)) + tail((L - 0.5 * h) - xi));
      S(i, i) += diag;
    }
    SpMat loc = detail::laplacian(n, local / h);
    D.stiffness = S.sparseView() + loc;
    D.jump_tail_bound = 0.0;  // exterior handled exactly
  }

  // E(u, fg) and the energy measure of u
  D.drift_coupling = SpMat(n, n);
  Vec energy = Vec::Zero(n);
  if (u && !u->is_zero()) {
    if (jump) fail(Errc::unsupported_process, "u != 0 with jumps is outside the implemented scope");
    const auto pu = functionals::prepare(*u, spec);
    std::vector<double> uv(n + 2);
    auto node = [&](long i) {  // includes the two boundary nodes
      if (D.mode == Mode::radial3d) return i * h;
      return -L + i * h;
    };
    for (long i = 0; i <= static_cast<long>(n) + 1; ++i) {
      const double x = node(i);
      if (D.mode == Mode::radial3d) {
        const double p[3] = {x, 0.0, 0.0};
        uv[i] = pu.value(PointView(p, 3));
      } else {
        const double p[1] = {x};
        uv[i] = pu.value(PointView(p, 1));
      }
    }
    Vec dd = Vec::Zero(n);
    for (long e = 0; e <= static_cast<long>(n); ++e) {
      // edge between node e and e+1
      const double grad = (uv[e + 1] - uv[e]) / h;
      double we = 0.5 * grad;
      if (D.mode == Mode::radial3d) {
        const double re = (e + 0.5) * h;
        we *= 4.0 * kPi * re * re;
      }
      // sum_e we * ((fg)_{e+1} - (fg)_e)
      if (e >= 1) dd[e - 1] -= we;
      if (e + 1 <= static_cast<long>(n)) dd[e] += we;
      // 1/2 |grad u|^2 split to the two end nodes
      const double en = 0.5 * grad * grad * 0.5;
      if (e >= 1) energy[e - 1] += en * w;
      if (e + 1 <= static_cast<long>(n)) energy[e] += en * w;
    }
    if (D.mode == Mode::radial3d)
      for (std::size_t i = 0; i < n; ++i) dd[i] /= D.nodes[i] * D.nodes[i];
    D.drift_coupling = detail::diag(dd);
  }

  // H(f,g) = int fg dmu + jump block, and the measures mu_bar_1, mu_bar_2
  const Vec m_pos = D.mass_of(mu, +1), m_neg = D.mass_of(mu, -1);
  SpMat H = detail::diag(m_pos - m_neg);
  Vec nbar1 = Vec::Zero(n), nbar2 = Vec::Zero(n);
  if (jump && F && !F->is_zero()) {
    const double a = spec.alpha_stable_index, C = processes::levy_constant(a);
    auto tail = [&](double d) { return C * std::pow(d, -a) / a; };
    std::vector<Trip> t;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double xi[1] = {D.nodes[i]}, xj[1] = {D.nodes[j]};
        const double Fv = F->value(PointView(xi, 1), PointView(xj, 1));
        if (Fv == 0.0) continue;
        const std::size_t m = i > j ? i - j : j - i;
        t.emplace_back(i, j, h * (tail((m - 0.5) * h) - tail((m + 0.5) * h)) * std::expm1(Fv));
      }
    SpMat Hj(n, n);
    Hj.setFromTriplets(t.begin(), t.end());
    H += Hj;
    D.has_jump_block = Hj.nonZeros() > 0;
    // N(e^F - F - 1 + F_1) and N(F_2) by quadrature against the Levy density
    auto J = [a](PointView x, PointView y) { return processes::levy_density(a, x[0] - y[0]); };
    std::vector<double> br;
    if (F->thr_pos) br.push_back(F->thr_pos->min_jump);
    if (F->thr_neg) br.push_back(F->thr_neg->min_jump);
    auto G1 = [F](PointView x, PointView y) {
      const double f = F->value(x, y);
      return std::expm1(f) - f + F->pos(x, y);
    };
    auto G2 = [F](PointView x, PointView y) { return F->neg(x, y); };
    for (std::size_t i = 0; i < n; ++i) {
      const double xi[1] = {D.nodes[i]};
      nbar1[i] = w * functionals::compensator_NF(PointView(xi, 1), G1, J, F->min_jump, br);
      nbar2[i] = F->thr_neg || F->F_neg ? w * functionals::compensator_NF(PointView(xi, 1), G2, J, F->min_jump, br) : 0.0;
    }
  }
  D.H_matrix = H;
  D.mass_m = detail::diag(Vec::Constant(n, w));
  D.mass_mubar1 = nbar1 + m_pos + energy;
  D.mass_mubar2 = nbar2 + m_neg;
  return D;
}

// ---------------------------------------------------------------------------
// generalized eigenproblem A f = lambda B f, B diagonal >= 0

struct SpectralResult {
  double lambda = 0.0;
  Vec eigvec;
  double alpha = 0.0;
  Mesh mesh;
  double residual = 0.0;
  bool converged = false;
  bool minus_infinity = false;  // A not positive on ker B
  int iterations = 0;
};

namespace detail {

struct Factor {
  Eigen::SimplicialLDLT<SpMat> ldlt;
  bool ok = false;
  long negatives = 0;
};

inline void factor(Factor& f, const SpMat& M) {
  f.ldlt.compute(M);
  f.ok = f.ldlt.info() == Eigen::Success;
  f.negatives = 0;
  if (!f.ok) return;
  const Vec d = f.ldlt.vectorD();
  for (int i = 0; i < d.size(); ++i) {
    if (!(d[i] > 0.0)) ++f.negatives;
  }
}

inline double inf_norm(const SpMat& A) {
  Vec rs = Vec::Zero(A.rows());
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it) rs[it.row()] += std::abs(it.value());
  return rs.maxCoeff();
}

}  // namespace detail

inline SpectralResult solve_pencil(const SpMat& A, const Vec& b, int max_iter = 500) {
  SpectralResult res;
  const int n = static_cast<int>(b.size());
  std::vector<int> S, N;
  for (int i = 0; i < n; ++i) (b[i] > 0.0 ? S : N).push_back(i);
  if (S.empty()) fail(Errc::singular_pencil, "B has an empty positive part");

  // A restricted to ker B must be positive definite, else the infimum is -inf
  if (!N.empty()) {
    std::vector<int> pos(n, -1);
    for (std::size_t k = 0; k < N.size(); ++k) pos[N[k]] = static_cast<int>(k);
    std::vector<Trip> t;
    for (int k = 0; k < A.outerSize(); ++k)
      for (SpMat::InnerIterator it(A, k); it; ++it)
        if (pos[it.row()] >= 0 && pos[it.col()] >= 0) t.emplace_back(pos[it.row()], pos[it.col()], it.value());
    SpMat ANN(N.size(), N.size());
    ANN.setFromTriplets(t.begin(), t.end());
    detail::Factor f;
    detail::factor(f, ANN);
    if (!f.ok || f.negatives > 0) {
      res.lambda = -kInf;
      res.minus_infinity = true;
      res.converged = true;
      return res;
    }
  }
  const SpMat B = detail::diag(b);
  auto inertia = [&](double s) {
    detail::Factor f;
    detail::factor(f, A - s * B);
    return f.ok ? f.negatives : static_cast<long>(n);
  };

  // bracket lambda_1: lo with no eigenvalue below, hi from a Rayleigh quotient
  Vec v = Vec::Zero(n);
  for (int i : S) v[i] = 1.0;
  double hi = v.dot(A * v) / v.dot(B * v);
  double lo = std::min(0.0, hi) - 1.0;
  for (int k = 0; k < 200 && inertia(lo) > 0; ++k) lo = 2.0 * lo - 1.0;
  double step = std::max(1.0, std::abs(hi)) * 1e-12;
  while (inertia(hi) == 0) {
    hi += step;
    step *= 4.0;
  }
  for (int k = 0; k < 200 && (hi - lo) > 1e-9 * std::max(1.0, std::abs(hi)); ++k) {
    const double mid = 0.5 * (lo + hi);
    (inertia(mid) == 0 ? lo : hi) = mid;
  }
  const double sigma = lo - 1e-9 * std::max(1.0, std::abs(lo));

  detail::Factor f;
  detail::factor(f, A - sigma * B);
  if (!f.ok) fail(Errc::singular_pencil, "shifted factorization failed");
  Vec x = v;
  x /= std::sqrt(x.dot(B * x));
  const double anorm = detail::inf_norm(A);
  double lam = x.dot(A * x);
  for (int it = 0; it < max_iter; ++it) {
    Vec y = f.ldlt.solve(B * x);
    const double nb = std::sqrt(y.dot(B * y));
    if (!(nb > 0.0)) break;
    x = y / nb;
    lam = x.dot(A * x);
    const double r = (A * x - lam * (B * x)).norm() / (anorm * x.norm());
    res.iterations = it + 1;
    res.residual = r;
    if (r < 1e-10) {
      res.converged = true;
      break;
    }
  }
  res.lambda = lam;
  res.eigvec = x;
  return res;
}

// lambda^{Q_alpha}(nu) for nu given as a diagonal mass on the disc nodes
inline SpMat q_matrix(const FormDiscretization& D, double alpha) {
  return D.stiffness + D.drift_coupling - D.H_matrix + alpha * D.mass_m;
}

inline SpectralResult lambda_Q(const FormDiscretization& D, const Vec& nu_mass, double alpha) {
  if (!(alpha >= 0.0)) fail(Errc::invalid_input, "alpha must be >= 0");
  auto r = solve_pencil(q_matrix(D, alpha), nu_mass);
  r.alpha = alpha;
  r.mesh = D.mesh;
  return r;
}

inline SpectralResult lambda_Q(const FormDiscretization& D, double alpha) { return lambda_Q(D, D.mass_mubar1, alpha); }

// inf 1/2 int |grad f|^2 + int f^2 dmu_minus  subject to  int f^2 dmu_plus = 1
inline SpectralResult takeda_lambda(const MeasureSpec& mu_plus, const MeasureSpec& mu_minus,
                                    const FormDiscretization& D) {
  const Vec bp = D.mass_of(mu_plus, 0), bm = D.mass_of(mu_minus, 0);
  auto r = solve_pencil(D.stiffness + detail::diag(bm), bp);
  r.mesh = D.mesh;
  return r;
}

// ---------------------------------------------------------------------------
// convergence studies

struct MeshRow {
  Mesh mesh;
  double lambda;
  bool converged;
};

struct MeshStudy {
  std::vector<MeshRow> rows;
  double extrapolated = 0.0;
  double observed_order = 0.0;
  bool monotone = true;
};

struct SpectralProblem {
  ProcessSpec spec;
  std::optional<functionals::PotentialU> u;
  MeasureSpec mu = MeasureSpec::zero();
  std::optional<JumpPerturbation> F;
  double alpha = 0.0;

  SpectralResult solve(const Mesh& m) const {
    const auto D = assemble(spec, u ? &*u : nullptr, mu, F ? &*F : nullptr, m);
    return lambda_Q(D, alpha);
  }
};

// Richardson extrapolation over the last three meshes
inline MeshStudy richardson(std::vector<MeshRow> rows) {
  MeshStudy st;
  st.rows = std::move(rows);
  const std::size_t k = st.rows.size();
  if (k == 0) return st;
  st.extrapolated = st.rows.back().lambda;
  if (k >= 3) {
    const double l1 = st.rows[k - 3].lambda, l2 = st.rows[k - 2].lambda, l3 = st.rows[k - 1].lambda;
    const double d1 = l1 - l2, d2 = l2 - l3;
    st.monotone = d1 * d2 >= 0.0;
    for (std::size_t i = 2; i < k; ++i) {
      const double a = st.rows[i - 2].lambda - st.rows[i - 1].lambda;
      const double b = st.rows[i - 1].lambda - st.rows[i].lambda;
      if (a * b < 0.0) st.monotone = false;
    }
    if (d2 != 0.0 && d1 / d2 > 1.0) {
      st.observed_order = std::log2(d1 / d2);
      st.extrapolated = l3 - d2 / (d1 / d2 - 1.0);
    } else if (d2 == 0.0) {
      st.observed_order = kInf;
      st.extrapolated = l3;
    }
  }
  return st;
}

inline MeshStudy mesh_study(const SpectralProblem& prob, const std::vector<Mesh>& meshes) {
  std::vector<MeshRow> rows;
  for (const auto& m : meshes) {
    const auto r = prob.solve(m);
    rows.push_back({m, r.lambda, r.converged});
  }
  return richardson(std::move(rows));
}

// Critical coupling c* where lambda^Q(c mu) changes sign, by bisection on c
// for each box half-width and extrapolation in 1/L (quadratic model).
struct CriticalResult {
  std::vector<std::pair<double, double>> per_L;  // (L, c*)
  double extrapolated = 0.0;
};

inline CriticalResult critical_scale(const ProcessSpec& spec, const MeasureSpec& unit_mu, double h,
                                     const std::vector<double>& Ls, double c_lo = 0.01, double c_hi = 20.0) {
  CriticalResult out;
  for (double L : Ls) {
    const auto D1 = assemble(spec, nullptr, unit_mu, nullptr, {h, L});
    const Vec b = D1.mass_of(unit_mu, +1);
    auto lam = [&](double c) {
      return solve_pencil(D1.stiffness + D1.drift_coupling - c * D1.H_matrix, c * b).lambda;
    };
    double lo = c_lo, hi = c_hi;
    if (!(lam(lo) > 0.0) || !(lam(hi) < 0.0)) fail(Errc::invalid_input, "critical bracket does not change sign");
    while (hi - lo > 1e-9 * hi) {
      const double mid = std::sqrt(lo * hi);
      (lam(mid) > 0.0 ? lo : hi) = mid;
    }
    out.per_L.emplace_back(L, 0.5 * (lo + hi));
  }
  const std::size_t k = out.per_L.size();
  if (k >= 3) {
    // c(L) = c_inf + a/L + b/L^2 through the last three points
    Eigen::Matrix3d M;
    Eigen::Vector3d y;
    for (int i = 0; i < 3; ++i) {
      const double L = out.per_L[k - 3 + i].first;
      M(i, 0) = 1.0;
      M(i, 1) = 1.0 / L;
      M(i, 2) = 1.0 / (L * L);
      y[i] = out.per_L[k - 3 + i].second;
    }
    out.extrapolated = M.colPivHouseholderQr().solve(y)[0];
  } else if (k == 2) {
    const auto [L1, c1] = out.per_L[0];
    const auto [L2, c2] = out.per_L[1];
    out.extrapolated = (L2 * c2 - L1 * c1) / (L2 - L1);
  } else if (k == 1) {
    out.extrapolated = out.per_L[0].second;
  }
  return out;
}

}  // namespace fklab::spectral
