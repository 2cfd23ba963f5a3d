#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "qas/error.hpp"
#include "qas/numerics.hpp"

namespace qas {

inline constexpr double kSymmetryTolerance = 1e-10;
inline constexpr double kEigenFloor = 1e-12;

/// Symmetric positive definite matrix. Construction validates symmetry and
/// the spectrum; the stored matrix is exactly symmetrized.
class SpdMatrix {
 public:
  SpdMatrix() = default;

  explicit SpdMatrix(const Matrix& m) {
    if (m.rows() != m.cols() || m.rows() == 0) throw ShapeError("spd: matrix must be square and nonempty");
    if (!m.allFinite()) throw DomainError("spd: non-finite entry");
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance * scale)
      throw SpectralError("spd: matrix is not symmetric", std::nan(""));
    m_ = 0.5 * (m + m.transpose());
    const double lo = Eigen::SelfAdjointEigenSolver<Matrix>(m_, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    if (!(lo > kEigenFloor)) throw SpectralError("spd: matrix is not positive definite", lo);
  }

  static SpdMatrix identity(Eigen::Index d) { return SpdMatrix(Matrix::Identity(d, d)); }

  const Matrix& matrix() const noexcept { return m_; }
  Eigen::Index dim() const noexcept { return m_.rows(); }

  friend bool operator==(const SpdMatrix& a, const SpdMatrix& b) { return a.m_ == b.m_; }

 private:
  Matrix m_;
};

namespace detail {

/// f applied to the spectrum of a symmetric matrix.
template <class F>
Matrix sym_apply(const Matrix& s, F&& f) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (s + s.transpose()));
  Vector lam = es.eigenvalues();
  for (Eigen::Index i = 0; i < lam.size(); ++i) lam[i] = f(lam[i]);
  const Matrix& q = es.eigenvectors();
  return q * lam.asDiagonal() * q.transpose();
}

inline double floored(double x) { return std::max(x, kEigenFloor); }

inline void require_same_dim(const SpdMatrix& a, const SpdMatrix& b, const char* op) {
  if (a.dim() != b.dim()) throw ShapeError(std::string(op) + ": dimension mismatch");
}

}  // namespace detail

inline Matrix spd_sqrt(const SpdMatrix& a) {
  return detail::sym_apply(a.matrix(), [](double x) { return std::sqrt(detail::floored(x)); });
}
inline Matrix spd_inv_sqrt(const SpdMatrix& a) {
  return detail::sym_apply(a.matrix(), [](double x) { return 1.0 / std::sqrt(detail::floored(x)); });
}
inline Matrix spd_log(const Matrix& s) {
  return detail::sym_apply(s, [](double x) { return std::log(detail::floored(x)); });
}
inline Matrix sym_exp(const Matrix& s) {
  return detail::sym_apply(s, [](double x) { return std::exp(x); });
}
inline Matrix spd_pow(const Matrix& s, double t) {
  return detail::sym_apply(s, [t](double x) { return std::pow(detail::floored(x), t); });
}

/// Affine-invariant distance ||log(A^{-1/2} B A^{-1/2})||_F.
inline double spd_distance(const SpdMatrix& a, const SpdMatrix& b) {
  detail::require_same_dim(a, b, "spd_distance");
  const Matrix r = spd_inv_sqrt(a);
  const Matrix c = r * b.matrix() * r;
  const Vector lam = Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (c + c.transpose()), Eigen::EigenvaluesOnly).eigenvalues();
  double s = 0.0;
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    const double l = std::log(detail::floored(lam[i]));
    s += l * l;
  }
  return std::sqrt(s);
}

/// A^{1/2} (A^{-1/2} B A^{-1/2})^{w_1} A^{1/2}. Note the exponent is w_1, so
/// w = (1, 0) returns B and w = (0, 1) returns A.
inline SpdMatrix spd_geodesic(const Vector& w, const SpdMatrix& a, const SpdMatrix& b) {
  detail::require_same_dim(a, b, "spd_geodesic");
  if (w.size() != 2) throw ShapeError("spd_geodesic: weight must have length 2");
  if (!on_simplex(w, 1e-12)) throw DomainError("spd_geodesic: weight must lie on the simplex");
  if (w[0] == 0.0) return a;
  if (w[0] == 1.0) return b;
  const Matrix h = spd_sqrt(a), r = spd_inv_sqrt(a);
  const Matrix g = h * spd_pow(r * b.matrix() * r, w[0]) * h;
  return SpdMatrix(0.5 * (g + g.transpose()));
}

struct KarcherResult {
  SpdMatrix mean;
  double residual = 0.0;
  int iterations = 0;
};

/// Karcher equation residual ||sum_k w_k log(S^{-1/2} A_k S^{-1/2})||_F.
inline double karcher_residual(const SpdMatrix& s, const std::vector<SpdMatrix>& atoms, const Vector& w) {
  const Matrix r = spd_inv_sqrt(s);
  Matrix g = Matrix::Zero(s.dim(), s.dim());
  for (std::size_t k = 0; k < atoms.size(); ++k)
    if (w[static_cast<Eigen::Index>(k)] > 0.0) g += w[static_cast<Eigen::Index>(k)] * spd_log(r * atoms[k].matrix() * r);
  return g.norm();
}

/// Weighted Karcher (Frechet) mean by the Riemannian fixed-point iteration
/// S <- S^{1/2} exp(step * sum_k w_k log(S^{-1/2} A_k S^{-1/2})) S^{1/2},
/// started from the log-Euclidean mean, step halved when the residual grows.
inline KarcherResult karcher_barycenter(const std::vector<SpdMatrix>& atoms, const Vector& w, double tol = 1e-8,
                                        int max_iter = 200) {
  if (atoms.empty()) throw ShapeError("karcher_barycenter: no atoms");
  if (static_cast<std::size_t>(w.size()) != atoms.size()) throw ShapeError("karcher_barycenter: weight length mismatch");
  if (!on_simplex(w, 1e-12)) throw DomainError("karcher_barycenter: weights must lie on the simplex");
  const Eigen::Index d = atoms.front().dim();
  for (const auto& a : atoms)
    if (a.dim() != d) throw ShapeError("karcher_barycenter: atoms of different dimension");

  // Every charged atom identical: that atom is the mean, exactly.
  std::size_t first = 0;
  while (!(w[static_cast<Eigen::Index>(first)] > 0.0)) ++first;
  bool all_same = true;
  for (std::size_t k = 0; k < atoms.size(); ++k)
    if (w[static_cast<Eigen::Index>(k)] > 0.0 && !(atoms[k] == atoms[first])) all_same = false;
  if (all_same) return {atoms[first], 0.0, 0};

  Matrix le = Matrix::Zero(d, d);
  for (std::size_t k = 0; k < atoms.size(); ++k) le += w[static_cast<Eigen::Index>(k)] * spd_log(atoms[k].matrix());
  SpdMatrix s(sym_exp(le));

  auto gradient = [&](const SpdMatrix& x, Matrix& root) {
    root = spd_sqrt(x);
    const Matrix r = spd_inv_sqrt(x);
    Matrix g = Matrix::Zero(d, d);
    for (std::size_t k = 0; k < atoms.size(); ++k)
      if (w[static_cast<Eigen::Index>(k)] > 0.0) g += w[static_cast<Eigen::Index>(k)] * spd_log(r * atoms[k].matrix() * r);
    return g;
  };

  Matrix root;
  Matrix g = gradient(s, root);
  double res = g.norm();
  double step = 1.0;
  int it = 0;
  while (res > tol) {
    if (++it > max_iter) throw ConvergenceError("karcher_barycenter: iteration limit", res);
    const Matrix cand = root * sym_exp(step * g) * root;
    SpdMatrix next(0.5 * (cand + cand.transpose()));
    Matrix next_root;
    const Matrix next_g = gradient(next, next_root);
    const double next_res = next_g.norm();
    if (next_res > res && step > 1e-6) {
      step *= 0.5;
      continue;
    }
    s = std::move(next);
    root = next_root;
    g = next_g;
    res = next_res;
  }
  return {s, res, it};
}

}  // namespace qas
