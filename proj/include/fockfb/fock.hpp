#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "fockfb/core.hpp"

namespace fockfb {

/// Number of top Fock levels watched for truncation leakage.
inline constexpr int kEdgeBand = 2;
/// Population in the edge band above which a displacement is flagged.
inline constexpr double kTruncationTolerance = 1e-6;

/// Truncated single-mode Fock space |0>..|dim-1> with its ladder operators.
///
/// Construction precomputes the spectral decomposition of the Hermitian
/// quadrature i(a^dag - a). Every displacement on this space is assembled from
/// it, so copies share the immutable data.
class FockSpace {
 public:
  explicit FockSpace(int dim) {
    if (dim < 2) throw std::invalid_argument("FockSpace: dim must be >= 2");
    auto d = std::make_shared<Data>();
    d->dim = dim;
    d->a = CMatrix::Zero(dim, dim);
    for (int n = 1; n < dim; ++n) d->a(n - 1, n) = std::sqrt(static_cast<double>(n));
    d->adag = d->a.adjoint();
    d->n_diag = RVector::LinSpaced(dim, 0.0, dim - 1.0);
    const CMatrix quad = cplx(0.0, 1.0) * (d->adag - d->a);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(quad);
    d->quad_vecs = es.eigenvectors();
    d->quad_vals = es.eigenvalues();
    data_ = std::move(d);
  }

  int dim() const noexcept { return data_->dim; }
  const CMatrix& annihilation() const noexcept { return data_->a; }
  const CMatrix& creation() const noexcept { return data_->adag; }
  CMatrix number() const { return data_->n_diag.cast<cplx>().asDiagonal(); }
  const RVector& number_diagonal() const noexcept { return data_->n_diag; }
  const CMatrix& quadrature_vectors() const noexcept { return data_->quad_vecs; }
  const RVector& quadrature_eigenvalues() const noexcept { return data_->quad_vals; }

  friend bool operator==(const FockSpace& l, const FockSpace& r) { return l.dim() == r.dim(); }

 private:
  struct Data {
    int dim = 0;
    CMatrix a, adag;
    RVector n_diag;
    CMatrix quad_vecs;
    RVector quad_vals;
  };
  std::shared_ptr<const Data> data_;
};

inline CMatrix annihilation(const FockSpace& s) { return s.annihilation(); }
inline CMatrix creation(const FockSpace& s) { return s.creation(); }
inline CMatrix number(const FockSpace& s) { return s.number(); }

/// Pure state on a truncated Fock space.
class Ket {
 public:
  Ket() = default;
  explicit Ket(CVector amplitudes) : amps_(std::move(amplitudes)) {}

  static Ket fock(int dim, int n) {
    if (n < 0 || n >= dim) throw std::out_of_range("Ket::fock: level outside space");
    CVector v = CVector::Zero(dim);
    v(n) = 1.0;
    return Ket(std::move(v));
  }

  /// Normalized superposition from (level, coefficient) pairs.
  static Ket superposition(int dim, const std::vector<std::pair<int, cplx>>& terms) {
    CVector v = CVector::Zero(dim);
    for (const auto& [n, c] : terms) {
      if (n < 0 || n >= dim) throw std::out_of_range("Ket::superposition: level outside space");
      v(n) += c;
    }
    Ket k(std::move(v));
    k.normalize();
    return k;
  }

  int dim() const noexcept { return static_cast<int>(amps_.size()); }
  const CVector& amplitudes() const noexcept { return amps_; }
  CVector& amplitudes() noexcept { return amps_; }
  cplx operator[](int n) const { return amps_(n); }
  double norm() const { return amps_.norm(); }

  Ket& normalize() {
    const double nrm = amps_.norm();
    if (!(nrm > 0.0)) throw NumericalFailure("Ket::normalize: zero vector");
    amps_ /= nrm;
    return *this;
  }

  /// Levels carrying |amplitude|^2 above tol, ascending.
  std::vector<int> support(double tol = 1e-14) const {
    std::vector<int> out;
    for (int n = 0; n < dim(); ++n)
      if (std::norm(amps_(n)) > tol) out.push_back(n);
    return out;
  }

 private:
  CVector amps_;
};

/// Density matrix on a truncated Fock space. Holds whatever matrix it is given;
/// normalize() restores Hermiticity and unit trace.
class DensityMatrix {
 public:
  DensityMatrix() = default;
  explicit DensityMatrix(CMatrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw ShapeMismatch("DensityMatrix: matrix not square");
  }

  static DensityMatrix pure(const Ket& k) {
    return DensityMatrix(k.amplitudes() * k.amplitudes().adjoint());
  }
  static DensityMatrix fock(int dim, int n) { return pure(Ket::fock(dim, n)); }

  int dim() const noexcept { return static_cast<int>(m_.rows()); }
  const CMatrix& matrix() const noexcept { return m_; }
  cplx operator()(int i, int j) const { return m_(i, j); }
  double trace() const { return m_.trace().real(); }
  RVector populations() const { return m_.diagonal().real(); }

  double hermiticity_error() const {
    return (m_ - m_.adjoint()).cwiseAbs().maxCoeff();
  }

  DensityMatrix& normalize() {
    m_ = (0.5 * (m_ + m_.adjoint())).eval();
    const double tr = m_.trace().real();
    if (!(tr > 0.0) || !std::isfinite(tr)) throw NumericalFailure("DensityMatrix::normalize: nonpositive trace");
    m_ /= tr;
    return *this;
  }

  /// Smallest eigenvalue of the Hermitian part.
  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (m_ + m_.adjoint()), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
  }

 private:
  CMatrix m_;
};

namespace detail {

inline void check_dim(const FockSpace& s, int dim, const char* where) {
  if (s.dim() != dim) throw ShapeMismatch(std::string(where) + ": dimension mismatch");
}

/// P(n >= first) for a Poisson distribution of mean lambda.
inline double poisson_tail(double lambda, int first) {
  if (lambda <= 0.0) return first <= 0 ? 1.0 : 0.0;
  double total = 0.0;
  for (int n = std::max(first, 0);; ++n) {
    const double term = std::exp(n * std::log(lambda) - lambda - std::lgamma(n + 1.0));
    total += term;
    if (n > lambda && term < 1e-18 * std::max(total, 1e-300)) break;
    if (n > first + 10000) break;
  }
  return std::min(total, 1.0);
}

/// Columns of the rotated quadrature eigenbasis e^{i theta N} V.
inline CMatrix rotated_basis(const FockSpace& s, double theta) {
  CMatrix w = s.quadrature_vectors();
  for (int n = 0; n < s.dim(); ++n) w.row(n) *= std::polar(1.0, theta * n);
  return w;
}

inline CVector quadrature_phases(const FockSpace& s, double r) {
  const RVector& lam = s.quadrature_eigenvalues();
  CVector ph(lam.size());
  for (Eigen::Index l = 0; l < lam.size(); ++l) ph(l) = std::polar(1.0, -r * lam(l));
  return ph;
}

}  // namespace detail

/// Untruncated coherent-state population that |alpha> would place on the
/// space's top kEdgeBand levels and beyond.
inline double coherent_edge_population(const FockSpace& s, cplx alpha) {
  return detail::poisson_tail(std::norm(alpha), s.dim() - kEdgeBand);
}

/// Population on the top kEdgeBand levels.
inline double edge_population(const DensityMatrix& rho) {
  double p = 0.0;
  for (int n = std::max(0, rho.dim() - kEdgeBand); n < rho.dim(); ++n) p += rho(n, n).real();
  return p;
}

inline double edge_population(const Ket& psi) {
  double p = 0.0;
  for (int n = std::max(0, psi.dim() - kEdgeBand); n < psi.dim(); ++n) p += std::norm(psi[n]);
  return p;
}

struct Displacement {
  CMatrix op;
  bool truncation_warning = false;
};

/// D(alpha) = exp(alpha a^dag - alpha^* a) on the truncated space.
///
/// With alpha = r e^{i theta} the generator is e^{i theta N} r (a^dag - a)
/// e^{-i theta N}, and r (a^dag - a) = -i r Q for the Hermitian quadrature Q,
/// so D = W diag(e^{-i r q_l}) W^dag with W = e^{i theta N} V. The result is the
/// exact exponential of the truncated generator.
inline Displacement displacement(const FockSpace& s, cplx alpha) {
  if (!std::isfinite(alpha.real()) || !std::isfinite(alpha.imag()))
    throw std::invalid_argument("displacement: non-finite alpha");
  Displacement out;
  const double r = std::abs(alpha);
  if (r == 0.0) {
    out.op = CMatrix::Identity(s.dim(), s.dim());
    return out;
  }
  const CMatrix w = detail::rotated_basis(s, std::arg(alpha));
  out.op = w * detail::quadrature_phases(s, r).asDiagonal() * w.adjoint();
  out.truncation_warning = coherent_edge_population(s, alpha) > kTruncationTolerance;
  return out;
}

/// D(alpha)|psi> in O(dim^2) without materializing D.
inline Ket displace(const FockSpace& s, const Ket& psi, cplx alpha) {
  detail::check_dim(s, psi.dim(), "displace");
  const double r = std::abs(alpha);
  if (r == 0.0) return psi;
  const CMatrix w = detail::rotated_basis(s, std::arg(alpha));
  CVector tmp = w.adjoint() * psi.amplitudes();
  tmp = tmp.cwiseProduct(detail::quadrature_phases(s, r));
  return Ket(w * tmp);
}

inline Ket coherent_state(const FockSpace& s, cplx alpha) {
  return displace(s, Ket::fock(s.dim(), 0), alpha);
}

struct DisplacedState {
  DensityMatrix rho;
  bool truncation_warning = false;
};

/// D(alpha) rho D(-alpha), re-Hermitized and renormalized.
inline DisplacedState apply_displacement(const FockSpace& s, const DensityMatrix& rho, cplx alpha) {
  detail::check_dim(s, rho.dim(), "apply_displacement");
  if (alpha == cplx(0.0, 0.0)) return {rho, edge_population(rho) > kTruncationTolerance};
  const Displacement d = displacement(s, alpha);
  CMatrix tmp = d.op * rho.matrix();
  DensityMatrix out(tmp * d.op.adjoint());
  out.normalize();
  const bool warn = d.truncation_warning || edge_population(out) > kTruncationTolerance;
  return {std::move(out), warn};
}

/// <psi|rho|psi>, the fidelity against a pure target.
inline double fidelity_pure(const DensityMatrix& rho, const Ket& target) {
  if (rho.dim() != target.dim()) throw ShapeMismatch("fidelity_pure: dimension mismatch");
  const cplx v = target.amplitudes().dot(rho.matrix() * target.amplitudes());
  return std::clamp(v.real(), 0.0, 1.0);
}

inline double fidelity_pure(const Ket& psi, const Ket& target) {
  if (psi.dim() != target.dim()) throw ShapeMismatch("fidelity_pure: dimension mismatch");
  return std::clamp(std::norm(target.amplitudes().dot(psi.amplitudes())), 0.0, 1.0);
}

/// (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2 via the eigendecomposition of rho.
inline double fidelity_general(const DensityMatrix& rho, const DensityMatrix& sigma) {
  if (rho.dim() != sigma.dim()) throw ShapeMismatch("fidelity_general: dimension mismatch");
  const CMatrix rh = 0.5 * (rho.matrix() + rho.matrix().adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> es(rh);
  RVector lam = es.eigenvalues();
  if (lam.minCoeff() < -1e-6) throw NumericalFailure("fidelity_general: rho has a negative eigenvalue");
  for (Eigen::Index i = 0; i < lam.size(); ++i) lam(i) = std::sqrt(std::max(lam(i), 0.0));
  const CMatrix sq = es.eigenvectors() * lam.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
  CMatrix inner = sq * sigma.matrix() * sq;
  inner = (0.5 * (inner + inner.adjoint())).eval();
  Eigen::SelfAdjointEigenSolver<CMatrix> es2(inner, Eigen::EigenvaluesOnly);
  const RVector& mu = es2.eigenvalues();
  if (mu.minCoeff() < -1e-6) throw NumericalFailure("fidelity_general: sqrt(rho) sigma sqrt(rho) not PSD");
  // Eigenvalues at rounding level would add about sqrt(eps) each.
  const double floor = static_cast<double>(mu.size()) * std::numeric_limits<double>::epsilon() * mu.cwiseAbs().maxCoeff();
  double tr = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    if (mu(i) > floor) tr += std::sqrt(mu(i));
  return std::clamp(tr * tr, 0.0, 1.0);
}

inline double mean_photon(const DensityMatrix& rho) {
  double n = 0.0;
  for (int k = 1; k < rho.dim(); ++k) n += k * rho(k, k).real();
  return n;
}

inline double mean_photon(const Ket& psi) {
  double n = 0.0;
  for (int k = 1; k < psi.dim(); ++k) n += k * std::norm(psi[k]);
  return n;
}

}  // namespace fockfb
