#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "fockfb/filter.hpp"
#include "fockfb/fock.hpp"

namespace fockfb {

/// Precomputed operators for the fidelity Lyapunov function
/// V(rho) = tr(Upsilon rho), Upsilon = I - |target><target|.
///
/// c_op = [a, Upsilon], g_op = [a, c_op], e_op = [a^dag, c_op] symmetrized to
/// its Hermitian part. On the untruncated oscillator [a^dag, c_op] is already
/// Hermitian; on the truncated space the symmetrization equals the exact
/// second-order coefficient of D(alpha) rho D(-alpha) and leaves the operator
/// unchanged whenever the target has no weight on the top level.
struct LyapunovContext {
  FockSpace space{2};
  Ket target;
  CMatrix upsilon;
  CMatrix c_op;
  CMatrix g_op;
  CMatrix e_op;
  double alpha_max = 0.3;
};

inline LyapunovContext build_context(const Ket& target, const FockSpace& space, double alpha_max) {
  if (target.dim() != space.dim()) throw ShapeMismatch("build_context: dimension mismatch");
  if (std::abs(target.norm() - 1.0) > 1e-10) throw std::invalid_argument("build_context: target not normalized");
  if (!(alpha_max > 0.0)) throw std::invalid_argument("build_context: alpha_max must be > 0");
  LyapunovContext ctx;
  ctx.space = space;
  ctx.target = target;
  ctx.alpha_max = alpha_max;
  const int d = space.dim();
  const CMatrix& a = space.annihilation();
  const CMatrix& ad = space.creation();
  ctx.upsilon = CMatrix::Identity(d, d) - target.amplitudes() * target.amplitudes().adjoint();
  ctx.c_op = a * ctx.upsilon - ctx.upsilon * a;
  ctx.g_op = a * ctx.c_op - ctx.c_op * a;
  const CMatrix e_raw = ad * ctx.c_op - ctx.c_op * ad;
  ctx.e_op = 0.5 * (e_raw + e_raw.adjoint());
  return ctx;
}

inline double lyapunov_value(const LyapunovContext& ctx, const DensityMatrix& rho) {
  return 1.0 - ctx.target.amplitudes().dot(rho.matrix() * ctx.target.amplitudes()).real();
}

/// zeta = tr(C rho), gamma = tr(G rho), chi = tr(E rho).
struct ExpansionCoeffs {
  cplx zeta;
  cplx gamma;
  double chi = 0.0;
  /// Imaginary part discarded from chi.
  double chi_imag = 0.0;
};

namespace detail {
/// tr(A rho) without forming the product.
inline cplx trace_product(const CMatrix& a, const CMatrix& rho) {
  return (a.transpose().cwiseProduct(rho)).sum();
}
}  // namespace detail

inline ExpansionCoeffs expansion_coeffs(const LyapunovContext& ctx, const DensityMatrix& rho) {
  ExpansionCoeffs c;
  c.zeta = detail::trace_product(ctx.c_op, rho.matrix());
  c.gamma = detail::trace_product(ctx.g_op, rho.matrix());
  const cplx chi = detail::trace_product(ctx.e_op, rho.matrix());
  c.chi = chi.real();
  c.chi_imag = chi.imag();
  return c;
}

/// First-order change alpha zeta^* + alpha^* zeta.
inline double first_order_term(const ExpansionCoeffs& c, cplx alpha) {
  return 2.0 * (alpha * std::conj(c.zeta)).real();
}

/// Second-order term alpha^2 gamma^* + alpha^*^2 gamma - 2 |alpha|^2 chi.
inline double second_order_term(const ExpansionCoeffs& c, cplx alpha) {
  return 2.0 * (alpha * alpha * std::conj(c.gamma)).real() - 2.0 * std::norm(alpha) * c.chi;
}

/// Quadratic model q(alpha) of V(D rho D^dag) - V(rho).
inline double quadratic_model(const ExpansionCoeffs& c, cplx alpha) {
  return first_order_term(c, alpha) + 0.5 * second_order_term(c, alpha);
}

/// Q of q(x, y) = [x y] Q [x y]^T + 2 [u v] [x y]^T.
inline Eigen::Matrix2d quadratic_form_matrix(const ExpansionCoeffs& c) {
  Eigen::Matrix2d q;
  const double g = c.gamma.real(), h = c.gamma.imag();
  q << g - c.chi, h, h, -(g + c.chi);
  return q;
}

enum class NewtonStatus { newton, clamped, rejected };

inline const char* to_string(NewtonStatus s) {
  switch (s) {
    case NewtonStatus::newton: return "newton";
    case NewtonStatus::clamped: return "clamped";
    case NewtonStatus::rejected: return "rejected";
  }
  return "?";
}

struct NewtonResult {
  cplx alpha;
  NewtonStatus status = NewtonStatus::newton;
  ExpansionCoeffs coeffs;
  /// Halvings applied because the exact V did not decrease.
  int backtracks = 0;
};

/// Exact V(D(alpha) rho D(-alpha)) - V(rho).
inline double exact_delta(const LyapunovContext& ctx, const DensityMatrix& rho, cplx alpha) {
  const CVector b = displace(ctx.space, ctx.target, -alpha).amplitudes();
  return (1.0 - b.dot(rho.matrix() * b).real()) - lyapunov_value(ctx, rho);
}

/// Minimizer of the quadratic model when Q is positive definite
/// (chi < -|gamma|), rescaled radially onto |alpha| <= alpha_max.
///
/// Otherwise a steepest-descent step of length alpha_max / 10 along -zeta,
/// halved until the model predicts a decrease. At a stationary point
/// (zeta = 0) with negative curvature the step is alpha_max along the
/// most negative eigenvector of Q; alpha = 0 only at a local minimum.
///
/// Newton and clamped steps are halved (up to 30 times) until the exact V
/// decreases, since the quadratic model can be poor far from the target.
inline NewtonResult newton_alpha(const LyapunovContext& ctx, const DensityMatrix& rho) {
  NewtonResult res;
  res.coeffs = expansion_coeffs(ctx, rho);
  const ExpansionCoeffs& c = res.coeffs;
  const double abs_zeta = std::abs(c.zeta);
  const double abs_gamma = std::abs(c.gamma);
  if (c.chi < -abs_gamma) {
    res.status = NewtonStatus::newton;
    if (abs_zeta < 1e-14) {
      res.alpha = 0.0;
      return res;
    }
    res.alpha = (c.chi * c.zeta + c.gamma * std::conj(c.zeta)) / (c.chi * c.chi - abs_gamma * abs_gamma);
    const double mag = std::abs(res.alpha);
    if (mag > ctx.alpha_max) {
      res.alpha *= ctx.alpha_max / mag;
      res.status = NewtonStatus::clamped;
    }
    while (res.backtracks < 30 && exact_delta(ctx, rho, res.alpha) >= 0.0) {
      res.alpha *= 0.5;
      ++res.backtracks;
    }
    return res;
  }
  res.status = NewtonStatus::rejected;
  if (abs_zeta < 1e-12) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(quadratic_form_matrix(c));
    if (es.eigenvalues()(0) >= 0.0) {
      res.alpha = 0.0;
      return res;
    }
    Eigen::Vector2d v = es.eigenvectors().col(0);
    if (v(0) < 0.0 || (v(0) == 0.0 && v(1) < 0.0)) v = -v;
    res.alpha = ctx.alpha_max * cplx(v(0), v(1));
    return res;
  }
  double step = ctx.alpha_max / 10.0;
  const cplx dir = -c.zeta / abs_zeta;
  res.alpha = step * dir;
  while (quadratic_model(c, res.alpha) >= 0.0 && step > 1e-12) {
    step *= 0.5;
    res.alpha = step * dir;
  }
  return res;
}

inline cplx lyapunov_policy(const LyapunovContext& ctx, const FilterState& st) {
  return newton_alpha(ctx, st.rho).alpha;
}

}  // namespace fockfb
