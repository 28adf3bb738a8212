#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "fockfb/fock.hpp"

namespace fockfb {

enum class Parity { odd, even };
enum class Outcome : unsigned char { g = 0, e = 1 };

inline Outcome flipped(Outcome o) { return o == Outcome::g ? Outcome::e : Outcome::g; }
inline char to_char(Outcome o) { return o == Outcome::g ? 'g' : 'e'; }
inline const char* to_string(Parity p) { return p == Parity::odd ? "odd" : "even"; }

/// Ramsey probe parameters.
///
/// phi_r is the effective analysis phase with the constant interaction phase
/// already folded in.
struct MeasurementSetup {
  int delta_n = 1;
  double phi0 = 4.0 * kPi;
  double phi_r = 0.0;
  Parity parity = Parity::odd;
  bool phase_tracking = false;
  int target_m = 0;
};

inline double wrap_angle(double x) {
  double r = std::fmod(x, 2.0 * kPi);
  if (r < 0.0) r += 2.0 * kPi;
  return r;
}

/// Probe settings for stabilizing W_{target_m}.
///
/// Odd rule: phi0 = 4 pi / delta_n, analysis phase at mid fringe for the target
/// subspace. Even rule: phi0 = 2 pi / delta_n, analysis phase 2 pi / 5 away from
/// the target subspace angle, with phase tracking. Without an override the
/// rule follows the parity of delta_n.
inline MeasurementSetup build_setup(int delta_n, int target_m = 0,
                                    std::optional<Parity> parity_override = std::nullopt) {
  if (delta_n < 1) throw std::invalid_argument("build_setup: delta_n must be >= 1");
  if (target_m < 0 || target_m >= delta_n)
    throw std::invalid_argument("build_setup: target_m outside [0, delta_n)");
  MeasurementSetup s;
  s.delta_n = delta_n;
  s.target_m = target_m;
  s.parity = parity_override.value_or(delta_n % 2 == 1 ? Parity::odd : Parity::even);
  if (s.parity == Parity::odd) {
    s.phi0 = 4.0 * kPi / delta_n;
    s.phase_tracking = false;
    s.phi_r = wrap_angle(s.phi0 * target_m + kPi / 2.0);
  } else {
    s.phi0 = 2.0 * kPi / delta_n;
    s.phase_tracking = true;
    s.phi_r = wrap_angle(s.phi0 * target_m + 2.0 * kPi / 5.0);
  }
  return s;
}

/// Diagonals of M_g = cos((phi0 N - phi_r)/2) and M_e = sin(...).
///
/// frame_sign is (-1)^floor(n / delta_n) in phase-tracking mode and all ones
/// otherwise; M_s = frame_sign * tracked(M_s) elementwise.
struct MeasurementOps {
  RVector g;
  RVector e;
  RVector frame_sign;
  bool phase_tracking = false;
  int delta_n = 1;

  int dim() const { return static_cast<int>(g.size()); }
  const RVector& diag(Outcome o) const { return o == Outcome::g ? g : e; }
  CMatrix m_g() const { return g.cast<cplx>().asDiagonal(); }
  CMatrix m_e() const { return e.cast<cplx>().asDiagonal(); }
  /// Operators in the tracked frame (constant on each stabilizable subspace).
  RVector tracked_diag(Outcome o) const { return diag(o).cwiseProduct(frame_sign); }
};

inline MeasurementOps build_ops(const MeasurementSetup& setup, int dim) {
  MeasurementOps ops;
  ops.g.resize(dim);
  ops.e.resize(dim);
  ops.frame_sign = RVector::Ones(dim);
  ops.phase_tracking = setup.phase_tracking;
  ops.delta_n = setup.delta_n;
  for (int n = 0; n < dim; ++n) {
    const double arg = 0.5 * (setup.phi0 * n - setup.phi_r);
    ops.g(n) = std::cos(arg);
    ops.e(n) = std::sin(arg);
    if (setup.phase_tracking && (n / setup.delta_n) % 2 == 1) ops.frame_sign(n) = -1.0;
  }
  return ops;
}

inline MeasurementOps build_ops(const MeasurementSetup& setup, const FockSpace& space) {
  return build_ops(setup, space.dim());
}

struct OutcomeProbs {
  double g = 0.0;
  double e = 0.0;
  double operator[](Outcome o) const { return o == Outcome::g ? g : e; }
};

inline OutcomeProbs outcome_probs(const MeasurementOps& ops, const DensityMatrix& rho) {
  const RVector pop = rho.populations();
  OutcomeProbs p{pop.dot(ops.g.cwiseAbs2()), pop.dot(ops.e.cwiseAbs2())};
  const double tot = p.g + p.e;
  return {p.g / tot, p.e / tot};
}

inline OutcomeProbs outcome_probs(const MeasurementOps& ops, const Ket& psi) {
  const RVector pop = psi.amplitudes().cwiseAbs2();
  OutcomeProbs p{pop.dot(ops.g.cwiseAbs2()), pop.dot(ops.e.cwiseAbs2())};
  const double tot = p.g + p.e;
  return {p.g / tot, p.e / tot};
}

inline constexpr double kMinOutcomeProbability = 1e-14;

/// M_s rho M_s without renormalization; its trace is the outcome weight.
inline DensityMatrix back_action_unnormalized(const MeasurementOps& ops, const DensityMatrix& rho, Outcome s) {
  const RVector& m = ops.diag(s);
  CMatrix out = rho.matrix();
  for (int j = 0; j < out.cols(); ++j)
    for (int i = 0; i < out.rows(); ++i) out(i, j) *= m(i) * m(j);
  return DensityMatrix(std::move(out));
}

inline DensityMatrix back_action(const MeasurementOps& ops, const DensityMatrix& rho, Outcome s) {
  if (ops.dim() != rho.dim()) throw ShapeMismatch("back_action: dimension mismatch");
  DensityMatrix out = back_action_unnormalized(ops, rho, s);
  if (!(out.trace() > kMinOutcomeProbability * std::max(rho.trace(), 1e-300)))
    throw ZeroProbabilityOutcome(std::string("back_action: outcome ") + to_char(s) + " has zero probability");
  out.normalize();
  return out;
}

inline Ket back_action(const MeasurementOps& ops, const Ket& psi, Outcome s) {
  if (ops.dim() != psi.dim()) throw ShapeMismatch("back_action: dimension mismatch");
  Ket out(psi.amplitudes().cwiseProduct(ops.diag(s).cast<cplx>()));
  if (!(out.amplitudes().squaredNorm() > kMinOutcomeProbability))
    throw ZeroProbabilityOutcome(std::string("back_action: outcome ") + to_char(s) + " has zero probability");
  out.normalize();
  return out;
}

inline int subspace_index(int n, int delta_n) {
  if (n < 0 || delta_n < 1) throw std::invalid_argument("subspace_index: bad arguments");
  return n % delta_n;
}

inline RVector subspace_populations(const RVector& level_pops, int delta_n) {
  RVector out = RVector::Zero(delta_n);
  for (Eigen::Index n = 0; n < level_pops.size(); ++n) out(n % delta_n) += level_pops(n);
  return out;
}

inline RVector subspace_populations(const DensityMatrix& rho, int delta_n) {
  return subspace_populations(rho.populations(), delta_n);
}

inline RVector subspace_populations(const Ket& psi, int delta_n) {
  return subspace_populations(RVector(psi.amplitudes().cwiseAbs2()), delta_n);
}

inline double subspace_population(const DensityMatrix& rho, int m, int delta_n) {
  if (m < 0 || m >= delta_n) throw std::invalid_argument("subspace_population: m outside [0, delta_n)");
  return subspace_populations(rho, delta_n)(m);
}

/// Equatorial Bloch angle phi0 * m (mod 2 pi) imprinted by W_m.
inline double bloch_angle(int m, const MeasurementSetup& setup) {
  if (m < 0 || m >= setup.delta_n) throw std::invalid_argument("bloch_angle: m outside [0, delta_n)");
  return wrap_angle(setup.phi0 * m);
}

struct StabilizabilityReport {
  bool stabilizable = false;
  double residual_g = 0.0;
  double residual_e = 0.0;
  double lambda_g = 0.0;
  double lambda_e = 0.0;
};

/// Checks that target is a joint eigenvector of M_g and M_e (in the tracked
/// frame when the setup uses phase tracking).
inline StabilizabilityReport verify_stabilizable(const Ket& target, const MeasurementSetup& setup,
                                                 double tol = 1e-10) {
  const MeasurementOps ops = build_ops(setup, target.dim());
  StabilizabilityReport rep;
  const CVector& v = target.amplitudes();
  auto check = [&](Outcome o, double& lambda, double& residual) {
    const RVector m = ops.tracked_diag(o);
    const CVector mv = v.cwiseProduct(m.cast<cplx>());
    lambda = v.dot(mv).real();
    residual = (mv - lambda * v).norm();
  };
  check(Outcome::g, rep.lambda_g, rep.residual_g);
  check(Outcome::e, rep.lambda_e, rep.residual_e);
  rep.stabilizable = rep.residual_g < tol && rep.residual_e < tol;
  return rep;
}

}  // namespace fockfb
