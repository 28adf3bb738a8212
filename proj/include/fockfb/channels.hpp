#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "fockfb/fock.hpp"
#include "fockfb/measurement.hpp"
#include "fockfb/rng.hpp"

namespace fockfb {

/// Cavity decay and probe-readout imperfections.
///
/// t_cav = +inf disables decay. eps_probe is an extra symmetric flip
/// probability added to both assignment errors.
struct NoiseParams {
  double t_cav = std::numeric_limits<double>::infinity();
  double t_cycle = 1e-6;
  double eta_e_given_g = 0.0;
  double eta_g_given_e = 0.0;
  double eps_probe = 0.0;

  static NoiseParams none() { return {}; }

  double kappa() const { return std::isinf(t_cav) ? 0.0 : 1.0 / t_cav; }
  double ratio() const { return t_cycle * kappa(); }
  double flip_g_to_e() const { return std::min(eta_e_given_g + eps_probe, 1.0); }
  double flip_e_to_g() const { return std::min(eta_g_given_e + eps_probe, 1.0); }
  bool has_decay() const { return kappa() > 0.0; }
  bool has_readout_error() const { return flip_g_to_e() > 0.0 || flip_e_to_g() > 0.0; }
  bool is_noiseless() const { return !has_decay() && !has_readout_error(); }

  void validate() const {
    auto prob = [](double p, const char* name) {
      if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument(std::string("NoiseParams: ") + name + " outside [0,1)");
    };
    prob(eta_e_given_g, "eta_e_given_g");
    prob(eta_g_given_e, "eta_g_given_e");
    prob(eps_probe, "eps_probe");
    if (!(t_cav > 0.0)) throw std::invalid_argument("NoiseParams: t_cav must be > 0");
    if (!(t_cycle > 0.0) || !std::isfinite(t_cycle)) throw std::invalid_argument("NoiseParams: t_cycle must be > 0");
    if (!(ratio() < 0.1))
      throw std::invalid_argument("NoiseParams: t_cycle/t_cav must stay below 0.1 for the first-order model");
  }
};

/// kappa (a rho a^dag - (N rho + rho N)/2).
inline CMatrix lindblad_rhs(const DensityMatrix& rho, double kappa) {
  const int d = rho.dim();
  const CMatrix& r = rho.matrix();
  CMatrix out(d, d);
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < d; ++i) {
      cplx jump = 0.0;
      if (i + 1 < d && j + 1 < d) jump = std::sqrt(static_cast<double>((i + 1) * (j + 1))) * r(i + 1, j + 1);
      out(i, j) = kappa * (jump - 0.5 * (i + j) * r(i, j));
    }
  }
  return out;
}

/// First-order decay over one feedback cycle: (1 + t_cycle L) rho.
inline DensityMatrix filter_decay_step(const DensityMatrix& rho, const NoiseParams& noise) {
  if (!noise.has_decay()) return rho;
  if (!(noise.ratio() < 0.1)) throw std::invalid_argument("filter_decay_step: t_cycle/t_cav must be < 0.1");
  DensityMatrix out(rho.matrix() + noise.t_cycle * lindblad_rhs(rho, noise.kappa()));
  out.normalize();
  return out;
}

template <class State>
struct JumpStep {
  State state;
  bool jumped = false;
};

/// Matrix element <n-k|A_k|n> of the amplitude-damping Kraus operator that
/// removes k photons over one cycle, eta = exp(-kappa dt).
inline double damping_kraus(int n, int k, double ratio) {
  if (k < 0 || k > n) return 0.0;
  if (k == 0) return std::exp(-0.5 * ratio * n);
  const double log_binom = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
  return std::exp(0.5 * (log_binom - ratio * (n - k) + k * std::log(-std::expm1(-ratio))));
}

/// One-cycle Monte Carlo unraveling of the decay master equation: jump with
/// probability 1 - |exp(-kappa dt N / 2) psi|^2, otherwise no-jump evolution.
/// On a jump the number of lost photons k >= 1 is drawn from |A_k psi|^2, so
/// the post-jump state carries the damping of the rest of the cycle and the
/// ensemble matches the exact one-cycle channel.
inline JumpStep<Ket> true_decay_step(const Ket& psi, const NoiseParams& noise, Rng& rng) {
  if (!noise.has_decay()) return {psi, false};
  const double r = noise.ratio();
  const int d = psi.dim();
  const double norm = psi.amplitudes().squaredNorm();
  CVector nojump = psi.amplitudes();
  for (int n = 1; n < d; ++n) nojump(n) *= damping_kraus(n, 0, r);
  const double p_jump = std::max(0.0, 1.0 - nojump.squaredNorm() / norm);
  if (p_jump > 0.0 && bernoulli(rng, p_jump)) {
    const double u = uniform01(rng) * p_jump * norm;
    double acc = 0.0;
    CVector v;
    for (int k = 1; k < d; ++k) {
      CVector b = CVector::Zero(d);
      for (int n = k; n < d; ++n) b(n - k) = damping_kraus(n, k, r) * psi[n];
      const double pk = b.squaredNorm();
      if (pk > 0.0) v = std::move(b);
      acc += pk;
      if (acc >= u && pk > 0.0) break;
    }
    Ket out(std::move(v));
    out.normalize();
    return {std::move(out), true};
  }
  Ket out(std::move(nojump));
  out.normalize();
  return {std::move(out), false};
}

inline JumpStep<DensityMatrix> true_decay_step(const DensityMatrix& rho, const NoiseParams& noise, Rng& rng) {
  if (!noise.has_decay()) return {rho, false};
  const double r = noise.ratio();
  const int d = rho.dim();
  const double tr = rho.trace();
  RVector k0(d);
  for (int n = 0; n < d; ++n) k0(n) = damping_kraus(n, 0, r);
  CMatrix nojump = k0.cast<cplx>().asDiagonal() * rho.matrix() * k0.cast<cplx>().asDiagonal();
  const double p_jump = std::max(0.0, 1.0 - nojump.trace().real() / tr);
  if (p_jump > 0.0 && bernoulli(rng, p_jump)) {
    const double u = uniform01(rng) * p_jump * tr;
    auto branch = [&](int k) {
      CMatrix a = CMatrix::Zero(d, d);
      for (int n = k; n < d; ++n) a(n - k, n) = damping_kraus(n, k, r);
      return CMatrix(a * rho.matrix() * a.adjoint());
    };
    double acc = 0.0;
    CMatrix j;
    for (int k = 1; k < d; ++k) {
      CMatrix b = branch(k);
      const double pk = b.trace().real();
      if (pk > 0.0) j = std::move(b);
      acc += pk;
      if (acc >= u && pk > 0.0) break;
    }
    if (j.size() == 0) j = branch(1);
    DensityMatrix out(std::move(j));
    out.normalize();
    return {std::move(out), true};
  }
  DensityMatrix out(std::move(nojump));
  out.normalize();
  return {std::move(out), false};
}

/// Reported probe outcome given the true one.
inline Outcome sample_readout(Outcome truth, const NoiseParams& noise, Rng& rng) {
  const double p_flip = truth == Outcome::g ? noise.flip_g_to_e() : noise.flip_e_to_g();
  if (p_flip <= 0.0) return truth;
  return bernoulli(rng, p_flip) ? flipped(truth) : truth;
}

struct BayesWeights {
  double correct = 1.0;
  double flipped = 0.0;
  /// Unnormalized probability of the reported outcome.
  double evidence = 1.0;
};

/// Posterior over the true outcome given the reported one.
///
/// For a reported e the flipped hypothesis (true g) has weight
/// eta_{e|g} p_g / (eta_{e|g} p_g + (1 - eta_{g|e}) p_e), and symmetrically
/// for a reported g.
inline BayesWeights bayes_weights(double p_g, double p_e, const NoiseParams& noise, Outcome reported) {
  const double flip_ge = noise.flip_g_to_e();
  const double flip_eg = noise.flip_e_to_g();
  double w_correct = 0.0;
  double w_flipped = 0.0;
  if (reported == Outcome::e) {
    w_correct = (1.0 - flip_eg) * p_e;
    w_flipped = flip_ge * p_g;
  } else {
    w_correct = (1.0 - flip_ge) * p_g;
    w_flipped = flip_eg * p_e;
  }
  const double tot = w_correct + w_flipped;
  if (!(tot > 0.0)) return {0.0, 0.0, 0.0};
  return {w_correct / tot, w_flipped / tot, tot};
}

}  // namespace fockfb
