#pragma once

#include <cmath>
#include <utility>

#include "fockfb/channels.hpp"
#include "fockfb/fock.hpp"
#include "fockfb/measurement.hpp"

namespace fockfb {

/// Recursive estimate of the cavity state.
///
/// rho is kept in the laboratory frame. frame holds the accumulated sign
/// (+1 or -1 per level) that even-spacing measurements imprint; it stays all
/// ones when phase tracking is off.
struct FilterState {
  DensityMatrix rho;
  RVector frame;
  int step = 0;

  /// rho seen from the tracked frame, frame * rho * frame.
  DensityMatrix tracked() const {
    if ((frame.array() == 1.0).all()) return rho;
    const CMatrix f = frame.cast<cplx>().asDiagonal();
    return DensityMatrix(f * rho.matrix() * f);
  }
};

/// Target expressed in the laboratory frame corresponding to `frame`.
inline Ket frame_target(const Ket& target, const RVector& frame) {
  return Ket(target.amplitudes().cwiseProduct(frame.cast<cplx>()));
}

/// sqrt(nbar) e^{i theta}, theta being the relative phase between the first
/// two populated components of the target.
inline cplx alpha_guess(const Ket& target) {
  const double nbar = mean_photon(target);
  const auto sup = target.support(1e-20);
  double theta = 0.0;
  if (sup.size() >= 2) theta = std::arg(target[sup[1]]) - std::arg(target[sup[0]]);
  return std::polar(std::sqrt(nbar), theta);
}

inline FilterState init_episode(const Ket& target, const FockSpace& space) {
  if (target.dim() != space.dim()) throw ShapeMismatch("init_episode: dimension mismatch");
  if (std::abs(target.norm() - 1.0) > 1e-10) throw std::invalid_argument("init_episode: target not normalized");
  FilterState st;
  st.rho = DensityMatrix::pure(coherent_state(space, alpha_guess(target)));
  st.frame = RVector::Ones(space.dim());
  st.step = 0;
  return st;
}

namespace detail {

inline void advance_frame(FilterState& st, const MeasurementOps& ops) {
  if (ops.phase_tracking) st.frame = st.frame.cwiseProduct(ops.frame_sign);
}

}  // namespace detail

/// Displacement only, no measurement: the pre-measurement adjustment.
inline FilterState adjust_step(const FockSpace& space, const FilterState& st, cplx alpha) {
  FilterState next;
  next.rho = apply_displacement(space, st.rho, alpha).rho;
  next.frame = st.frame;
  next.step = st.step + 1;
  return next;
}

/// rho <- M_s D(alpha) rho, the noiseless filter update.
inline FilterState ideal_step(const FockSpace& space, const FilterState& st, cplx alpha, Outcome outcome,
                              const MeasurementOps& ops) {
  FilterState next;
  const DensityMatrix displaced = apply_displacement(space, st.rho, alpha).rho;
  next.rho = back_action(ops, displaced, outcome);
  next.frame = st.frame;
  detail::advance_frame(next, ops);
  next.step = st.step + 1;
  return next;
}

/// rho <- P_s T D(alpha) rho: displacement, first-order decay, then the
/// Bayes-weighted mixture of both back-actions for the reported outcome.
inline FilterState noisy_step(const FockSpace& space, const FilterState& st, cplx alpha, Outcome reported,
                              const MeasurementOps& ops, const NoiseParams& noise) {
  FilterState next;
  const DensityMatrix displaced = apply_displacement(space, st.rho, alpha).rho;
  const DensityMatrix decayed = filter_decay_step(displaced, noise);
  const OutcomeProbs p = outcome_probs(ops, decayed);
  const BayesWeights w = bayes_weights(p.g, p.e, noise, reported);
  if (!(w.evidence > kMinOutcomeProbability))
    throw ZeroProbabilityOutcome(std::string("noisy_step: reported outcome ") + to_char(reported) +
                                 " has zero probability");
  if (w.flipped <= 0.0) {
    next.rho = back_action(ops, decayed, reported);
  } else if (w.correct <= 0.0) {
    next.rho = back_action(ops, decayed, flipped(reported));
  } else {
    const DensityMatrix a = back_action(ops, decayed, reported);
    const DensityMatrix b = back_action(ops, decayed, flipped(reported));
    next.rho = DensityMatrix(w.correct * a.matrix() + w.flipped * b.matrix());
    next.rho.normalize();
  }
  next.frame = st.frame;
  detail::advance_frame(next, ops);
  next.step = st.step + 1;
  return next;
}

}  // namespace fockfb
