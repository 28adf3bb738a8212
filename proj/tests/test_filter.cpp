#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace fockfb;
using namespace fockfb::testing;

TEST(InitEpisode, CoherentGuess) {
  const FockSpace s(30);
  const Ket t = benchmark_target();
  const cplx g = alpha_guess(t);
  EXPECT_NEAR(std::abs(g), std::sqrt(2.5), 1e-12);
  EXPECT_NEAR(std::arg(g), 0.0, 1e-12);
  const FilterState st = init_episode(t, s);
  EXPECT_NEAR(fidelity_pure(st.rho, coherent_state(s, std::sqrt(2.5))), 1.0, 1e-12);
  EXPECT_EQ(st.step, 0);

  const FilterState vac = init_episode(Ket::fock(30, 0), s);
  EXPECT_NEAR(vac.rho(0, 0).real(), 1.0, 1e-15);

  const Ket phased = Ket::superposition(30, {{1, 1.0}, {4, cplx(0.0, 1.0)}});
  EXPECT_NEAR(std::arg(alpha_guess(phased)), kPi / 2, 1e-12);
}

TEST(InitEpisode, RejectsBadTarget) {
  const FockSpace s(30);
  EXPECT_THROW(init_episode(Ket::fock(10, 0), s), ShapeMismatch);
  EXPECT_THROW(init_episode(Ket(CVector::Constant(30, 1.0)), s), std::invalid_argument);
}

TEST(IdealStep, ZeroAlphaKeepsSubspaceState) {
  const FockSpace s(30);
  const auto ops = build_ops(build_setup(3, 1), s);
  FilterState st{DensityMatrix::pure(benchmark_target()), RVector::Ones(30), 0};
  for (Outcome o : {Outcome::g, Outcome::e}) {
    const FilterState next = ideal_step(s, st, 0.0, o, ops);
    EXPECT_LT(max_abs_diff(next.rho.matrix(), st.rho.matrix()), 1e-10);
    EXPECT_EQ(next.step, 1);
  }
}

TEST(IdealStep, HandComposedOracle) {
  const FockSpace s(30);
  const auto setup = build_setup(3, 1);
  const auto ops = build_ops(setup, s);
  FilterState st{DensityMatrix::fock(30, 0), RVector::Ones(30), 0};
  const FilterState next = ideal_step(s, st, 1.0, Outcome::g, ops);
  // Oracle: displace the vacuum ket, multiply by cos((phi0 n - phi_r)/2), normalize.
  CVector v = displacement(s, 1.0).op.col(0);
  for (int n = 0; n < 30; ++n) v(n) *= std::cos((setup.phi0 * n - setup.phi_r) / 2);
  v.normalize();
  EXPECT_LT(max_abs_diff(next.rho.matrix(), v * v.adjoint()), 1e-12);
}

TEST(IdealStep, ReplayIsBitIdentical) {
  const FockSpace s(30);
  const auto ops = build_ops(build_setup(3, 1), s);
  auto run = [&] {
    FilterState st = init_episode(benchmark_target(), s);
    const cplx alphas[] = {0.1, cplx(0.0, -0.2), 0.05, cplx(0.3, 0.1)};
    const Outcome outs[] = {Outcome::g, Outcome::e, Outcome::e, Outcome::g};
    for (int k = 0; k < 4; ++k) st = ideal_step(s, st, alphas[k], outs[k], ops);
    return st.rho.matrix();
  };
  EXPECT_EQ(run(), run());
}

TEST(NoisyStep, Reductions) {
  const FockSpace s(30);
  const auto ops = build_ops(build_setup(3, 1), s);
  std::mt19937_64 rng(21);
  FilterState st{random_density(30, rng), RVector::Ones(30), 3};
  const cplx alpha(0.2, -0.1);
  for (Outcome o : {Outcome::g, Outcome::e}) {
    const FilterState ideal = ideal_step(s, st, alpha, o, ops);
    const FilterState noisy = noisy_step(s, st, alpha, o, ops, NoiseParams::none());
    EXPECT_LT(max_abs_diff(ideal.rho.matrix(), noisy.rho.matrix()), 1e-12);

    NoiseParams n;
    n.t_cav = 1e-3;
    const DensityMatrix composed =
        back_action(ops, filter_decay_step(apply_displacement(s, st.rho, alpha).rho, n), o);
    EXPECT_LT(max_abs_diff(noisy_step(s, st, alpha, o, ops, n).rho.matrix(), composed.matrix()), 1e-12);
  }
}

TEST(NoisyStep, OutputIsValidDensity) {
  const FockSpace s(30);
  const auto ops = build_ops(build_setup(3, 1), s);
  NoiseParams n;
  n.t_cav = 1e-3;
  n.eta_e_given_g = 0.01;
  n.eta_g_given_e = 0.02;
  std::mt19937_64 rng(22);
  FilterState st{random_density(30, rng), RVector::Ones(30), 0};
  for (int k = 0; k < 100; ++k) {
    st = noisy_step(s, st, cplx(0.05, 0.02), k % 3 ? Outcome::g : Outcome::e, ops, n);
    EXPECT_NEAR(st.rho.trace(), 1.0, 1e-10);
    EXPECT_LT(st.rho.hermiticity_error(), 1e-12);
    EXPECT_GT(st.rho.min_eigenvalue(), -1e-10);
  }
}

TEST(NoisyStep, ImpossibleReportThrows) {
  const FockSpace s(5);
  MeasurementSetup setup;
  setup.delta_n = 1;
  setup.phi0 = 4 * kPi;
  setup.phi_r = 0.0;
  const auto ops = build_ops(setup, s);
  FilterState st{DensityMatrix::fock(5, 0), RVector::Ones(5), 0};
  EXPECT_THROW(noisy_step(s, st, 0.0, Outcome::e, ops, NoiseParams::none()), ZeroProbabilityOutcome);
}

TEST(NoisyStep, FilterRecoversAfterUnreportedJump) {
  // The truth loses a photon; the filter sees only the following outcomes.
  const FockSpace s(30);
  const auto ops = build_ops(build_setup(3, 1), s);
  NoiseParams n;
  n.t_cav = 1e-3;
  int recovered = 0;
  const int seeds = 50;
  for (int seed = 0; seed < seeds; ++seed) {
    Rng rng = make_rng(99, static_cast<std::uint64_t>(seed));
    const Ket start = benchmark_target();
    FilterState st{DensityMatrix::pure(start), RVector::Ones(30), 0};
    CVector jumped = s.annihilation() * start.amplitudes();
    Ket truth(jumped);
    truth.normalize();
    bool ok = false;
    for (int k = 0; k < 40 && !ok; ++k) {
      const auto p = outcome_probs(ops, truth);
      const Outcome o = uniform01(rng) < p.g ? Outcome::g : Outcome::e;
      truth = back_action(ops, truth, o);
      st = noisy_step(s, st, 0.0, o, ops, n);
      ok = fidelity_pure(st.rho, truth) > 0.99;
    }
    recovered += ok;
  }
  EXPECT_GE(recovered, seeds * 9 / 10);
}

TEST(PhaseTracking, TargetStaysStabilizableInTrackedFrame) {
  const FockSpace s(30);
  const auto setup = build_setup(4, 0);
  const auto ops = build_ops(setup, s);
  const Ket t = Ket::superposition(30, {{0, 1.0}, {4, 1.0}, {8, 0.5}});
  FilterState st{DensityMatrix::pure(t), RVector::Ones(30), 0};
  Rng rng = make_rng(4, 0);
  for (int k = 0; k < 25; ++k) {
    st = ideal_step(s, st, 0.0, bernoulli(rng, 0.5) ? Outcome::g : Outcome::e, ops);
    // The lab-frame state alternates; the tracked view is the target itself.
    EXPECT_NEAR(fidelity_pure(st.tracked(), t), 1.0, 1e-10);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(st.tracked().matrix());
    Ket top(CVector(es.eigenvectors().col(s.dim() - 1)));
    EXPECT_TRUE(verify_stabilizable(top, setup).stabilizable);
  }
}
