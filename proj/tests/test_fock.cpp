#include <gtest/gtest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include "helpers.hpp"

using namespace fockfb;
using namespace fockfb::testing;

namespace {

double poisson(double lambda, int n) { return std::exp(n * std::log(lambda) - lambda - std::lgamma(n + 1.0)); }

CMatrix expm_displacement(const FockSpace& s, cplx alpha) {
  const CMatrix gen = alpha * s.creation() - std::conj(alpha) * s.annihilation();
  return gen.exp();
}

}  // namespace

TEST(FockSpace, RejectsTinyDimension) {
  EXPECT_THROW(FockSpace(1), std::invalid_argument);
  EXPECT_NO_THROW(FockSpace(2));
}

TEST(FockSpace, LadderMatrixElements) {
  const FockSpace s(3);
  CMatrix expect = CMatrix::Zero(3, 3);
  expect(0, 1) = 1.0;
  expect(1, 2) = std::sqrt(2.0);
  EXPECT_EQ(annihilation(s), expect);
  EXPECT_EQ(creation(s), CMatrix(expect.adjoint()));
  const CMatrix n = s.creation() * s.annihilation();
  EXPECT_LT((n.diagonal().real() - RVector((RVector(3) << 0, 1, 2).finished())).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT(max_abs_diff(number(s), n), 1e-15);
}

TEST(FockSpace, CommutatorIsIdentityBelowTopLevel) {
  const FockSpace s(12);
  const CMatrix c = s.annihilation() * s.creation() - s.creation() * s.annihilation();
  EXPECT_LT(max_abs_diff(c.topLeftCorner(11, 11), CMatrix::Identity(11, 11)), 1e-14);
  EXPECT_NEAR(c(11, 11).real(), -11.0, 1e-12);
}

TEST(Displacement, ZeroIsIdentity) {
  const FockSpace s(30);
  const auto d = displacement(s, 0.0);
  EXPECT_EQ(d.op, CMatrix::Identity(30, 30));
  EXPECT_FALSE(d.truncation_warning);
}

TEST(Displacement, MatchesMatrixExponential) {
  const FockSpace s(30);
  for (cplx alpha : {cplx(0.3, 0.0), cplx(-0.7, 0.4), cplx(1.2, -0.9), cplx(0.0, 2.0)}) {
    const CMatrix ref = expm_displacement(s, alpha);
    EXPECT_LT(max_abs_diff(displacement(s, alpha).op, ref), 1e-10) << alpha;
  }
}

TEST(Displacement, CoherentColumnIsPoisson) {
  const FockSpace s(30);
  const cplx alpha = std::polar(1.0, 0.7);
  const CMatrix d = displacement(s, alpha).op;
  for (int n = 0; n < 30; ++n) EXPECT_NEAR(std::norm(d(n, 0)), poisson(1.0, n), 1e-8) << n;
  // Analytic amplitudes e^{-|a|^2/2} a^n / sqrt(n!).
  for (int n = 0; n < 15; ++n) {
    const cplx amp = std::exp(-0.5) * std::pow(alpha, n) / std::sqrt(std::tgamma(n + 1.0));
    EXPECT_LT(std::abs(d(n, 0) - amp), 1e-8) << n;
  }
}

TEST(Displacement, InverseAndUnitarity) {
  const FockSpace s(30);
  const cplx alpha = std::polar(0.5, 1.1);
  const CMatrix d = displacement(s, alpha).op;
  const CMatrix dm = displacement(s, -alpha).op;
  EXPECT_LT(max_abs_diff(d * dm, CMatrix::Identity(30, 30)), 1e-10);
  for (double r : {0.5, 1.0, 2.0}) {
    const CMatrix u = displacement(s, std::polar(r, 0.3)).op;
    EXPECT_LT(max_abs_diff(u * u.adjoint(), CMatrix::Identity(30, 30)), 1e-10) << r;
  }
}

TEST(Displacement, KetPathMatchesOperator) {
  const FockSpace s(30);
  std::mt19937_64 rng(3);
  const Ket psi = random_ket(30, rng);
  const cplx alpha(0.4, -0.2);
  const CVector ref = displacement(s, alpha).op * psi.amplitudes();
  EXPECT_LT((displace(s, psi, alpha).amplitudes() - ref).norm(), 1e-12);
}

TEST(Displacement, TruncationWarningFiresNearEdge) {
  const FockSpace s(30);
  EXPECT_FALSE(displacement(s, 1.0).truncation_warning);
  EXPECT_FALSE(displacement(s, 2.0).truncation_warning);
  EXPECT_TRUE(displacement(s, 4.0).truncation_warning);
  EXPECT_TRUE(displacement(s, cplx(0.0, 5.0)).truncation_warning);
  // A state already sitting near the edge warns even for a small step.
  const auto near_edge = apply_displacement(s, DensityMatrix::fock(30, 27), 0.1);
  EXPECT_TRUE(near_edge.truncation_warning);
  const auto far = apply_displacement(s, DensityMatrix::fock(30, 3), 0.1);
  EXPECT_FALSE(far.truncation_warning);
}

TEST(ApplyDisplacement, ZeroAlphaKeepsRho) {
  const FockSpace s(30);
  std::mt19937_64 rng(5);
  const DensityMatrix rho = random_density(30, rng);
  EXPECT_LT(max_abs_diff(apply_displacement(s, rho, 0.0).rho.matrix(), rho.matrix()), 1e-15);
}

TEST(ApplyDisplacement, VacuumGivesPoissonAndMeanPhoton) {
  const FockSpace s(30);
  const DensityMatrix out = apply_displacement(s, DensityMatrix::fock(30, 0), 1.0).rho;
  for (int n = 0; n < 30; ++n) EXPECT_NEAR(out(n, n).real(), poisson(1.0, n), 1e-8);
  EXPECT_NEAR(mean_photon(out), 1.0, 1e-8);
  const DensityMatrix out2 = apply_displacement(s, DensityMatrix::fock(30, 0), std::polar(1.3, 2.0)).rho;
  EXPECT_NEAR(mean_photon(out2), 1.69, 1e-8);
}

TEST(ApplyDisplacement, PreservesTraceAndHermiticityOnRandomInputs) {
  const FockSpace s(30);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst_trace = 0.0, worst_herm = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const DensityMatrix rho = random_density(30, rng, 2, 6);
    cplx alpha(u(rng), u(rng));
    if (std::abs(alpha) > 1.0) alpha /= std::abs(alpha);
    // Unnormalized conjugation, so the check sees the operator's own error.
    const CMatrix d = displacement(s, alpha).op;
    const CMatrix out = d * rho.matrix() * d.adjoint();
    worst_trace = std::max(worst_trace, std::abs(out.trace().real() - 1.0));
    const DensityMatrix norm = apply_displacement(s, rho, alpha).rho;
    worst_herm = std::max(worst_herm, norm.hermiticity_error());
  }
  EXPECT_LT(worst_trace, 1e-10);
  EXPECT_LT(worst_herm, 1e-12);
}

TEST(Fidelity, PureCases) {
  const Ket psi = Ket::superposition(10, {{1, 1.0}, {4, 1.0}});
  const Ket phi = Ket::superposition(10, {{1, 1.0}, {4, -1.0}});
  EXPECT_NEAR(fidelity_pure(DensityMatrix::pure(psi), psi), 1.0, 1e-15);
  EXPECT_NEAR(fidelity_pure(DensityMatrix::pure(phi), psi), 0.0, 1e-15);
  DensityMatrix mix(0.5 * DensityMatrix::pure(psi).matrix() + 0.5 * DensityMatrix::pure(phi).matrix());
  EXPECT_NEAR(fidelity_pure(mix, psi), 0.5, 1e-15);
}

TEST(Fidelity, GeneralSpecialCases) {
  std::mt19937_64 rng(7);
  const DensityMatrix rho = random_density(12, rng);
  EXPECT_NEAR(fidelity_general(rho, rho), 1.0, 1e-8);
  const Ket a = random_ket(12, rng), b = random_ket(12, rng);
  const double overlap = std::norm(a.amplitudes().dot(b.amplitudes()));
  EXPECT_NEAR(fidelity_general(DensityMatrix::pure(a), DensityMatrix::pure(b)), overlap, 1e-8);
}

TEST(Fidelity, MaximallyMixedQubitAgainstVacuum) {
  // 2x2 closed form: sqrt(rho) = I/sqrt2, sqrt(rho)|0><0|sqrt(rho) = |0><0|/2,
  // trace of its square root = 1/sqrt2, squared = 1/2.
  CMatrix m = CMatrix::Zero(4, 4);
  m(0, 0) = m(1, 1) = 0.5;
  EXPECT_NEAR(fidelity_general(DensityMatrix(m), DensityMatrix::fock(4, 0)), 0.5, 1e-10);
}

TEST(Fidelity, GeneralMatchesPureAndIsSymmetric) {
  std::mt19937_64 rng(17);
  for (int k = 0; k < 50; ++k) {
    const DensityMatrix rho = random_density(30, rng);
    const Ket psi = random_ket(30, rng);
    const DensityMatrix sigma = random_density(30, rng);
    EXPECT_NEAR(fidelity_general(rho, DensityMatrix::pure(psi)), fidelity_pure(rho, psi), 1e-10);
    EXPECT_NEAR(fidelity_general(rho, sigma), fidelity_general(sigma, rho), 1e-8);
  }
}

TEST(Fidelity, NegativeEigenvalueIsNumericalFailure) {
  CMatrix m = CMatrix::Zero(3, 3);
  m(0, 0) = 1.1;
  m(1, 1) = -0.1;
  EXPECT_THROW(fidelity_general(DensityMatrix(m), DensityMatrix::fock(3, 0)), NumericalFailure);
}

TEST(MeanPhoton, Examples) {
  const FockSpace s(30);
  EXPECT_EQ(mean_photon(DensityMatrix::fock(30, 0)), 0.0);
  EXPECT_NEAR(mean_photon(coherent_state(s, 1.0)), 1.0, 1e-8);
  EXPECT_NEAR(mean_photon(benchmark_target()), 2.5, 1e-14);
}

TEST(KetAndRho, NormalizationInvariants) {
  Ket k(CVector::Constant(5, cplx(3.0, 4.0)));
  k.normalize();
  EXPECT_NEAR(k.norm(), 1.0, 1e-12);
  EXPECT_THROW(Ket(CVector::Zero(4)).normalize(), NumericalFailure);
  std::mt19937_64 rng(2);
  CMatrix m = random_density(10, rng).matrix() * 3.0;
  m(0, 1) += 1e-3;
  DensityMatrix rho(m);
  rho.normalize();
  EXPECT_NEAR(rho.trace(), 1.0, 1e-10);
  EXPECT_LT(rho.hermiticity_error(), 1e-12);
  EXPECT_GT(random_density(10, rng).min_eigenvalue(), -1e-10);
}
