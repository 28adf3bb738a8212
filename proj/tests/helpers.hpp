#pragma once

#include <random>
#include <vector>

#include "fockfb/fockfb.hpp"

namespace fockfb::testing {

/// Random ket with Gaussian amplitudes on levels [0, max_level].
inline Ket random_ket(int dim, std::mt19937_64& rng, int max_level = 8) {
  std::normal_distribution<double> g;
  CVector v = CVector::Zero(dim);
  for (int n = 0; n <= std::min(max_level, dim - 1); ++n) v(n) = cplx(g(rng), g(rng));
  Ket k(v);
  k.normalize();
  return k;
}

/// Random ket supported on n = m (mod delta_n), n <= max_level.
inline Ket random_subspace_ket(int dim, int m, int delta_n, std::mt19937_64& rng, int max_level = 12) {
  std::normal_distribution<double> g;
  CVector v = CVector::Zero(dim);
  for (int n = m; n <= std::min(max_level, dim - 1); n += delta_n) v(n) = cplx(g(rng), g(rng));
  Ket k(v);
  k.normalize();
  return k;
}

/// Mixture of `rank` random kets with random weights.
inline DensityMatrix random_density(int dim, std::mt19937_64& rng, int rank = 3, int max_level = 8) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  CMatrix m = CMatrix::Zero(dim, dim);
  for (int r = 0; r < rank; ++r) {
    const Ket k = random_ket(dim, rng, max_level);
    m += u(rng) * k.amplitudes() * k.amplitudes().adjoint();
  }
  DensityMatrix rho(m);
  rho.normalize();
  return rho;
}

inline double max_abs_diff(const CMatrix& a, const CMatrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

inline Ket benchmark_target(int dim = 30) { return Ket::superposition(dim, {{1, 1.0}, {4, 1.0}}); }

}  // namespace fockfb::testing
