#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace fockfb {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An eigenvalue or probability left its admissible range.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

/// A measurement outcome was requested that the state assigns (almost) zero
/// probability to.
class ZeroProbabilityOutcome : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public Error {
 public:
  using Error::Error;
};

/// Trajectory-tree depth above the memory guard.
class DepthLimit : public Error {
 public:
  using Error::Error;
};

/// Malformed bridge frame. The session that raised it stays usable.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fockfb
