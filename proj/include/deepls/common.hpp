#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace deepls {

// Network arithmetic precision. Geometry (positions, meshes, metrics) is
// always double; the decoder and optimizers run in Real.
#ifdef DEEPLS_DOUBLE_PRECISION
using Real = double;
#else
using Real = float;
#endif

template <typename T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Mat3 = Eigen::Matrix3d;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or flag values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Caller broke an API precondition (shape mismatch, stale tape, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Input data that cannot be used: empty point sets, malformed files.
class DataError : public Error {
 public:
  using Error::Error;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

// Optimization produced NaN/Inf.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace deepls
