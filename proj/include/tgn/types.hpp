#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tgn {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVecX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatX<double>;
using Vector = VecX<double>;
using RowVector = RowVecX<double>;

/// Presence mask, true where a value is observed.
using MaskMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;
using MaskVector = Eigen::Matrix<bool, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

// Error taxonomy. Everything derives from tgn::Error so callers can catch once.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct InputError : Error {
  using Error::Error;
};
struct UsageError : Error {
  using Error::Error;
};
struct IngestError : Error {
  using Error::Error;
};
struct LoadError : Error {
  using Error::Error;
};
struct VersionError : LoadError {
  using LoadError::LoadError;
};
struct TrainingError : Error {
  using Error::Error;
};
struct MetricError : Error {
  using Error::Error;
};
struct AuditError : Error {
  using Error::Error;
};

}  // namespace tgn
