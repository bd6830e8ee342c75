// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace vdcnn {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor extents disagree with what an operation requires.
struct DimensionError : Error {
  using Error::Error;
};

/// Pooling extent does not divide the input and truncation was not requested.
struct DivisibilityError : Error {
  using Error::Error;
};

struct IndexError : Error {
  using Error::Error;
};

/// A loss, gradient or recurrent state became NaN or infinite.
struct DivergenceError : Error {
  using Error::Error;
};

/// Shape derivation through an architecture failed at some layer.
struct ShapeError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct DomainError : Error {
  using Error::Error;
};

struct FusionError : Error {
  using Error::Error;
};

struct EmptyInputError : Error {
  using Error::Error;
};

struct UndefinedMetricError : Error {
  using Error::Error;
};

/// Malformed archive, checkpoint or text spec.
struct FormatError : Error {
  using Error::Error;
};

}  // namespace vdcnn
