#pragma once

#include <stdexcept>
#include <string>

namespace poms {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// numerics
struct DimensionMismatch : Error { using Error::Error; };
struct NotSymmetric : Error { using Error::Error; };
struct DecompositionFailed : Error { using Error::Error; };
struct TooFewPoints : Error { using Error::Error; };
struct EmptySample : Error { using Error::Error; };
struct InsufficientData : Error { using Error::Error; };
struct InsufficientPoints : Error { using Error::Error; };

// policies and models
struct LengthMismatch : Error { using Error::Error; };
struct NonFiniteParams : Error { using Error::Error; };
struct EmptyCollection : Error { using Error::Error; };

// environments and archive
struct ShapeMismatch : Error { using Error::Error; };
struct NonFiniteDescriptor : Error { using Error::Error; };
struct EmptyArchive : Error { using Error::Error; };

// metrics and tooling
struct NoCurves : Error { using Error::Error; };
struct ConfigInvalid : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };

}  // namespace poms
