#pragma once

#include <stdexcept>
#include <string>

namespace statmap {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// linalg
struct NotPositiveDefinite : Error { using Error::Error; };
struct InvalidSize : Error { using Error::Error; };

// model
struct ShapeMismatch : Error { using Error::Error; };
struct IndicatorViolation : Error { using Error::Error; };
struct RankDeficient : Error { using Error::Error; };

// glm
struct DegenerateVariance : Error { using Error::Error; };
struct Diverged : Error { using Error::Error; };

// svr
struct NonFinite : Error { using Error::Error; };
struct MaxIterations : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct NoFreeSupportVectors : Error { using Error::Error; };

// iglm
struct ZeroNorm : Error { using Error::Error; };
struct NotBinaryDesign : Error { using Error::Error; };

// inference
struct Unsolvable : Error { using Error::Error; };
struct DegenerateMask : Error { using Error::Error; };
struct EmptyMask : Error { using Error::Error; };
struct TooFewScores : Error { using Error::Error; };

// synth
struct InvalidSampling : Error { using Error::Error; };
struct InvalidSpec : Error { using Error::Error; };

// volume
struct UnsupportedDatatype : Error { using Error::Error; };
struct BadMagic : Error { using Error::Error; };
struct TruncatedFile : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct AllVoxelsFailed : Error { using Error::Error; };

// cli
struct ConfigError : Error { using Error::Error; };

}  // namespace statmap
