#pragma once

#include <stdexcept>
#include <string>

namespace occ {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A config value violates an invariant. `field` is the dotted path of the
/// offending entry (e.g. "camera.focal_length").
struct ValidationError : Error {
    std::string field;
    ValidationError(std::string field_, const std::string& what_)
        : Error(field_ + ": " + what_), field(std::move(field_)) {}
};

/// A scenario file could not be parsed at all.
struct ParseError : Error {
    using Error::Error;
};

struct DegenerateBeacons : Error {
    using Error::Error;
};

struct NoRealSolution : Error {
    using Error::Error;
};

struct SingularNormalEquations : Error {
    using Error::Error;
};

struct NoValidCandidate : Error {
    using Error::Error;
};

struct RangeUnresolvable : Error {
    using Error::Error;
};

struct SingularInnovation : Error {
    using Error::Error;
};

struct GeometryInconsistent : Error {
    using Error::Error;
};

struct SyncLost : Error {
    using Error::Error;
};

struct TaillightOccluded : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace occ
