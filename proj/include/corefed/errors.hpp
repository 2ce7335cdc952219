#pragma once

#include <stdexcept>
#include <string>

namespace corefed {

// Base class for all library errors. Subclasses exist so callers can map
// failure kinds to exit codes or recover selectively.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error { using Error::Error; };
struct UnsupportedForKind : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };
struct NumericOverflow : Error { using Error::Error; };
struct DegenerateDirection : Error { using Error::Error; };
struct InvalidShape : Error { using Error::Error; };

// Utility cap violated: loss reached the cap, u = M - loss is no longer
// bounded away from zero.
struct NonPositiveUtility : Error { using Error::Error; };
struct EmptyProbeSet : Error { using Error::Error; };

struct AgentWithNoData : Error { using Error::Error; };
struct MissingColumn : Error { using Error::Error; };
struct MalformedRow : Error { using Error::Error; };
struct NonBinaryTarget : Error { using Error::Error; };

struct InvalidK : Error { using Error::Error; };
struct EmptyRound : Error { using Error::Error; };

struct TooManyAgents : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };
struct InvalidParams : Error { using Error::Error; };

// Malformed or inconsistent run configuration (CLI surface).
struct ConfigError : Error { using Error::Error; };

}  // namespace corefed
