#pragma once

#include <stdexcept>
#include <string>

namespace mpdet {

// Base for all recoverable toolkit errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// rinex
class MalformedHeader : public Error {
 public:
  using Error::Error;
};
class MalformedEpoch : public Error {
 public:
  MalformedEpoch(const std::string& msg, long line)
      : Error(msg + " (line " + std::to_string(line) + ")"), line_number(line) {}
  long line_number;
};
class MalformedRecord : public Error {
 public:
  using Error::Error;
};
class VersionUnsupported : public Error {
 public:
  using Error::Error;
};

// orbits
class FitIntervalExceeded : public Error {
 public:
  using Error::Error;
};
class KeplerNonConvergence : public Error {
 public:
  using Error::Error;
};

// features
class NotConsecutive : public Error {
 public:
  using Error::Error;
};
class MissingObservation : public Error {
 public:
  using Error::Error;
};
class InsufficientSatellites : public Error {
 public:
  using Error::Error;
};

// scenesim
class NoVisibleSatellites : public Error {
 public:
  using Error::Error;
};
class InvalidScene : public Error {
 public:
  using Error::Error;
};

// ml
class EmptyNode : public Error {
 public:
  using Error::Error;
};
class InvalidParams : public Error {
 public:
  using Error::Error;
};
class InvalidGrid : public Error {
 public:
  using Error::Error;
};
class TooFewSamples : public Error {
 public:
  using Error::Error;
};
class CorruptModel : public Error {
 public:
  using Error::Error;
};

// eval
class TargetExceedsClassCount : public Error {
 public:
  using Error::Error;
};
class DegenerateSplit : public Error {
 public:
  using Error::Error;
};

}  // namespace mpdet
