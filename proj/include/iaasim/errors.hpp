#pragma once

#include <stdexcept>
#include <string>

namespace iaasim {

/** Base class for every error the simulator raises deliberately. */
class SimError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/** Malformed arguments: negative totals, zero frequencies, unknown ids. */
class ValidationError : public SimError {
public:
  using SimError::SimError;
};

/** Operation is not legal in the entity's current state. */
class StateError : public SimError {
public:
  using SimError::SimError;
};

/** Request can never fit (exceeds total capacity) as opposed to "not right now". */
class UnfitError : public SimError {
public:
  using SimError::SimError;
};

/** Internal invariant broken; indicates a simulator bug, not a caller bug. */
class InternalError : public SimError {
public:
  using SimError::SimError;
};

} // namespace iaasim
