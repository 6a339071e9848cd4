#pragma once

#include <stdexcept>
#include <string>

namespace forkpath {

// Base for all library errors. Subclasses exist so callers can react to a
// specific failure without parsing message strings.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidLogprobError : public Error {
 public:
  using Error::Error;
};

class DegenerateWeightsError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ProviderUnavailableError : public Error {
 public:
  using Error::Error;
};

class UnknownContextError : public Error {
 public:
  using Error::Error;
};

class MissingSiteError : public Error {
 public:
  using Error::Error;
};

class SpaceMismatchError : public Error {
 public:
  using Error::Error;
};

class SeriesTooShortError : public Error {
 public:
  using Error::Error;
};

class OracleTooLargeError : public Error {
 public:
  using Error::Error;
};

class InvalidHazardError : public Error {
 public:
  using Error::Error;
};

class EmptyStoreError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

// A run that stopped partway but left a resumable store/cache behind.
class AbortedRunError : public Error {
 public:
  using Error::Error;
};

class StoreFormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace forkpath
