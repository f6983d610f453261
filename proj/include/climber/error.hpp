#pragma once

#include <stdexcept>
#include <string>

namespace climber {

// Every failure surfaced by the library derives from Error so callers can
// catch one type and still tell the categories apart.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed arguments: mismatched lengths, empty sets, non-finite values.
class InputError : public Error {
 public:
  using Error::Error;
};

// Parameter combinations that cannot be honoured (w > n, m > r, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class BuildError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class QueryError : public Error {
 public:
  using Error::Error;
};

}  // namespace climber
