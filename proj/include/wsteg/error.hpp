#pragma once

#include <stdexcept>
#include <string>

namespace wsteg {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad caller input: out-of-range LSB count, empty payload, unknown zoo id...
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated bytes on disk.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Well-formed input the library does not handle (f16 image rep, PGM maxval).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// Payload does not fit in the cover (the k > n*X branch).
class CapacityError : public Error {
 public:
  using Error::Error;
};

}  // namespace wsteg
