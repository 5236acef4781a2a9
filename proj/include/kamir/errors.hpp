#pragma once

#include <stdexcept>
#include <string>

namespace kamir {

// Bad input data or a malformed artifact supplied by the caller. Maps to CLI
// exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Structurally broken binary/text file; the message carries a byte offset or
// line number where decoding stopped.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

// A violated internal invariant. Maps to CLI exit code 3.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

#define KAMIR_CHECK(cond, msg)                   \
  do {                                           \
    if (!(cond)) throw ::kamir::InternalError(msg); \
  } while (0)

}  // namespace kamir
