#pragma once

#include <stdexcept>
#include <string>

namespace ptx {

// Runtime failure: bad input data, unreadable files, diverging training.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller misuse that a CLI should report as a usage error (exit code 2).
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace ptx
