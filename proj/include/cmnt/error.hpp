#pragma once

#include <stdexcept>
#include <string>

namespace cmnt {

/// Base error for everything thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (files, corpora, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace cmnt
