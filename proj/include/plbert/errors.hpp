// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace plbert {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad command-line usage or invalid configuration.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Input data that cannot be processed (empty lexicon, OOV-only corpus, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A file that does not match its declared on-disk format.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

/// Non-finite losses or parameters.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace plbert
