// Copyright 2026 The peftsearch Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PEFTSEARCH_ERRORS_HPP_
#define PEFTSEARCH_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace peftsearch {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidSpaceError : public Error {
 public:
  using Error::Error;
};

class InvalidConfigurationError : public Error {
 public:
  using Error::Error;
};

class EncodingError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// Failure reported by (or while talking to) an evaluation backend.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. line() is 1-based; 0 when the error is not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DuplicateKeyError : public ParseError {
 public:
  using ParseError::ParseError;
};

// Persisted run state does not belong to the requested run.
class StateMismatchError : public Error {
 public:
  using Error::Error;
};

}  // namespace peftsearch

#endif  // PEFTSEARCH_ERRORS_HPP_
