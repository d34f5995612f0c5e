/* Copyright 2026 The rtdetr-desk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef RTDETR_ERRORS_HPP_
#define RTDETR_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace rtdetr {

// Base class for every error raised by the library. The CLI maps these to
// exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or image extents do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A configuration invariant is violated (head divisibility, unknown key, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An API precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// More rows than columns handed to the matcher, or more ground truths than
// queries.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// Exhaustive oracle asked to enumerate beyond its guard.
class SizeError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed file content. Carries the 1-based line number when known.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what, long line = 0)
      : Error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  long line() const noexcept { return line_; }

 private:
  long line_;
};

}  // namespace rtdetr

#endif  // RTDETR_ERRORS_HPP_
