/*
 * Copyright 2026 The dcp Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef DCP_ERRORS_HPP_
#define DCP_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace dcp {

// Base of every error raised by the library. The C API maps each subclass to
// a distinct status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid construction parameters (layer sizes, variance, alpha, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent call arguments (dimension mismatch, bad label).
class InputError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or distributions that cannot be conditioned.
class NumericError : public Error {
 public:
  using Error::Error;
};

// The deferral policy left nothing to calibrate on.
class CalibrationError : public Error {
 public:
  CalibrationError(const std::string& what, double realized_deferral_rate)
      : Error(what), realized_deferral_rate_(realized_deferral_rate) {}
  double realized_deferral_rate() const { return realized_deferral_rate_; }

 private:
  double realized_deferral_rate_;
};

// File could not be opened or parsed.
class IoError : public Error {
 public:
  IoError(const std::string& what, std::string path)
      : Error(what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// Session protocol violations surfaced by the service layer.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

}  // namespace dcp

#endif  // DCP_ERRORS_HPP_
