// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace peftbench {

// Root of every error the library throws. Subclasses map onto CLI exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Result would exceed a configured size cap.
class SizeError : public Error {
 public:
  using Error::Error;
};

// Inconsistent hyperparameters or model state (divisibility, double injection).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing input data (files, records, schemas).
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss during training.
class NumericAbort : public Error {
 public:
  using Error::Error;
};

// Post-condition check failed (e.g. merged model diverges from adapter model).
class VerificationError : public Error {
 public:
  using Error::Error;
};

}  // namespace peftbench
