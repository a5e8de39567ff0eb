// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace textcap {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: shapes, missing fields, malformed files, misaligned rows.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf during optimization, zero-norm vectors where a direction is needed.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrorKind {
  kBadMagic,
  kUnsupportedVersion,
  kUnsupportedDtype,
  kTruncated,
  kNonFinite,
};

const char* to_string(FormatErrorKind kind);

// Binary container decode failure. Each failure mode has its own kind.
class FormatError : public ValidationError {
 public:
  FormatError(FormatErrorKind kind, const std::string& what)
      : ValidationError(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

// JSONL decode failure pointing at a 1-based line number.
class ParseError : public ValidationError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace textcap
