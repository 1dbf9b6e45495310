#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pvred {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument was out of its documented domain (non-finite, bad rate, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Matrix or vector dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A synthetic-data spec violates its invariants (e.g. frequency above Nyquist).
class InvalidSpec : public Error {
 public:
  using Error::Error;
};

/// A sequence is too short to draw the requested clip.
class InsufficientLength : public Error {
 public:
  using Error::Error;
};

/// Backward was requested without the forward caches it needs.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input. line() is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Training produced a non-finite loss or gradient.
class TrainingDivergence : public Error {
 public:
  TrainingDivergence(const std::string& what, long iteration)
      : Error("iteration " + std::to_string(iteration) + ": " + what), iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

}  // namespace pvred
