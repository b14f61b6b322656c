#pragma once

#include <stdexcept>
#include <string>

namespace esc {

// Error taxonomy shared by the library and the CLI exit-code mapping.
// ArgumentError  -> bad caller input (ranges, empty lists, unknown flags)
// IoError        -> filesystem / stream failures
// FormatError    -> structurally invalid file contents (WAV, store, checkpoint)
// ParseError     -> malformed text input (CSV rows, config files); carries a line
// ShapeError     -> tensor/matrix dimension mismatches
// NumericError   -> NaN/Inf detected in a forward pass or training divergence
// EmptyInputError-> input too short/empty for the requested operation

class ArgumentError : public std::invalid_argument {
 public:
  explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

class EmptyInputError : public std::runtime_error {
 public:
  explicit EmptyInputError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace esc
