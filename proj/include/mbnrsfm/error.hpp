#pragma once

#include <stdexcept>
#include <string>

namespace mbnrsfm {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not agree (or a structural precondition is violated).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A numerical kernel failed: SVD / eigen non-convergence, singular Sylvester
// pencil, rank-deficient factorization, non-finite intermediate.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Invalid argument value (negative threshold, k out of range, bad config).
class ValueError : public Error {
 public:
  using Error::Error;
};

// Malformed text file. `line()` is 1-based; 0 means "not tied to a line".
// The message reads "<file>: line <n>: <detail>".
class ParseError : public Error {
 public:
  ParseError(const std::string& detail, std::size_t line, const std::string& file = {})
      : Error((file.empty() ? std::string() : file + ": ") +
              (line == 0 ? std::string() : "line " + std::to_string(line) + ": ") + detail),
        detail_(detail),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  std::size_t line_;
};

// File cannot be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// Run manifest is missing fields, references missing inputs or has a bad tag.
class ManifestError : public Error {
 public:
  using Error::Error;
};

}  // namespace mbnrsfm
