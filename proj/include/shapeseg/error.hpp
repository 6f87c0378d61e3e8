#pragma once

#include <stdexcept>
#include <string>

namespace shapeseg {

/// Root of every error thrown by the library. Each subclass names one
/// failure kind so callers can catch exactly the case they handle.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SHAPESEG_ERROR(Name)                   \
  class Name : public Error {                  \
   public:                                     \
    explicit Name(const std::string& what)     \
        : Error(#Name ": " + what) {}          \
  }

SHAPESEG_ERROR(ShapeMismatch);
SHAPESEG_ERROR(NotScalar);
SHAPESEG_ERROR(MissingGrad);
SHAPESEG_ERROR(InvalidConfig);
SHAPESEG_ERROR(InvalidParam);
SHAPESEG_ERROR(InvalidThreshold);
SHAPESEG_ERROR(InvalidFraction);
SHAPESEG_ERROR(EmptyBoundary);
SHAPESEG_ERROR(DegenerateFeatures);
SHAPESEG_ERROR(IndexOutOfRange);
SHAPESEG_ERROR(IoError);
SHAPESEG_ERROR(FormatError);
SHAPESEG_ERROR(UnknownKey);
SHAPESEG_ERROR(OutOfRange);

#undef SHAPESEG_ERROR

/// Malformed configuration text; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("ParseError: line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace shapeseg
